#pragma once

// HTTP/JSON facade over the classifier and the counterfactual engine.
//
//   POST /predict         sample                -> class probabilities
//   POST /counterfactual  CfRequest             -> CF, trajectory, narrative
//   GET  /schema                                -> feature schema
//   GET  /dataset/summary                       -> counts, class balance, ranges
//   GET  /health                                -> version and model fingerprint
//
// Handlers are plain functions from request body to (status, JSON) so they
// can be exercised without a socket; register_routes() binds them to a server.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <httplib.h>

#include "glytwin/domain.hpp"
#include "glytwin/engine.hpp"
#include "glytwin/error.hpp"
#include "glytwin/harness.hpp"
#include "glytwin/json_io.hpp"
#include "glytwin/metrics.hpp"
#include "glytwin/models/io.hpp"
#include "glytwin/models/knn.hpp"

namespace glytwin {

inline constexpr std::string_view kServiceVersion = "1.0.0";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string model_path;
  std::string dataset_path;
  std::string cors_origin = "*";
};

inline ServiceConfig service_config_from_json(const Json& j) {
  ServiceConfig c;
  const Json& s = j.contains("service") ? j.at("service") : j;
  try {
    c.host = s.value("host", c.host);
    c.port = s.value("port", c.port);
    c.model_path = s.value("model_path", c.model_path);
    c.dataset_path = s.value("dataset_path", c.dataset_path);
    c.cors_origin = s.value("cors_origin", c.cors_origin);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("service config: ") + e.what());
  }
  return c;
}

// 64-bit FNV-1a of a byte string, as 16 hex digits.
inline std::string fingerprint(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct ServiceState {
  FeatureSchema schema = default_schema();
  std::optional<LoadedModel> model;
  Predictor predictor;
  std::string model_fingerprint;
  std::vector<FactualSample> dataset;
  std::optional<FeatureRanges> ranges;
};

inline ServiceState make_state(std::optional<LoadedModel> model, std::string model_fingerprint,
                               std::vector<FactualSample> dataset) {
  ServiceState s;
  if (model) {
    s.predictor = model->predictor();
    s.model = std::move(model);
  }
  s.model_fingerprint = std::move(model_fingerprint);
  if (!dataset.empty()) s.ranges = compute_ranges(dataset);
  s.dataset = std::move(dataset);
  return s;
}

inline ServiceState load_state(const ServiceConfig& c) {
  std::optional<LoadedModel> model;
  std::string fp;
  if (!c.model_path.empty()) {
    const auto bytes = read_file_bytes(c.model_path);
    fp = fingerprint(bytes);
    try {
      model = model_from_json(Json::parse(bytes));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::Io, "'" + c.model_path + "': " + e.what());
    }
  }
  std::vector<FactualSample> data;
  if (!c.dataset_path.empty()) data = read_samples_csv(c.dataset_path);
  return make_state(std::move(model), std::move(fp), std::move(data));
}

struct ServiceResponse {
  int status = 200;
  Json body;
};

inline ServiceResponse error_response(int status, std::string_view code, const std::string& message,
                                      std::vector<std::string> details = {}) {
  Json j{{"error", code}, {"message", message}};
  if (!details.empty()) j["details"] = details;
  return {status, j};
}

inline std::optional<Json> parse_body(const std::string& body, ServiceResponse& err) {
  try {
    return Json::parse(body);
  } catch (const Json::exception& e) {
    err = error_response(400, "InvalidJson", e.what());
    return std::nullopt;
  }
}

inline Json proba_json(const Proba& p) {
  const bool hyper = argmax(p) == class_index(Outcome::Hyperglycemia);
  return {{"p_normoglycemia", p[0]},
          {"p_hyperglycemia", p[1]},
          {"predicted_class", hyper ? "hyperglycemia" : "normoglycemia"}};
}

// Accepts either a bare sample object or {"sample": {...}}.
inline ServiceResponse handle_predict(const ServiceState& s, const std::string& body) {
  if (!s.model) return error_response(503, "ModelNotLoaded", "no model loaded");
  ServiceResponse err;
  auto j = parse_body(body, err);
  if (!j) return err;
  const Json& sample_json = (j->is_object() && j->contains("sample") && j->size() == 1) ? j->at("sample") : *j;
  auto parsed = parse_sample(sample_json, s.schema);
  if (!parsed.ok()) return error_response(400, "InvalidSample", "sample failed validation", parsed.problems);
  try {
    return {200, proba_json(s.predictor.predict_proba(parsed.sample.features))};
  } catch (const Error& e) {
    return error_response(500, to_string(e.code()), e.detail());
  }
}

// Search bounds: personal when the patient has enough history in the loaded
// dataset, otherwise the dataset-wide ranges, otherwise the physical limits.
inline FeatureSchema request_schema(const ServiceState& s, const FactualSample& x) {
  if (!x.patient_id.empty()) {
    std::size_t n = 0;
    for (const auto& d : s.dataset) n += d.patient_id == x.patient_id;
    if (n >= kMinHistory) return personalize_bounds(s.schema, s.dataset, x.patient_id);
  }
  FeatureSchema out = s.schema;
  if (s.ranges) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!out[i].per_patient_bounds) continue;
      out[i].min = s.ranges->min[i];
      out[i].max = s.ranges->max[i];
    }
  }
  return out;
}

inline ServiceResponse handle_counterfactual(const ServiceState& s, const std::string& body) {
  if (!s.model) return error_response(503, "ModelNotLoaded", "no model loaded");
  ServiceResponse err;
  auto j = parse_body(body, err);
  if (!j) return err;
  if (!j->is_object()) return error_response(400, "InvalidRequest", "request must be a JSON object");
  static const std::set<std::string> known{"sample", "w_user", "w_physician", "gamma", "max_iter",
                                           "delta", "reject_trivial", "trajectory"};
  std::vector<std::string> problems;
  for (auto it = j->begin(); it != j->end(); ++it) {
    if (!known.count(it.key())) problems.push_back(it.key() + ": unknown field");
  }
  if (!j->contains("sample")) problems.push_back("sample: missing");
  if (!problems.empty()) return error_response(400, "InvalidRequest", "request failed validation", problems);

  auto parsed = parse_sample(j->at("sample"), s.schema);
  if (!parsed.ok()) return error_response(400, "InvalidSample", "sample failed validation", parsed.problems);
  const FactualSample& x = parsed.sample;

  CfParams params;
  bool reject_trivial = false;
  bool with_trajectory = true;
  try {
    params.schema = request_schema(s, x);
    params.gamma = j->value("gamma", params.gamma);
    params.max_iter = j->value("max_iter", params.max_iter);
    reject_trivial = j->value("reject_trivial", false);
    with_trajectory = j->value("trajectory", true);
    params.weights.user = weights_from_json(j->value("w_user", Json()), s.schema, params.weights.user);
    params.weights.physician = weights_from_json(j->value("w_physician", Json()), s.schema, params.weights.physician);
    if (j->contains("delta")) {
      const auto& d = j->at("delta");
      if (!d.is_object()) throw Error(ErrorCode::InvalidArgument, "delta must be an object keyed by feature name");
      for (auto it = d.begin(); it != d.end(); ++it) {
        const auto idx = s.schema.find(it.key());
        if (!idx || !s.schema[*idx].modifiable) {
          throw Error(ErrorCode::InvalidArgument, "delta: '" + it.key() + "' is not a modifiable feature");
        }
        const double v = it.value().get<double>();
        if (!(v > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta: '" + it.key() + "' must be > 0");
        params.schema[*idx].step = v;
      }
    }
    validate(params);
  } catch (const Error& e) {
    return error_response(400, to_string(e.code()), e.detail());
  } catch (const Json::exception& e) {
    return error_response(400, "InvalidRequest", e.what());
  }

  CounterfactualResult r;
  try {
    r = generate_counterfactual(s.predictor, x, params);
  } catch (const Error& e) {
    return error_response(500, to_string(e.code()), e.detail());
  }
  if (reject_trivial && r.iterations == 0 && r.converged) {
    return error_response(422, "AlreadyMeetsTarget", "the sample already meets the target confidence");
  }

  // Re-check the engine guarantees before anything leaves the server.
  for (std::size_t i = 0; i < s.schema.size(); ++i) {
    const double a = r.counterfactual.features[i];
    const double b = x.features[i];
    if (!params.schema[i].modifiable && a != b) {
      return error_response(500, "InvariantViolation", "non-modifiable feature '" + s.schema[i].name + "' changed");
    }
    if (params.schema[i].modifiable && (a < params.schema[i].min || a > params.schema[i].max)) {
      return error_response(500, "InvariantViolation", "feature '" + s.schema[i].name + "' left its bounds");
    }
  }

  Json effective = Json::object();
  for (auto i : s.schema.modifiable_indices()) {
    effective[s.schema[i].name] = params.weights.physician[i] + params.weights.user[i];
  }
  Json bounds = Json::object();
  for (auto i : s.schema.modifiable_indices()) {
    bounds[s.schema[i].name] = {{"min", params.schema[i].min}, {"max", params.schema[i].max}, {"step", params.schema[i].step}};
  }
  Json out{{"cf", to_json(r.counterfactual, s.schema)},
           {"converged", r.converged},
           {"termination", to_string(r.termination)},
           {"iterations", r.iterations},
           {"initial_confidence", r.initial_confidence},
           {"final_confidence", r.final_confidence},
           {"narrative", r.converged ? Json(narrate(x, r)) : Json(nullptr)},
           {"sparsity", static_cast<double>(changed_count(r.counterfactual.features, x.features))},
           {"proximity", s.ranges ? Json(proximity(r.counterfactual.features, x.features, *s.ranges, s.schema))
                                  : Json(nullptr)},
           {"effective_weights", effective},
           {"bounds", bounds},
           {"runtime_ms", r.wall_time * 1000.0}};
  if (with_trajectory) out["trajectory"] = trajectory_json(r, s.schema);
  return {200, out};
}

inline ServiceResponse handle_schema(const ServiceState& s) { return {200, to_json(s.schema)}; }

inline ServiceResponse handle_summary(const ServiceState& s) {
  std::size_t hyper = 0;
  std::set<std::string> patients;
  for (const auto& x : s.dataset) {
    hyper += x.outcome == Outcome::Hyperglycemia;
    patients.insert(x.patient_id);
  }
  const std::size_t n = s.dataset.size();
  Json ranges = Json::object();
  if (s.ranges) {
    for (std::size_t i = 0; i < s.schema.size(); ++i) {
      ranges[s.schema[i].name] = {{"min", s.ranges->min[i]}, {"max", s.ranges->max[i]}};
    }
  }
  return {200,
          {{"version", 1},
           {"samples", n},
           {"patients", patients.size()},
           {"class_balance",
            {{"normoglycemia", n - hyper},
             {"hyperglycemia", hyper},
             {"hyperglycemia_share", n ? static_cast<double>(hyper) / static_cast<double>(n) : 0.0}}},
           {"ranges", ranges}}};
}

inline ServiceResponse handle_health(const ServiceState& s) {
  Json model = nullptr;
  if (s.model) {
    model = {{"kind", s.model->kind}, {"fingerprint", s.model_fingerprint}, {"accuracy", s.model->report.accuracy}};
  }
  return {200,
          {{"status", s.model ? "ok" : "no_model"},
           {"version", kServiceVersion},
           {"model", model},
           {"dataset_samples", s.dataset.size()}}};
}

inline void register_routes(httplib::Server& server, const ServiceState& state, const std::string& cors_origin) {
  server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Post("/predict", [&state, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_predict(state, req.body));
  });
  server.Post("/counterfactual", [&state, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_counterfactual(state, req.body));
  });
  server.Get("/schema", [&state, reply](const httplib::Request&, httplib::Response& res) { reply(res, handle_schema(state)); });
  server.Get("/dataset/summary",
             [&state, reply](const httplib::Request&, httplib::Response& res) { reply(res, handle_summary(state)); });
  server.Get("/health", [&state, reply](const httplib::Request&, httplib::Response& res) { reply(res, handle_health(state)); });
}

// Config path from the argument, else $GLYTWIN_CONFIG.
inline ServiceConfig resolve_service_config(const std::string& path) {
  std::string p = path;
  if (p.empty()) {
    if (const char* env = std::getenv("GLYTWIN_CONFIG")) p = env;
  }
  if (p.empty()) return {};
  return service_config_from_json(read_json_file(p));
}

}  // namespace glytwin
