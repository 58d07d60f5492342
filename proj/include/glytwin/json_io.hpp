#pragma once

// JSON views of schema, samples and preference weights. Sample objects use
// the sample-CSV column names as keys.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glytwin/domain.hpp"
#include "glytwin/error.hpp"

namespace glytwin {

using Json = nlohmann::json;

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const FeatureSpec& f) {
  Json j;
  j["name"] = f.name;
  j["kind"] = f.kind == FeatureKind::Nominal ? "nominal" : "continuous";
  j["units"] = f.units;
  j["modifiable"] = f.modifiable;
  j["min"] = f.min;
  j["max"] = f.max;
  j["step"] = f.step;
  j["encoding"] = f.encoding == Encoding::OneHot ? "one_hot" : "identity";
  j["levels"] = f.levels;
  j["physical_min"] = finite_or_null(f.physical_min);
  j["physical_max"] = finite_or_null(f.physical_max);
  j["per_patient_bounds"] = f.per_patient_bounds;
  return j;
}

inline Json to_json(const FeatureSchema& s) {
  Json features = Json::array();
  for (const auto& f : s.features) features.push_back(to_json(f));
  return {{"version", 1}, {"features", features}};
}

inline std::vector<std::string> feature_names(const FeatureSchema& s) {
  std::vector<std::string> out;
  for (const auto& f : s.features) out.push_back(f.name);
  return out;
}

inline Json feature_values_json(const FeatureSchema& schema, std::span<const double> x) {
  Json j = Json::object();
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& f = schema[i];
    if (f.kind == FeatureKind::Nominal) {
      j[f.name] = f.levels.at(static_cast<std::size_t>(x[i]));
    } else {
      j[f.name] = x[i];
    }
  }
  return j;
}

inline Json to_json(const FactualSample& s, const FeatureSchema& schema = default_schema()) {
  Json j = feature_values_json(schema, s.features);
  j["patient_id"] = s.patient_id;
  j["meal_timestamp"] = format_timestamp(s.meal_time);
  j["outcome"] = std::string(to_string(s.outcome));
  return j;
}

struct ParsedSample {
  FactualSample sample;
  std::vector<std::string> problems;  // one message per offending field

  bool ok() const { return problems.empty(); }
};

// Strict parse: every feature required, unknown keys rejected, values
// range-checked against the physical limits of the schema.
inline ParsedSample parse_sample(const Json& j, const FeatureSchema& schema = default_schema()) {
  ParsedSample out;
  if (!j.is_object()) {
    out.problems.push_back("sample: expected a JSON object");
    return out;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key == "patient_id" || key == "meal_timestamp" || key == "outcome") continue;
    if (!schema.find(key)) out.problems.push_back(key + ": unknown field");
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& f = schema[i];
    if (!j.contains(f.name)) {
      out.problems.push_back(f.name + ": missing");
      continue;
    }
    const auto& v = j.at(f.name);
    if (f.kind == FeatureKind::Nominal) {
      if (!v.is_string()) {
        out.problems.push_back(f.name + ": expected one of the level names");
        continue;
      }
      const auto s = v.get<std::string>();
      std::optional<std::size_t> level;
      for (std::size_t l = 0; l < f.levels.size(); ++l) {
        if (f.levels[l] == s) level = l;
      }
      if (!level) {
        out.problems.push_back(f.name + ": unknown level '" + s + "'");
        continue;
      }
      out.sample.features[i] = static_cast<double>(*level);
    } else {
      if (!v.is_number()) {
        out.problems.push_back(f.name + ": expected a number");
        continue;
      }
      out.sample.features[i] = v.get<double>();
    }
  }
  try {
    if (j.contains("patient_id")) out.sample.patient_id = j.at("patient_id").get<std::string>();
    if (j.contains("meal_timestamp")) out.sample.meal_time = parse_timestamp(j.at("meal_timestamp").get<std::string>());
    if (j.contains("outcome")) out.sample.outcome = parse_outcome(j.at("outcome").get<std::string>());
  } catch (const std::exception& e) {
    out.problems.push_back(std::string("metadata: ") + e.what());
  }
  if (out.problems.empty()) {
    for (auto& p : check_sample(schema, out.sample.features)) out.problems.push_back(std::move(p));
  }
  return out;
}

inline FactualSample sample_from_json(const Json& j, const FeatureSchema& schema = default_schema()) {
  auto parsed = parse_sample(j, schema);
  if (!parsed.ok()) {
    std::string msg;
    for (const auto& p : parsed.problems) msg += (msg.empty() ? "" : "; ") + p;
    throw Error(ErrorCode::InvalidSample, msg);
  }
  return parsed.sample;
}

// Objects keyed by modifiable feature name; absent features keep `base`.
inline std::vector<double> weights_from_json(const Json& j, const FeatureSchema& schema, std::vector<double> base) {
  if (j.is_null()) return base;
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "weights must be an object keyed by feature name");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto idx = schema.find(it.key());
    if (!idx || !schema[*idx].modifiable) {
      throw Error(ErrorCode::InvalidArgument, "weights: '" + it.key() + "' is not a modifiable feature");
    }
    if (!it.value().is_number()) throw Error(ErrorCode::InvalidArgument, "weights: '" + it.key() + "' must be a number");
    base[*idx] = it.value().get<double>();
  }
  return base;
}

inline Json weights_to_json(const FeatureSchema& schema, std::span<const double> w) {
  Json j = Json::object();
  for (auto i : schema.modifiable_indices()) j[schema[i].name] = w[i];
  return j;
}

}  // namespace glytwin
