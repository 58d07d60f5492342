#pragma once

// Model files are JSON documents:
//   format   "glytwin-model"
//   version  1
//   kind     "mlp" | "gbt"
//   features feature names, in order, that the model was trained on
//   spec     hyperparameters
//   report   held-out accuracy, f1, n_train, n_test
//   mlp:     stats {mean, stddev}, parameters, running_mean, running_var
//   gbt:     base_margin, trees [{feature, threshold, left, right, value}]
// Doubles round-trip exactly, so identical files give identical predictions.

#include <fstream>
#include <string>
#include <variant>

#include "glytwin/json_io.hpp"
#include "glytwin/models/gbt.hpp"
#include "glytwin/models/mlp.hpp"
#include "glytwin/models/predictor.hpp"
#include "glytwin/models/training.hpp"

namespace glytwin {

inline constexpr std::string_view kModelFormat = "glytwin-model";
inline constexpr int kModelVersion = 1;

inline Json to_json(const TrainingReport& r) {
  return {{"accuracy", r.accuracy}, {"f1", r.f1}, {"n_train", r.n_train}, {"n_test", r.n_test}};
}

inline TrainingReport report_from_json(const Json& j) {
  TrainingReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.n_train = j.at("n_train").get<std::size_t>();
  r.n_test = j.at("n_test").get<std::size_t>();
  return r;
}

inline Json to_json(const MlpSpec& s) {
  return {{"hidden", s.hidden},
          {"batch_norm", s.batch_norm},
          {"dropout", s.dropout},
          {"learning_rate", s.learning_rate},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"train_fraction", s.train_fraction},
          {"bn_momentum", s.bn_momentum},
          {"bn_epsilon", s.bn_epsilon},
          {"adam_beta1", s.adam_beta1},
          {"adam_beta2", s.adam_beta2},
          {"adam_epsilon", s.adam_epsilon}};
}

// Missing keys keep their defaults, so configs may override a subset.
inline MlpSpec mlp_spec_from_json(const Json& j, MlpSpec s = {}) {
  if (j.is_null()) return s;
  s.hidden = j.value("hidden", s.hidden);
  s.batch_norm = j.value("batch_norm", s.batch_norm);
  s.dropout = j.value("dropout", s.dropout);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.epochs = j.value("epochs", s.epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.train_fraction = j.value("train_fraction", s.train_fraction);
  s.bn_momentum = j.value("bn_momentum", s.bn_momentum);
  s.bn_epsilon = j.value("bn_epsilon", s.bn_epsilon);
  s.adam_beta1 = j.value("adam_beta1", s.adam_beta1);
  s.adam_beta2 = j.value("adam_beta2", s.adam_beta2);
  s.adam_epsilon = j.value("adam_epsilon", s.adam_epsilon);
  validate(s);
  return s;
}

inline Json to_json(const GbtSpec& s) {
  return {{"max_depth", s.max_depth},
          {"learning_rate", s.learning_rate},
          {"n_estimators", s.n_estimators},
          {"train_fraction", s.train_fraction},
          {"lambda", s.lambda},
          {"min_child_weight", s.min_child_weight}};
}

inline GbtSpec gbt_spec_from_json(const Json& j, GbtSpec s = {}) {
  if (j.is_null()) return s;
  s.max_depth = j.value("max_depth", s.max_depth);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.n_estimators = j.value("n_estimators", s.n_estimators);
  s.train_fraction = j.value("train_fraction", s.train_fraction);
  s.lambda = j.value("lambda", s.lambda);
  s.min_child_weight = j.value("min_child_weight", s.min_child_weight);
  validate(s);
  return s;
}

inline Json model_to_json(const MlpClassifier& c, const TrainingReport& report) {
  const auto& net = c.model();
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"kind", "mlp"},
          {"features", feature_names(c.encoder().schema())},
          {"spec", to_json(net.spec())},
          {"report", to_json(report)},
          {"stats", {{"mean", c.encoder().stats().mean}, {"stddev", c.encoder().stats().stddev}}},
          {"input_dim", net.input_dim()},
          {"parameters", net.parameters()},
          {"running_mean", net.running_mean()},
          {"running_var", net.running_var()}};
}

inline Json model_to_json(const GbtModel& m, const TrainingReport& report) {
  Json trees = Json::array();
  for (const auto& t : m.trees()) {
    Json f = Json::array(), th = Json::array(), l = Json::array(), r = Json::array(), v = Json::array();
    for (const auto& n : t.nodes) {
      f.push_back(n.feature);
      th.push_back(n.threshold);
      l.push_back(n.left);
      r.push_back(n.right);
      v.push_back(n.value);
    }
    trees.push_back({{"feature", f}, {"threshold", th}, {"left", l}, {"right", r}, {"value", v}});
  }
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"kind", "gbt"},
          {"features", feature_names(default_schema())},
          {"spec", to_json(m.spec())},
          {"report", to_json(report)},
          {"n_features", m.n_features()},
          {"base_margin", m.base_margin()},
          {"trees", trees}};
}

struct LoadedModel {
  std::string kind;
  TrainingReport report;
  Json spec;
  std::variant<MlpClassifier, GbtModel> model;

  Predictor predictor() const {
    return std::visit([](const auto& m) { return Predictor(m); }, model);
  }
};

inline LoadedModel model_from_json(const Json& j, const FeatureSchema& schema = default_schema()) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw Error(ErrorCode::SchemaMismatch, "not a model file");
    if (j.at("version").get<int>() != kModelVersion) {
      throw Error(ErrorCode::SchemaMismatch, "unsupported model version " + j.at("version").dump());
    }
    if (j.at("features").get<std::vector<std::string>>() != feature_names(schema)) {
      throw Error(ErrorCode::SchemaMismatch, "model features do not match the schema");
    }
    const auto kind = j.at("kind").get<std::string>();
    const auto report = report_from_json(j.at("report"));
    if (kind == "mlp") {
      const auto spec = mlp_spec_from_json(j.at("spec"));
      TrainingStats stats{j.at("stats").at("mean").get<std::vector<double>>(),
                          j.at("stats").at("stddev").get<std::vector<double>>()};
      Encoder enc(schema, stats);
      MlpNetwork net(j.at("input_dim").get<std::size_t>(), spec);
      if (net.input_dim() != enc.encoded_width()) throw Error(ErrorCode::SchemaMismatch, "mlp input width mismatch");
      auto params = j.at("parameters").get<std::vector<double>>();
      if (params.size() != net.parameter_count()) throw Error(ErrorCode::SchemaMismatch, "mlp parameter count mismatch");
      net.parameters() = std::move(params);
      auto rm = j.at("running_mean").get<std::vector<std::vector<double>>>();
      auto rv = j.at("running_var").get<std::vector<std::vector<double>>>();
      if (rm.size() != net.running_mean().size() || rv.size() != net.running_var().size()) {
        throw Error(ErrorCode::SchemaMismatch, "mlp batch-norm statistics mismatch");
      }
      net.running_mean() = std::move(rm);
      net.running_var() = std::move(rv);
      return {kind, report, j.at("spec"), MlpClassifier(std::move(enc), std::move(net))};
    }
    if (kind == "gbt") {
      const auto spec = gbt_spec_from_json(j.at("spec"));
      std::vector<RegressionTree> trees;
      for (const auto& t : j.at("trees")) {
        const auto f = t.at("feature").get<std::vector<int>>();
        const auto th = t.at("threshold").get<std::vector<double>>();
        const auto l = t.at("left").get<std::vector<int>>();
        const auto r = t.at("right").get<std::vector<int>>();
        const auto v = t.at("value").get<std::vector<double>>();
        RegressionTree tree;
        for (std::size_t k = 0; k < f.size(); ++k) tree.nodes.push_back({f.at(k), th.at(k), l.at(k), r.at(k), v.at(k)});
        trees.push_back(std::move(tree));
      }
      GbtModel m(spec, j.at("n_features").get<std::size_t>(), j.at("base_margin").get<double>(), std::move(trees));
      return {kind, report, j.at("spec"), std::move(m)};
    }
    throw Error(ErrorCode::SchemaMismatch, "unknown model kind '" + kind + "'");
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed model file: ") + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Io, "'" + path + "': " + e.what());
  }
}

inline LoadedModel load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

}  // namespace glytwin
