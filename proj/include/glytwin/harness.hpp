#pragma once

// Experiment runner: synthetic cohort -> dataset -> classifier + simulator ->
// counterfactuals for the held-out hyperglycemic contexts -> metrics, sweeps
// and subgroup tables.
//
// Report files carry no wall-clock values, so a fixed config and seed yields
// byte-identical reports. Timings go to separate timing_*.json files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glytwin/domain.hpp"
#include "glytwin/engine.hpp"
#include "glytwin/error.hpp"
#include "glytwin/json_io.hpp"
#include "glytwin/metrics.hpp"
#include "glytwin/models/gbt.hpp"
#include "glytwin/models/io.hpp"
#include "glytwin/models/knn.hpp"
#include "glytwin/models/mlp.hpp"
#include "glytwin/pipeline.hpp"
#include "glytwin/synthgen.hpp"

namespace glytwin {

struct SubgroupBins {
  std::vector<double> age{27, 37, 47, 57, 67, 77};
  std::vector<double> a1c{6.0, 6.5, 7.0, 7.5};
  std::vector<double> yfd{10, 20, 30, 40, 50, 60};
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  synth::SynthConfig synth;
  MlpSpec mlp;
  GbtSpec gbt;
  double gamma = 0.6;
  std::size_t max_iter = 200;
  double plateau_eps = 1e-6;
  std::size_t plateau_patience = 10;
  std::vector<double> w_user = std::vector<double>(kNumFeatures, 1.0);
  std::vector<double> w_physician = std::vector<double>(kNumFeatures, 1.0);
  std::vector<double> gamma_grid{0.50, 0.55, 0.60, 0.65, 0.70, 0.75};
  std::vector<double> delta_grid{0.05, 0.10, 0.15, 0.20, 0.25};
  SubgroupBins bins;
  std::size_t knn_k = kNnTestK;
  std::string output_dir = "out";
};

inline void validate(const ExperimentConfig& c) {
  synth::validate(c.synth);
  validate(c.mlp);
  validate(c.gbt);
  if (c.gamma_grid.empty() || c.delta_grid.empty()) throw Error(ErrorCode::InvalidArgument, "sweep grids must be non-empty");
  for (double g : c.gamma_grid) {
    if (!(g >= 0.5 && g < 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma grid values must be in [0.5, 1)");
  }
  for (double d : c.delta_grid) {
    if (!(d > 0.0 && d <= 1.0)) throw Error(ErrorCode::InvalidArgument, "delta grid values must be in (0, 1]");
  }
  if (c.knn_k % 2 == 0) throw Error(ErrorCode::InvalidK, "knn_k must be odd");
  validate(PreferenceWeights{c.w_user, c.w_physician}, kNumFeatures);
}

inline Json to_json(const synth::SynthConfig& s) {
  Json j{{"n_patients", s.n_patients},
         {"days_per_patient", s.days_per_patient},
         {"meal_rate", s.meal_rate},
         {"noise_sd", s.noise_sd},
         {"post_meal_bolus_fraction", s.post_meal_bolus_fraction},
         {"gap_rate", s.gap_rate},
         {"secondary_carb_rate", s.secondary_carb_rate}};
  return j;
}

inline synth::SynthConfig synth_config_from_json(const Json& j, synth::SynthConfig s = {}) {
  if (j.is_null()) return s;
  s.n_patients = j.value("n_patients", s.n_patients);
  s.days_per_patient = j.value("days_per_patient", s.days_per_patient);
  s.meal_rate = j.value("meal_rate", s.meal_rate);
  s.noise_sd = j.value("noise_sd", s.noise_sd);
  s.post_meal_bolus_fraction = j.value("post_meal_bolus_fraction", s.post_meal_bolus_fraction);
  s.gap_rate = j.value("gap_rate", s.gap_rate);
  s.secondary_carb_rate = j.value("secondary_carb_rate", s.secondary_carb_rate);
  synth::validate(s);
  return s;
}

inline Json to_json(const ExperimentConfig& c) {
  const auto schema = default_schema();
  return {{"seed", c.seed},
          {"synth", to_json(c.synth)},
          {"mlp", to_json(c.mlp)},
          {"gbt", to_json(c.gbt)},
          {"cf",
           {{"gamma", c.gamma},
            {"max_iter", c.max_iter},
            {"plateau_eps", c.plateau_eps},
            {"plateau_patience", c.plateau_patience},
            {"w_user", weights_to_json(schema, c.w_user)},
            {"w_physician", weights_to_json(schema, c.w_physician)}}},
          {"gamma_grid", c.gamma_grid},
          {"delta_grid", c.delta_grid},
          {"bins", {{"age", c.bins.age}, {"a1c", c.bins.a1c}, {"yfd", c.bins.yfd}}},
          {"knn_k", c.knn_k},
          {"output_dir", c.output_dir}};
}

// Keys absent from the file keep their defaults.
inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
  static const std::vector<std::string> known{"seed", "synth", "mlp", "gbt", "cf", "gamma_grid",
                                              "delta_grid", "bins", "knn_k", "output_dir"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw Error(ErrorCode::InvalidArgument, "config: unknown key '" + it.key() + "'");
    }
  }
  try {
    const auto schema = default_schema();
    c.seed = j.value("seed", c.seed);
    c.synth = synth_config_from_json(j.value("synth", Json()));
    c.mlp = mlp_spec_from_json(j.value("mlp", Json()));
    c.gbt = gbt_spec_from_json(j.value("gbt", Json()));
    if (j.contains("cf")) {
      const auto& cf = j.at("cf");
      c.gamma = cf.value("gamma", c.gamma);
      c.max_iter = cf.value("max_iter", c.max_iter);
      c.plateau_eps = cf.value("plateau_eps", c.plateau_eps);
      c.plateau_patience = cf.value("plateau_patience", c.plateau_patience);
      c.w_user = weights_from_json(cf.value("w_user", Json()), schema, c.w_user);
      c.w_physician = weights_from_json(cf.value("w_physician", Json()), schema, c.w_physician);
    }
    c.gamma_grid = j.value("gamma_grid", c.gamma_grid);
    c.delta_grid = j.value("delta_grid", c.delta_grid);
    if (j.contains("bins")) {
      c.bins.age = j.at("bins").value("age", c.bins.age);
      c.bins.a1c = j.at("bins").value("a1c", c.bins.a1c);
      c.bins.yfd = j.at("bins").value("yfd", c.bins.yfd);
    }
    c.knn_k = j.value("knn_k", c.knn_k);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Experiment state

struct Experiment {
  ExperimentConfig config;
  std::vector<PatientProfile> profiles;
  pipeline::Dataset dataset;
  TrainedMlp classifier;
  TrainedGbt simulator;
  std::size_t simulator_samples = 0;
  std::vector<FactualSample> train;  // classifier training split
  KnnIndex history;                  // NN-test neighbours (training split)
  FeatureRanges data_ranges;         // whole dataset, for plausibility
  std::vector<std::size_t> test_pool;  // held-out samples predicted hyperglycemic

  Predictor predictor() const { return Predictor(classifier.classifier); }
  Predictor simulator_predictor() const { return Predictor(simulator.model); }
};

// Seeds derived from the experiment seed.
inline std::uint64_t simulator_observation_seed(std::uint64_t seed) { return synth::splitmix64(seed ^ 0x51D0BE5EULL); }

inline synth::SynthConfig cohort_config(const ExperimentConfig& c) {
  auto s = c.synth;
  s.seed = c.seed;
  s.observation_seed.reset();
  return s;
}

// The simulator sees the same patients over an independent observation
// period, never the classifier's data.
inline synth::SynthConfig simulator_cohort_config(const ExperimentConfig& c) {
  auto s = cohort_config(c);
  s.observation_seed = simulator_observation_seed(c.seed);
  return s;
}

inline pipeline::Dataset build_cohort_dataset(const synth::SynthConfig& s, std::vector<PatientProfile>* profiles = nullptr) {
  const auto cohort = synth::generate_cohort(s);
  if (profiles) *profiles = cohort.profiles;
  return pipeline::build_dataset(cohort.streams, cohort.profiles);
}

inline Experiment prepare_experiment(const ExperimentConfig& config) {
  validate(config);
  std::vector<PatientProfile> profiles;
  auto dataset = build_cohort_dataset(cohort_config(config), &profiles);
  auto classifier = train_mlp(dataset.samples, config.mlp, config.seed);
  const auto sim_data = build_cohort_dataset(simulator_cohort_config(config));
  auto simulator = train_simulator(sim_data.samples, config.gbt, config.seed);
  auto train = gather(dataset.samples, classifier.report.split.train);
  KnnIndex history(train);
  auto ranges = compute_ranges(dataset.samples);
  Experiment e{config,
               std::move(profiles),
               std::move(dataset),
               std::move(classifier),
               std::move(simulator),
               sim_data.samples.size(),
               std::move(train),
               std::move(history),
               std::move(ranges),
               {}};
  for (auto i : e.classifier.report.split.test) {
    const auto p = e.classifier.classifier.predict_proba(e.dataset.samples[i].features);
    if (argmax(p) == class_index(Outcome::Hyperglycemia)) e.test_pool.push_back(i);
  }
  return e;
}

// Search parameters for one factual: personal bounds from the patient's
// history; `delta_fraction`, when set, replaces each modifiable step with that
// share of the feature's cohort range (schema bounds for premeal BGL).
inline CfParams cf_params_for(const Experiment& e, const FactualSample& x, double gamma,
                              std::optional<double> delta_fraction = std::nullopt) {
  CfParams p;
  p.gamma = gamma;
  p.max_iter = e.config.max_iter;
  p.plateau_eps = e.config.plateau_eps;
  p.plateau_patience = e.config.plateau_patience;
  p.weights = PreferenceWeights{e.config.w_user, e.config.w_physician};
  const auto base = default_schema();
  p.schema = personalize_bounds(base, e.dataset.samples, x.patient_id);
  if (delta_fraction) {
    for (auto i : base.modifiable_indices()) {
      const double range = base[i].per_patient_bounds ? e.data_ranges.range(i) : base[i].max - base[i].min;
      p.schema[i].step = *delta_fraction * range;
    }
  }
  return p;
}

struct CfRecord {
  CounterfactualResult result;
  bool valid = false;  // simulator assigns the target class
  double proximity = 0.0;
  std::size_t changed = 0;
};

inline CfRecord make_record(const Experiment& e, CounterfactualResult r) {
  CfRecord rec;
  const auto train_ranges = e.history.ranges();
  rec.valid = argmax(e.simulator.model.predict_proba(r.counterfactual.features)) == class_index(Outcome::Normoglycemia);
  rec.proximity = proximity(r.counterfactual.features, r.factual.features, train_ranges);
  rec.changed = changed_count(r.counterfactual.features, r.factual.features);
  rec.result = std::move(r);
  return rec;
}

inline std::vector<CfRecord> run_glytwin(const Experiment& e, double gamma,
                                         std::optional<double> delta_fraction = std::nullopt) {
  std::vector<CfRecord> out;
  out.reserve(e.test_pool.size());
  const auto& model = e.classifier.classifier;
  for (auto i : e.test_pool) {
    const auto& x = e.dataset.samples[i];
    out.push_back(make_record(e, generate_counterfactual(model, x, cf_params_for(e, x, gamma, delta_fraction))));
  }
  return out;
}

inline std::vector<FactualSample> factuals_of(const std::vector<CfRecord>& recs) {
  std::vector<FactualSample> v;
  for (const auto& r : recs) v.push_back(r.result.factual);
  return v;
}

inline std::vector<FactualSample> cfs_of(const std::vector<CfRecord>& recs) {
  std::vector<FactualSample> v;
  for (const auto& r : recs) v.push_back(r.result.counterfactual);
  return v;
}

inline EvaluationContext evaluation_context(const Experiment& e) {
  return EvaluationContext{e.simulator_predictor(), &e.history, e.history.ranges(), e.data_ranges, default_schema(),
                           e.config.knn_k, Outcome::Normoglycemia};
}

inline MetricsReport report_for(const Experiment& e, const std::string& name, const std::vector<CfRecord>& recs) {
  if (recs.empty()) throw Error(ErrorCode::EmptySet, "no hyperglycemic test samples to explain");
  std::size_t conv = 0;
  for (const auto& r : recs) conv += r.result.converged;
  return evaluate_cfs(name, cfs_of(recs), factuals_of(recs), conv, evaluation_context(e));
}

// ---------------------------------------------------------------------------
// Intervention text

inline std::string format_amount(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

inline std::string narrate(const FactualSample& factual, const CounterfactualResult& result) {
  if (!result.converged) throw Error(ErrorCode::NotConverged, "no intervention: the search did not converge");
  const auto& f = factual;
  const auto& c = result.counterfactual;
  std::vector<std::string> parts;
  auto changed = [&](Feature k) { return detail::changed(c[k], f[k]); };
  if (changed(Feature::CarbSize)) {
    parts.push_back(std::string(c[Feature::CarbSize] < f[Feature::CarbSize] ? "reduce" : "increase") +
                    " the meal to " + format_amount(c[Feature::CarbSize]) + " g of carbohydrates (from " +
                    format_amount(f[Feature::CarbSize]) + " g)");
  }
  if (changed(Feature::TotalBolus)) {
    const double d = c[Feature::TotalBolus] - f[Feature::TotalBolus];
    parts.push_back(std::string(d > 0 ? "increase" : "decrease") + " bolus by " + format_amount(std::abs(d)) +
                    " units, to " + format_amount(c[Feature::TotalBolus]) + " units");
  }
  if (changed(Feature::DeltaT)) {
    const double t = c[Feature::DeltaT];
    if (t < 0) {
      parts.push_back("take the bolus " + format_amount(-t) + " minutes before meal");
    } else if (t > 0) {
      parts.push_back("take the bolus " + format_amount(t) + " minutes after meal");
    } else {
      parts.push_back("take the bolus at meal time");
    }
  }
  if (changed(Feature::PremealBgl)) {
    const bool down = c[Feature::PremealBgl] < f[Feature::PremealBgl];
    parts.push_back(std::string("eat after BGL ") + (down ? "drops" : "rises") + " to " +
                    format_amount(c[Feature::PremealBgl]) + " mg/dL");
  }
  if (parts.empty()) return "no change needed: hyperglycemia is not predicted for this meal";
  std::string out = "You can prevent hyperglycemia if you ";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += i + 1 == parts.size() ? " and " : ", ";
    out += parts[i];
  }
  return out + ".";
}

// ---------------------------------------------------------------------------
// Reports

inline Json to_json(const CfRecord& r, const FeatureSchema& schema = default_schema()) {
  const auto& res = r.result;
  Json j{{"patient_id", res.factual.patient_id},
         {"meal_timestamp", format_timestamp(res.factual.meal_time)},
         {"factual", feature_values_json(schema, res.factual.features)},
         {"counterfactual", feature_values_json(schema, res.counterfactual.features)},
         {"converged", res.converged},
         {"termination", to_string(res.termination)},
         {"iterations", res.iterations},
         {"initial_confidence", res.initial_confidence},
         {"final_confidence", res.final_confidence},
         {"predictor_calls", res.predictor_calls},
         {"valid", r.valid},
         {"proximity", r.proximity},
         {"changed", r.changed}};
  return j;
}

struct EvaluationOutput {
  std::vector<MetricsReport> table;  // GlyTwin then the nearest-instance baseline
  std::vector<CfRecord> glytwin;
  std::vector<FactualSample> baseline;
  std::vector<double> baseline_proximity;
  Alignment alignment;
};

inline std::vector<double> per_sample_proximity(const Experiment& e, const std::vector<FactualSample>& cfs,
                                                const std::vector<FactualSample>& factuals) {
  std::vector<double> out;
  for (std::size_t i = 0; i < cfs.size(); ++i) {
    out.push_back(proximity(cfs[i].features, factuals[i].features, e.history.ranges()));
  }
  return out;
}

// Alignment run: the preference weights w_p = [0, .9, .9, 0] and
// w_u = [.1, 1, 1, .7] over (carb, bolus, delta_t, premeal BGL).
inline PreferenceWeights alignment_weights() {
  auto w = PreferenceWeights::uniform(kNumFeatures, 0.0);
  const Feature order[] = {Feature::CarbSize, Feature::TotalBolus, Feature::DeltaT, Feature::PremealBgl};
  const double wp[] = {0.0, 0.9, 0.9, 0.0};
  const double wu[] = {0.1, 1.0, 1.0, 0.7};
  for (int k = 0; k < 4; ++k) {
    w.physician[index(order[k])] = wp[k];
    w.user[index(order[k])] = wu[k];
  }
  return w;
}

inline EvaluationOutput run_evaluation(const Experiment& e) {
  EvaluationOutput out;
  out.glytwin = run_glytwin(e, e.config.gamma);
  const auto factuals = factuals_of(out.glytwin);
  for (const auto& x : factuals) out.baseline.push_back(nice_baseline(e.history, x));
  out.baseline_proximity = per_sample_proximity(e, out.baseline, factuals);
  out.table.push_back(report_for(e, "GlyTwin", out.glytwin));
  out.table.push_back(evaluate_cfs("NICE", out.baseline, factuals, out.baseline.size(), evaluation_context(e)));

  ExperimentConfig aligned = e.config;
  const auto w = alignment_weights();
  aligned.w_user = w.user;
  aligned.w_physician = w.physician;
  Experiment view = e;
  view.config = aligned;
  std::vector<CounterfactualResult> results;
  for (auto& r : run_glytwin(view, e.config.gamma)) results.push_back(std::move(r.result));
  out.alignment = preference_alignment(results, w);
  return out;
}

inline Json to_json(const Alignment& a) {
  return {{"features", a.features},
          {"weight", a.weight},
          {"change", a.change},
          {"correlation", a.correlation ? Json(*a.correlation) : Json(nullptr)}};
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir + "': " + ec.message());
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
}

inline Json training_json(const Experiment& e) {
  return {{"samples", e.dataset.samples.size()},
          {"skipped_events", e.dataset.skipped.size()},
          {"classifier", to_json(e.classifier.report)},
          {"simulator", to_json(e.simulator.report)},
          {"simulator_samples", e.simulator_samples},
          {"simulator_spec", to_json(e.simulator.model.spec())},
          {"test_pool", e.test_pool.size()}};
}

// Share of CFs that move the bolus later relative to the meal.
inline double share_delaying_bolus(const std::vector<CfRecord>& recs) {
  if (recs.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& r : recs) n += r.result.counterfactual[Feature::DeltaT] > r.result.factual[Feature::DeltaT] + kChangeTolerance;
  return static_cast<double>(n) / static_cast<double>(recs.size());
}

struct RuntimeSummary {
  std::size_t n_converged = 0, n_not_converged = 0;
  double mean_converged = 0.0, median_converged = 0.0;
  double mean_not_converged = 0.0, median_not_converged = 0.0;
  double mean_iterations_not_converged = 0.0;
  double share_delaying_bolus = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline RuntimeSummary runtime_report(const std::vector<CfRecord>& recs) {
  if (recs.empty()) throw Error(ErrorCode::EmptySet, "no results");
  RuntimeSummary s;
  std::vector<double> conv, non;
  double it = 0.0;
  for (const auto& r : recs) {
    if (r.result.converged) {
      conv.push_back(r.result.wall_time);
    } else {
      non.push_back(r.result.wall_time);
      it += static_cast<double>(r.result.iterations);
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double t = 0.0;
    for (double x : v) t += x;
    return v.empty() ? 0.0 : t / static_cast<double>(v.size());
  };
  s.n_converged = conv.size();
  s.n_not_converged = non.size();
  s.mean_converged = mean(conv);
  s.median_converged = median(conv);
  s.mean_not_converged = mean(non);
  s.median_not_converged = median(non);
  s.mean_iterations_not_converged = non.empty() ? 0.0 : it / static_cast<double>(non.size());
  s.share_delaying_bolus = share_delaying_bolus(recs);
  return s;
}

inline Json to_json(const RuntimeSummary& s) {
  return {{"n_converged", s.n_converged},
          {"n_not_converged", s.n_not_converged},
          {"mean_seconds_converged", s.mean_converged},
          {"median_seconds_converged", s.median_converged},
          {"mean_seconds_not_converged", s.mean_not_converged},
          {"median_seconds_not_converged", s.median_not_converged},
          {"mean_iterations_not_converged", s.mean_iterations_not_converged},
          {"share_delaying_bolus", s.share_delaying_bolus}};
}

// Writes metrics.json, metrics.txt, results.jsonl, baseline.jsonl,
// alignment.json, training.json and timing_evaluate.json.
inline void write_evaluation(const Experiment& e, const EvaluationOutput& out, const std::string& dir) {
  ensure_dir(dir);
  const std::filesystem::path d(dir);
  Json table = Json::array();
  for (const auto& r : out.table) table.push_back(to_json(r));
  std::size_t nice_closer = 0;
  for (std::size_t i = 0; i < out.glytwin.size(); ++i) nice_closer += out.baseline_proximity[i] <= out.glytwin[i].proximity;
  Json metrics{{"gamma", e.config.gamma},
               {"seed", e.config.seed},
               {"table", table},
               {"baseline_closer_share",
                out.glytwin.empty() ? 0.0 : static_cast<double>(nice_closer) / static_cast<double>(out.glytwin.size())},
               {"share_delaying_bolus", share_delaying_bolus(out.glytwin)}};
  write_text_file(d / "metrics.json", metrics.dump(2) + "\n");
  write_text_file(d / "metrics.txt", metrics_table(out.table));
  std::string lines;
  for (const auto& r : out.glytwin) lines += to_json(r).dump() + "\n";
  write_text_file(d / "results.jsonl", lines);
  lines.clear();
  const auto schema = default_schema();
  for (std::size_t i = 0; i < out.baseline.size(); ++i) {
    Json j{{"patient_id", out.glytwin[i].result.factual.patient_id},
           {"counterfactual", feature_values_json(schema, out.baseline[i].features)},
           {"proximity", out.baseline_proximity[i]}};
    lines += j.dump() + "\n";
  }
  write_text_file(d / "baseline.jsonl", lines);
  write_text_file(d / "alignment.json", to_json(out.alignment).dump(2) + "\n");
  write_text_file(d / "training.json", training_json(e).dump(2) + "\n");
  write_text_file(d / "timing_evaluate.json", to_json(runtime_report(out.glytwin)).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  double value = 0.0;  // gamma, or delta as a share of the range
  double mean_iterations = 0.0;
  double mean_proximity = 0.0;
  double sparsity = 0.0;
  double validity = 0.0;
  double converged_share = 0.0;
  double mean_predictor_calls = 0.0;
  double mean_seconds = 0.0;  // timing only, not part of the report
};

struct SweepReport {
  std::string parameter;
  std::vector<SweepRow> rows;
  std::optional<bool> iterations_non_decreasing;
  std::optional<bool> proximity_non_decreasing;
  std::optional<double> sparsity_spread;  // max - min across rows
};

inline SweepRow sweep_row(double value, const std::vector<CfRecord>& recs) {
  SweepRow row;
  row.value = value;
  if (recs.empty()) return row;
  const auto n = static_cast<double>(recs.size());
  for (const auto& r : recs) {
    row.mean_iterations += static_cast<double>(r.result.iterations) / n;
    row.mean_proximity += r.proximity / n;
    row.sparsity += static_cast<double>(r.changed) / n;
    row.validity += (r.valid ? 1.0 : 0.0) / n;
    row.converged_share += (r.result.converged ? 1.0 : 0.0) / n;
    row.mean_predictor_calls += static_cast<double>(r.result.predictor_calls) / n;
    row.mean_seconds += r.result.wall_time / n;
  }
  return row;
}

inline void set_trend_flags(SweepReport& s) {
  if (s.rows.size() < 2) return;
  bool it = true, px = true;
  double lo = s.rows.front().sparsity, hi = lo;
  for (std::size_t i = 1; i < s.rows.size(); ++i) {
    it = it && s.rows[i].mean_iterations >= s.rows[i - 1].mean_iterations;
    px = px && s.rows[i].mean_proximity >= s.rows[i - 1].mean_proximity;
    lo = std::min(lo, s.rows[i].sparsity);
    hi = std::max(hi, s.rows[i].sparsity);
  }
  s.iterations_non_decreasing = it;
  s.proximity_non_decreasing = px;
  s.sparsity_spread = hi - lo;
}

inline SweepReport ablate_gamma(const Experiment& e) {
  SweepReport s{"gamma", {}, {}, {}, {}};
  for (double g : e.config.gamma_grid) s.rows.push_back(sweep_row(g, run_glytwin(e, g)));
  set_trend_flags(s);
  return s;
}

inline SweepReport ablate_delta(const Experiment& e) {
  SweepReport s{"delta_fraction", {}, {}, {}, {}};
  for (double d : e.config.delta_grid) s.rows.push_back(sweep_row(d, run_glytwin(e, e.config.gamma, d)));
  set_trend_flags(s);
  return s;
}

inline Json optional_json(const auto& v) { return v ? Json(*v) : Json(nullptr); }

inline Json to_json(const SweepReport& s) {
  Json rows = Json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{s.parameter, r.value},
                    {"mean_iterations", r.mean_iterations},
                    {"mean_proximity", r.mean_proximity},
                    {"sparsity", r.sparsity},
                    {"validity", r.validity},
                    {"converged_share", r.converged_share},
                    {"mean_predictor_calls", r.mean_predictor_calls}});
  }
  return {{"parameter", s.parameter},
          {"rows", rows},
          {"iterations_non_decreasing", optional_json(s.iterations_non_decreasing)},
          {"proximity_non_decreasing", optional_json(s.proximity_non_decreasing)},
          {"sparsity_spread", optional_json(s.sparsity_spread)}};
}

inline Json timing_json(const SweepReport& s) {
  Json rows = Json::array();
  for (const auto& r : s.rows) rows.push_back({{s.parameter, r.value}, {"mean_seconds", r.mean_seconds}});
  return {{"parameter", s.parameter}, {"rows", rows}};
}

inline std::string sweep_csv(const SweepReport& s) {
  std::string out = s.parameter + ",mean_iterations,mean_proximity,sparsity,validity,converged_share,mean_predictor_calls\n";
  for (const auto& r : s.rows) {
    out += format_fixed(r.value, 2) + "," + format_fixed(r.mean_iterations, 4) + "," + format_fixed(r.mean_proximity, 4) +
           "," + format_fixed(r.sparsity, 4) + "," + format_fixed(r.validity, 4) + "," +
           format_fixed(r.converged_share, 4) + "," + format_fixed(r.mean_predictor_calls, 2) + "\n";
  }
  return out;
}

inline void write_sweep(const SweepReport& s, const std::string& dir, const std::string& stem) {
  ensure_dir(dir);
  const std::filesystem::path d(dir);
  write_text_file(d / (stem + ".json"), to_json(s).dump(2) + "\n");
  write_text_file(d / (stem + ".csv"), sweep_csv(s));
  write_text_file(d / ("timing_" + stem + ".json"), timing_json(s).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Subgroups

inline constexpr std::size_t kSmallGroup = 5;

struct GroupRow {
  std::string dimension;
  std::string group;
  std::size_t n = 0;
  std::size_t patients = 0;
  double validity = 0.0;
  double proximity = 0.0;
  double sparsity = 0.0;
  bool low_confidence = false;
};

inline std::string format_edge(double v) {
  return std::abs(v - std::round(v)) < 1e-9 ? std::to_string(static_cast<long long>(std::llround(v))) : format_amount(v);
}

// Labels "<e0", "e0-e1", ..., ">=ek" over half-open bins [e_i, e_{i+1}).
inline std::string bin_label(double v, const std::vector<double>& edges) {
  if (edges.empty() || v < edges.front()) return edges.empty() ? "all" : "<" + format_edge(edges.front());
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (v < edges[i + 1]) return format_edge(edges[i]) + "-" + format_edge(edges[i + 1]);
  }
  return ">=" + format_edge(edges.back());
}

inline std::vector<GroupRow> subgroup_report(const std::vector<CfRecord>& recs, std::span<const PatientProfile> profiles,
                                             const SubgroupBins& bins) {
  std::map<std::string, const PatientProfile*> by_id;
  for (const auto& p : profiles) by_id[p.patient_id] = &p;
  struct Acc {
    std::size_t n = 0, valid = 0, changed = 0;
    double prox = 0.0;
    std::map<std::string, int> patients;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  const std::vector<std::string> dims{"age", "sex", "a1c", "yfd"};
  for (const auto& r : recs) {
    const auto it = by_id.find(r.result.factual.patient_id);
    if (it == by_id.end()) throw Error(ErrorCode::UnknownPatient, "no profile for '" + r.result.factual.patient_id + "'");
    const auto& p = *it->second;
    const std::string keys[] = {bin_label(p.age, bins.age), std::string(to_string(p.sex)), bin_label(p.a1c, bins.a1c),
                                bin_label(p.years_from_diagnosis, bins.yfd)};
    for (std::size_t k = 0; k < dims.size(); ++k) {
      auto& a = groups[{dims[k], keys[k]}];
      ++a.n;
      a.valid += r.valid;
      a.changed += r.changed;
      a.prox += r.proximity;
      a.patients[p.patient_id] = 1;
    }
  }
  std::vector<GroupRow> out;
  for (const auto& dim : dims) {
    for (const auto& [key, a] : groups) {
      if (key.first != dim) continue;
      GroupRow g;
      g.dimension = key.first;
      g.group = key.second;
      g.n = a.n;
      g.patients = a.patients.size();
      g.validity = static_cast<double>(a.valid) / static_cast<double>(a.n);
      g.proximity = a.prox / static_cast<double>(a.n);
      g.sparsity = static_cast<double>(a.changed) / static_cast<double>(a.n);
      g.low_confidence = g.n < kSmallGroup || g.patients < kSmallGroup;
      out.push_back(g);
    }
  }
  return out;
}

inline Json to_json(const GroupRow& g) {
  return {{"dimension", g.dimension}, {"group", g.group},         {"n", g.n},
          {"patients", g.patients},   {"validity", g.validity},   {"proximity", g.proximity},
          {"sparsity", g.sparsity},   {"low_confidence", g.low_confidence}};
}

inline void write_subgroups(const std::vector<GroupRow>& rows, const std::string& dir) {
  ensure_dir(dir);
  Json j = Json::array();
  for (const auto& g : rows) j.push_back(to_json(g));
  write_text_file(std::filesystem::path(dir) / "subgroups.json", j.dump(2) + "\n");
}

}  // namespace glytwin
