#pragma once

// Greedy saliency-guided counterfactual search.
//
// Each iteration probes every modifiable feature forward by its step,
// S_i = (f_y(x + d_i e_i) - f_y(x)) / d_i, combines the normalized |S_i| with
// the physician and user weights, and moves the best unmasked feature one
// step in the direction sign(S_i). A feature that hits a bound is clamped and
// masked for the rest of the search.

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glytwin/domain.hpp"
#include "glytwin/error.hpp"
#include "glytwin/json_io.hpp"
#include "glytwin/models/knn.hpp"
#include "glytwin/models/predictor.hpp"

namespace glytwin {

struct CfParams {
  Outcome target = Outcome::Normoglycemia;
  double gamma = 0.6;
  std::size_t max_iter = 200;
  double plateau_eps = 1e-6;
  std::size_t plateau_patience = 10;
  FeatureSchema schema = default_schema();
  PreferenceWeights weights = PreferenceWeights::uniform(kNumFeatures);
};

inline void validate(const CfParams& p) {
  if (!(p.gamma >= 0.5 && p.gamma < 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be in [0.5, 1)");
  if (p.max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
  if (p.plateau_patience < 1) throw Error(ErrorCode::InvalidArgument, "plateau_patience must be >= 1");
  validate(p.schema);
  validate(p.weights, p.schema.size());
}

enum class Termination { Converged, MaxIterations, Plateau, NoSelectableFeature };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::Plateau: return "plateau";
    case Termination::NoSelectableFeature: return "no_selectable_feature";
  }
  return "unknown";
}

struct IterationTrace {
  std::size_t iteration = 0;  // 1-based
  std::vector<double> saliency;
  std::vector<double> scores;  // -inf for non-modifiable features
  std::size_t feature = 0;
  double step = 0.0;  // signed change actually applied
  bool clamped = false;
  std::vector<int> multiplier;  // after the step
  double confidence = 0.0;      // target-class probability after the step
};

struct CounterfactualResult {
  FactualSample factual;
  FactualSample counterfactual;
  bool converged = false;
  Termination termination = Termination::MaxIterations;
  std::size_t iterations = 0;
  double initial_confidence = 0.0;
  double final_confidence = 0.0;
  std::vector<IterationTrace> trajectory;
  double wall_time = 0.0;  // seconds
  std::size_t predictor_calls = 0;
};

namespace detail {

template <RawPredictor P>
double target_probability(const P& predictor, std::span<const double> x, Outcome target) {
  return predictor.predict_proba(x)[class_index(target)];
}

// Predictor calls inside the search, with failures reported in context.
template <RawPredictor P>
struct CountingProbe {
  const P& predictor;
  Outcome target;
  std::size_t calls = 0;
  std::size_t iteration = 0;

  double operator()(std::span<const double> x) {
    ++calls;
    Proba p;
    try {
      p = predictor.predict_proba(x);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::PredictorFailure, "iteration " + std::to_string(iteration) + ": " + e.what());
    }
    if (!is_distribution(p, 1e-6)) {
      throw Error(ErrorCode::PredictorFailure,
                  "iteration " + std::to_string(iteration) + ": predictor returned an invalid distribution");
    }
    return p[class_index(target)];
  }
};

}  // namespace detail

inline void require_modifiable(const FeatureSchema& schema, std::size_t i) {
  if (i >= schema.size() || !schema[i].modifiable) {
    throw Error(ErrorCode::NotModifiable, "feature " + std::to_string(i) + " is not modifiable");
  }
}

// Forward-difference saliency of the target-class probability, in raw units.
template <RawPredictor P>
double forward_saliency(const P& predictor, std::span<const double> x, std::size_t i, double delta, Outcome target,
                        const FeatureSchema& schema = default_schema()) {
  require_modifiable(schema, i);
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be > 0");
  std::vector<double> probe(x.begin(), x.end());
  probe[i] += delta;
  return (detail::target_probability(predictor, probe, target) - detail::target_probability(predictor, x, target)) /
         delta;
}

// C_i = (|S_i| / max_j |S_j| + w_p[i] + w_u[i]) * M[i] over modifiable
// features, the max taken over unmasked ones; -inf elsewhere.
inline std::vector<double> combined_scores(std::span<const double> saliency, const PreferenceWeights& w,
                                           std::span<const int> multiplier, const FeatureSchema& schema) {
  const std::size_t d = schema.size();
  double max_abs = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    if (schema[i].modifiable && multiplier[i]) max_abs = std::max(max_abs, std::abs(saliency[i]));
  }
  std::vector<double> c(d, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < d; ++i) {
    if (!schema[i].modifiable) continue;
    const double s = max_abs > 0.0 ? saliency[i] / max_abs : 0.0;
    c[i] = (std::abs(s) + w.physician[i] + w.user[i]) * multiplier[i];
  }
  return c;
}

// Argmax of C over unmasked modifiable features with nonzero saliency; ties
// go to the lowest index.
inline std::optional<std::size_t> select_feature(std::span<const double> scores, std::span<const double> saliency,
                                                 std::span<const int> multiplier, const FeatureSchema& schema) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (!schema[i].modifiable || !multiplier[i] || saliency[i] == 0.0) continue;
    if (!best || scores[i] > scores[*best]) best = i;
  }
  return best;
}

struct StepResult {
  FeatureVector x;
  std::vector<int> multiplier;
  bool clamped = false;
};

inline StepResult apply_step(std::span<const double> x, std::size_t i, double saliency, double delta,
                             const FeatureSchema& schema, std::span<const int> multiplier) {
  require_modifiable(schema, i);
  if (!multiplier[i]) throw Error(ErrorCode::MaskedFeature, "feature '" + schema[i].name + "' is masked");
  StepResult r{FeatureVector(x.begin(), x.end()), std::vector<int>(multiplier.begin(), multiplier.end()), false};
  const double sign = saliency > 0.0 ? 1.0 : (saliency < 0.0 ? -1.0 : 0.0);
  double v = r.x[i] + sign * delta;
  if (v < schema[i].min) {
    v = schema[i].min;
    r.multiplier[i] = 0;
    r.clamped = true;
  } else if (v > schema[i].max) {
    v = schema[i].max;
    r.multiplier[i] = 0;
    r.clamped = true;
  }
  r.x[i] = v;
  return r;
}

// Modifiable features of the factual that sit outside their search bounds
// are moved onto the nearest bound before the search starts.
inline FeatureVector project_to_bounds(std::span<const double> x, const FeatureSchema& schema) {
  FeatureVector out(x.begin(), x.end());
  for (auto i : schema.modifiable_indices()) out[i] = std::clamp(out[i], schema[i].min, schema[i].max);
  return out;
}

template <RawPredictor P>
CounterfactualResult generate_counterfactual(const P& predictor, const FactualSample& x_t, const CfParams& params) {
  validate(params);
  const auto& schema = params.schema;
  validate_sample(schema, x_t.features);
  const auto t0 = std::chrono::steady_clock::now();

  CounterfactualResult res;
  res.factual = x_t;
  res.counterfactual = x_t;
  auto& x = res.counterfactual.features;
  x = project_to_bounds(x, schema);

  detail::CountingProbe<P> probe{predictor, params.target};
  const std::size_t d = schema.size();
  const auto mod = schema.modifiable_indices();
  std::vector<int> m(d, 1);
  double conf = probe(x);
  res.initial_confidence = conf;
  std::size_t flat_rounds = 0;

  res.termination = Termination::MaxIterations;
  while (true) {
    if (conf >= params.gamma) {
      res.termination = Termination::Converged;
      break;
    }
    if (res.iterations >= params.max_iter) {
      res.termination = Termination::MaxIterations;
      break;
    }
    probe.iteration = res.iterations + 1;
    std::vector<double> s(d, 0.0);
    std::vector<double> xp = x;
    for (auto i : mod) {
      const double delta = schema[i].step;
      xp[i] = x[i] + delta;
      s[i] = (probe(xp) - conf) / delta;
      xp[i] = x[i];
    }
    auto c = combined_scores(s, params.weights, m, schema);
    const auto pick = select_feature(c, s, m, schema);
    if (!pick) {
      res.termination = Termination::NoSelectableFeature;
      break;
    }
    const std::size_t i = *pick;
    auto step = apply_step(x, i, s[i], schema[i].step, schema, m);
    const double before = x[i];
    x = std::move(step.x);
    m = std::move(step.multiplier);
    const double next = probe(x);
    ++res.iterations;
    res.trajectory.push_back(
        IterationTrace{res.iterations, std::move(s), std::move(c), i, x[i] - before, step.clamped, m, next});
    flat_rounds = next - conf < params.plateau_eps ? flat_rounds + 1 : 0;
    conf = next;
    if (conf < params.gamma && flat_rounds >= params.plateau_patience) {
      res.termination = Termination::Plateau;
      break;
    }
  }
  res.converged = res.termination == Termination::Converged;
  res.final_confidence = conf;
  res.predictor_calls = probe.calls;
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// Terms of the weighted objective evaluated at a candidate, for diagnostics:
// cross-entropy against the target class, preference-weighted L1 change with
// r_i = (w_p[i] + w_u[i]) / 2, and the distance to the nearest training sample.
struct ObjectiveTerms {
  double cross_entropy = 0.0;
  double weighted_l1 = 0.0;
  double manifold_distance = 0.0;

  double total() const { return cross_entropy + weighted_l1 + manifold_distance; }
};

template <RawPredictor P>
ObjectiveTerms objective_value(std::span<const double> x_t, std::span<const double> x_cf, const P& predictor,
                               const PreferenceWeights& w, const KnnIndex& reference,
                               Outcome target = Outcome::Normoglycemia) {
  ObjectiveTerms t;
  const double p = detail::target_probability(predictor, x_cf, target);
  t.cross_entropy = -std::log(std::max(p, 1e-300));
  const auto& schema = reference.schema();
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (!schema[i].modifiable) continue;
    t.weighted_l1 += 0.5 * (w.physician[i] + w.user[i]) * std::abs(x_cf[i] - x_t[i]);
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : reference.train()) best = std::min(best, reference.distance(x_cf, s.features));
  t.manifold_distance = best;
  return t;
}

// Nearest training sample of the target class under the mixed distance.
inline FactualSample nice_baseline(const KnnIndex& train, const FactualSample& x_t,
                                   Outcome target = Outcome::Normoglycemia) {
  const FactualSample* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& s : train.train()) {
    if (s.outcome != target) continue;
    const double d = train.distance(x_t.features, s.features);
    if (d < best_d) {
      best_d = d;
      best = &s;
    }
  }
  if (!best) throw Error(ErrorCode::NoTargetClassInstance, "no training sample of class " + std::string(to_string(target)));
  FactualSample cf = *best;
  cf.patient_id = x_t.patient_id;
  cf.meal_time = x_t.meal_time;
  return cf;
}

inline FactualSample nice_baseline(std::span<const FactualSample> train, const FactualSample& x_t,
                                   Outcome target = Outcome::Normoglycemia) {
  if (train.empty()) throw Error(ErrorCode::NoTargetClassInstance, "empty training set");
  return nice_baseline(KnnIndex(std::vector<FactualSample>(train.begin(), train.end())), x_t, target);
}

// ---------------------------------------------------------------------------
// Trajectory log: one JSON object per iteration with fields
//   iteration   1-based index
//   feature     name of the feature moved
//   step        signed change applied, feature units
//   clamped     whether the step hit a bound (the feature is then masked)
//   confidence  target-class probability after the step
//   saliency    {feature: S_i} for modifiable features
//   scores      {feature: C_i} for modifiable features
//   multiplier  {feature: 0|1} after the step

inline Json to_json(const IterationTrace& t, const FeatureSchema& schema) {
  Json s = Json::object(), c = Json::object(), m = Json::object();
  for (auto i : schema.modifiable_indices()) {
    s[schema[i].name] = t.saliency[i];
    c[schema[i].name] = t.scores[i];
    m[schema[i].name] = t.multiplier[i];
  }
  return {{"iteration", t.iteration}, {"feature", schema[t.feature].name}, {"step", t.step},
          {"clamped", t.clamped},     {"confidence", t.confidence},        {"saliency", s},
          {"scores", c},              {"multiplier", m}};
}

inline Json trajectory_json(const CounterfactualResult& r, const FeatureSchema& schema) {
  Json out = Json::array();
  for (const auto& t : r.trajectory) out.push_back(to_json(t, schema));
  return out;
}

// JSON Lines: one record per iteration.
inline std::string trajectory_log(const CounterfactualResult& r, const FeatureSchema& schema) {
  std::string out;
  for (const auto& t : r.trajectory) out += to_json(t, schema).dump() + '\n';
  return out;
}

}  // namespace glytwin
