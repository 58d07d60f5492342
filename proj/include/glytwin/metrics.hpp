#pragma once

// Counterfactual quality metrics. CF lists are aligned with their factuals.

#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glytwin/domain.hpp"
#include "glytwin/engine.hpp"
#include "glytwin/error.hpp"
#include "glytwin/json_io.hpp"
#include "glytwin/models/knn.hpp"
#include "glytwin/models/predictor.hpp"

namespace glytwin {

inline constexpr double kChangeTolerance = 1e-9;
inline constexpr std::size_t kNnTestK = 5;

namespace detail {

inline void require_nonempty(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::EmptySet, "no counterfactuals");
}

inline void require_aligned(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorCode::InvalidArgument, "counterfactuals and factuals are not aligned");
}

inline bool changed(double a, double b) { return std::abs(a - b) > kChangeTolerance; }

}  // namespace detail

// Share of CFs that the simulator assigns to the target class.
template <RawPredictor P>
double validity(std::span<const FactualSample> cfs, const P& simulator, Outcome target = Outcome::Normoglycemia) {
  detail::require_nonempty(cfs.size());
  std::size_t ok = 0;
  for (const auto& cf : cfs) ok += argmax(simulator.predict_proba(cf.features)) == class_index(target);
  return static_cast<double>(ok) / static_cast<double>(cfs.size());
}

inline double nn_test(std::span<const FactualSample> cfs, const KnnIndex& history, std::size_t k = kNnTestK,
                      Outcome target = Outcome::Normoglycemia) {
  detail::require_nonempty(cfs.size());
  std::size_t ok = 0;
  for (const auto& cf : cfs) ok += history.vote(cf.features, k).label == target;
  return static_cast<double>(ok) / static_cast<double>(cfs.size());
}

// Range-normalized L2 over continuous features.
inline double proximity(std::span<const double> cf, std::span<const double> factual, const FeatureRanges& ranges,
                        const FeatureSchema& schema = default_schema()) {
  double sum = 0.0;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].kind != FeatureKind::Continuous) continue;
    const double r = ranges.range(i);
    if (!(r > 0.0)) throw Error(ErrorCode::DegenerateRange, "feature '" + schema[i].name + "' has zero range");
    const double z = (cf[i] - factual[i]) / r;
    sum += z * z;
  }
  return std::sqrt(sum);
}

inline double mean_proximity(std::span<const FactualSample> cfs, std::span<const FactualSample> factuals,
                             const FeatureRanges& ranges, const FeatureSchema& schema = default_schema()) {
  detail::require_nonempty(cfs.size());
  detail::require_aligned(cfs.size(), factuals.size());
  double sum = 0.0;
  for (std::size_t n = 0; n < cfs.size(); ++n) sum += proximity(cfs[n].features, factuals[n].features, ranges, schema);
  return sum / static_cast<double>(cfs.size());
}

inline std::size_t changed_count(std::span<const double> cf, std::span<const double> factual) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < cf.size(); ++i) c += detail::changed(cf[i], factual[i]);
  return c;
}

inline double sparsity(std::span<const FactualSample> cfs, std::span<const FactualSample> factuals) {
  detail::require_nonempty(cfs.size());
  detail::require_aligned(cfs.size(), factuals.size());
  double sum = 0.0;
  for (std::size_t n = 0; n < cfs.size(); ++n) {
    sum += static_cast<double>(changed_count(cfs[n].features, factuals[n].features));
  }
  return sum / static_cast<double>(cfs.size());
}

inline double violations(std::span<const FactualSample> cfs, std::span<const FactualSample> factuals,
                         const FeatureSchema& schema = default_schema()) {
  detail::require_nonempty(cfs.size());
  detail::require_aligned(cfs.size(), factuals.size());
  double sum = 0.0;
  for (std::size_t n = 0; n < cfs.size(); ++n) {
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (!schema[i].modifiable) sum += detail::changed(cfs[n].features[i], factuals[n].features[i]);
    }
  }
  return sum / static_cast<double>(cfs.size());
}

// Share of CFs whose every feature lies inside the reference data's ranges.
inline double plausibility(std::span<const FactualSample> cfs, const FeatureRanges& reference) {
  detail::require_nonempty(cfs.size());
  std::size_t ok = 0;
  for (const auto& cf : cfs) {
    bool inside = true;
    for (std::size_t i = 0; i < cf.features.size(); ++i) {
      inside = inside && cf.features[i] >= reference.min[i] && cf.features[i] <= reference.max[i];
    }
    ok += inside;
  }
  return static_cast<double>(ok) / static_cast<double>(cfs.size());
}

inline double plausibility(std::span<const FactualSample> cfs, std::span<const FactualSample> reference) {
  if (reference.empty()) throw Error(ErrorCode::EmptyTrainingSet, "plausibility needs reference data");
  return plausibility(cfs, compute_ranges(reference));
}

// Sum over ordered pairs i != j of |x_i^k - x_j^k|, divided by the CF count.
inline double feature_diversity(std::span<const FactualSample> cfs, std::size_t k) {
  if (cfs.size() < 2) throw Error(ErrorCode::TooFewCfs, "diversity needs at least 2 counterfactuals");
  std::vector<double> v;
  v.reserve(cfs.size());
  for (const auto& cf : cfs) v.push_back(cf.features[k]);
  std::sort(v.begin(), v.end());
  // For sorted values the ordered-pair sum is 2 * sum_i v_i * (2i - n + 1).
  double sum = 0.0;
  const auto n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sum += v[i] * (2.0 * static_cast<double>(i) - n + 1.0);
  return 2.0 * sum / n;
}

struct Alignment {
  std::vector<std::string> features;
  std::vector<double> weight;  // (w_p + w_u) scaled to max 1
  std::vector<double> change;  // mean |delta| scaled to max 1
  std::optional<double> correlation;  // empty when either vector is constant
};

inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

// Mean |delta| is taken in units of each feature's step so that grams,
// units, minutes and mg/dL compare on one scale.
inline Alignment preference_alignment(std::span<const CounterfactualResult> results, const PreferenceWeights& w,
                                      const FeatureSchema& schema = default_schema()) {
  std::size_t n_conv = 0;
  for (const auto& r : results) n_conv += r.converged;
  if (n_conv < 10) throw Error(ErrorCode::TooFewResults, "alignment needs at least 10 converged results");
  Alignment a;
  for (auto i : schema.modifiable_indices()) {
    a.features.push_back(schema[i].name);
    a.weight.push_back(w.physician[i] + w.user[i]);
    double sum = 0.0;
    for (const auto& r : results) {
      if (r.converged) sum += std::abs(r.counterfactual.features[i] - r.factual.features[i]) / schema[i].step;
    }
    a.change.push_back(sum / static_cast<double>(n_conv));
  }
  auto scale = [](std::vector<double>& v) {
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, x);
    if (mx > 0.0) {
      for (double& x : v) x /= mx;
    }
  };
  scale(a.weight);
  scale(a.change);
  a.correlation = pearson(a.weight, a.change);
  return a;
}

struct MetricsReport {
  std::string generator;
  double validity = 0.0;
  double nn_test = 0.0;
  double proximity = 0.0;
  double sparsity = 0.0;
  double violations = 0.0;
  double plausibility = 0.0;
  std::vector<std::string> diversity_features;
  std::vector<double> diversity;
  std::size_t n_factuals = 0;
  std::size_t n_converged = 0;
};

// Everything a report needs besides the CFs themselves.
struct EvaluationContext {
  Predictor simulator;
  const KnnIndex* history = nullptr;  // neighbours for the NN test
  FeatureRanges proximity_ranges;
  FeatureRanges plausibility_ranges;
  FeatureSchema schema = default_schema();
  std::size_t k = kNnTestK;
  Outcome target = Outcome::Normoglycemia;
};

inline MetricsReport evaluate_cfs(std::string generator, std::span<const FactualSample> cfs,
                                  std::span<const FactualSample> factuals, std::size_t n_converged,
                                  const EvaluationContext& ctx) {
  MetricsReport r;
  r.generator = std::move(generator);
  r.n_factuals = factuals.size();
  r.n_converged = n_converged;
  r.validity = validity(cfs, ctx.simulator, ctx.target);
  r.nn_test = nn_test(cfs, *ctx.history, ctx.k, ctx.target);
  r.proximity = mean_proximity(cfs, factuals, ctx.proximity_ranges, ctx.schema);
  r.sparsity = sparsity(cfs, factuals);
  r.violations = violations(cfs, factuals, ctx.schema);
  r.plausibility = plausibility(cfs, ctx.plausibility_ranges);
  if (cfs.size() >= 2) {
    for (auto i : ctx.schema.modifiable_indices()) {
      r.diversity_features.push_back(ctx.schema[i].name);
      r.diversity.push_back(feature_diversity(cfs, i));
    }
  }
  return r;
}

inline Json to_json(const MetricsReport& r) {
  Json div = Json::object();
  for (std::size_t i = 0; i < r.diversity.size(); ++i) div[r.diversity_features[i]] = r.diversity[i];
  return {{"generator", r.generator},   {"validity", r.validity},         {"nn_test", r.nn_test},
          {"proximity", r.proximity},   {"sparsity", r.sparsity},         {"violations", r.violations},
          {"plausibility", r.plausibility}, {"diversity", div},           {"n_factuals", r.n_factuals},
          {"n_converged", r.n_converged}};
}

inline std::string format_fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Plain-text comparison table, one row per generator.
inline std::string metrics_table(std::span<const MetricsReport> rows) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-10s %9s %9s %10s %9s %11s %13s\n", "method", "validity", "NN test", "proximity",
                "sparsity", "violations", "plausibility");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-10s %9.3f %9.3f %10.3f %9.3f %11.3f %13.3f\n", r.generator.c_str(), r.validity,
                  r.nn_test, r.proximity, r.sparsity, r.violations, r.plausibility);
    out += line;
  }
  return out;
}

}  // namespace glytwin
