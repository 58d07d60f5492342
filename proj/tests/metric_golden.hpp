#pragma once

// Small hand-built CF sets for the evaluation metrics. Expected values are
// worked out by hand or by naive reimplementations below.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "glytwin/metrics.hpp"
#include "golden.hpp"
#include "support.hpp"

namespace glytwin::testing {

inline double naive_diversity(std::span<const FactualSample> cfs, std::size_t k) {
  double sum = 0.0;
  for (std::size_t i = 0; i < cfs.size(); ++i) {
    for (std::size_t j = 0; j < cfs.size(); ++j) {
      if (i != j) sum += std::abs(cfs[i].features[k] - cfs[j].features[k]);
    }
  }
  return sum / static_cast<double>(cfs.size());
}

inline FactualSample with(FactualSample s, Feature f, double v) {
  s[f] = v;
  return s;
}

// min 0 and max 100 for every feature except bolus [0, 10] and bgl [50, 250].
inline FeatureRanges fixture_ranges() {
  FeatureRanges r{std::vector<double>(kNumFeatures, 0.0), std::vector<double>(kNumFeatures, 100.0)};
  r.max[index(Feature::TotalBolus)] = 10;
  r.min[index(Feature::PremealBgl)] = 50;
  r.max[index(Feature::PremealBgl)] = 250;
  return r;
}

inline std::vector<Check> metric_golden() {
  std::vector<Check> out;
  const auto base = sample_r2();
  constexpr double tol = 1e-9;

  // simulator: hyperglycemic whenever carbs exceed 50 g
  const LambdaPredictor sim{[](std::span<const double> x) { return x[index(Feature::CarbSize)] > 50 ? 0.9 : 0.1; }};
  {
    const std::vector<FactualSample> cfs{with(base, Feature::CarbSize, 20), with(base, Feature::CarbSize, 30),
                                         with(base, Feature::CarbSize, 80), with(base, Feature::CarbSize, 45)};
    out.push_back(check_near("validity 3 of 4", validity(cfs, sim), 0.75, tol));
  }
  {
    std::vector<FactualSample> hist;
    for (int n = 0; n < 5; ++n) {
      auto s = with(base, Feature::CarbSize, 10.0 * n);
      s.outcome = n < 2 ? Outcome::Normoglycemia : Outcome::Hyperglycemia;
      hist.push_back(s);
    }
    const KnnIndex idx(hist);
    const std::vector<FactualSample> cfs{with(base, Feature::CarbSize, 0)};
    out.push_back(check_eq("nn test majority N,N,H,H,H is invalid", nn_test(cfs, idx, 5), 0.0));
    out.push_back(check_eq("nn test single nearest N is valid", nn_test(cfs, idx, 1), 1.0));
  }
  {
    const auto r = fixture_ranges();
    auto cf = with(with(with(base, Feature::CarbSize, 20), Feature::TotalBolus, 6.33), Feature::PremealBgl, 124);
    // (15/100)^2 + (0.5/10)^2 + (10/200)^2
    const double want = std::sqrt(0.0225 + 0.0025 + 0.0025);
    out.push_back(check_near("proximity three levers", proximity(cf.features, base.features, r), want, tol));
    auto sexed = with(base, Feature::Sex, 1 - base[Feature::Sex]);
    out.push_back(check_eq("proximity ignores nominal features", proximity(sexed.features, base.features, r), 0.0));
    out.push_back(check_eq("proximity identity", proximity(base.features, base.features, r), 0.0));
  }
  {
    const std::vector<FactualSample> f{base, base};
    const std::vector<FactualSample> cfs{with(with(base, Feature::CarbSize, 20), Feature::DeltaT, 0),
                                         with(with(with(base, Feature::CarbSize, 20), Feature::DeltaT, 0), Feature::PremealBgl, 100)};
    out.push_back(check_eq("sparsity 2 and 3 changes", sparsity(cfs, f), 2.5));
    out.push_back(check_eq("sparsity identity", sparsity(f, f), 0.0));
    out.push_back(check_eq("violations none", violations(cfs, f), 0.0));
    const std::vector<FactualSample> bad{with(base, Feature::A1c, 6.0), base};
    out.push_back(check_eq("violations a1c changed once in two", violations(bad, f), 0.5));
    const std::vector<FactualSample> one{with(base, Feature::A1c, 6.0)};
    const std::vector<FactualSample> f1{base};
    out.push_back(check_eq("violations a1c changed", violations(one, f1), 1.0));
  }
  {
    const auto r = fixture_ranges();
    const std::vector<FactualSample> cfs{with(base, Feature::PremealBgl, 120), with(base, Feature::PremealBgl, 260)};
    out.push_back(check_eq("plausibility one of two outside", plausibility(cfs, r), 0.5));
  }
  {
    const std::vector<FactualSample> cfs{with(base, Feature::CarbSize, 0), with(base, Feature::CarbSize, 10),
                                         with(base, Feature::CarbSize, 20)};
    const auto k = index(Feature::CarbSize);
    out.push_back(check_near("diversity 0,10,20 is 80/3", feature_diversity(cfs, k), 80.0 / 3.0, tol));
    out.push_back(check_near("diversity naive oracle", feature_diversity(cfs, k), naive_diversity(cfs, k), tol));
    const std::vector<FactualSample> same{base, base, base};
    out.push_back(check_eq("diversity identical", feature_diversity(same, k), 0.0));
  }
  {
    const std::vector<double> a{1, 2, 3}, b{3, 2, 1}, c{2, 4, 7};
    out.push_back(check_near("pearson perfect", pearson(a, a).value_or(0), 1.0, tol));
    out.push_back(check_near("pearson reversed", pearson(a, b).value_or(0), -1.0, tol));
    // centred sums: ab 5, aa 2, cc 38/3
    out.push_back(check_near("pearson hand", pearson(a, c).value_or(0), 5.0 / std::sqrt(2.0 * 38.0 / 3.0), tol));
  }
  return out;
}

// Naive reimplementations of the seven metrics.
namespace naive {

template <class P>
double validity(const std::vector<FactualSample>& cfs, const P& sim) {
  double n = 0;
  for (const auto& c : cfs) {
    const auto p = sim.predict_proba(c.features);
    if (p[0] >= p[1]) n += 1;
  }
  return n / static_cast<double>(cfs.size());
}

inline double nn_test(const std::vector<FactualSample>& cfs, const std::vector<FactualSample>& hist, std::size_t k) {
  const auto schema = default_schema();
  const auto r = compute_ranges(hist);
  double ok = 0;
  for (const auto& c : cfs) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < hist.size(); ++j) {
      double s = 0;
      for (std::size_t i = 0; i < kNumFeatures; ++i) {
        double t = 0;
        if (schema[i].kind == FeatureKind::Nominal) {
          t = c.features[i] != hist[j].features[i];
        } else if (r.max[i] > r.min[i]) {
          t = (c.features[i] - hist[j].features[i]) / (r.max[i] - r.min[i]);
        }
        s += t * t;
      }
      d.push_back({std::sqrt(s), j});
    }
    std::sort(d.begin(), d.end());
    std::size_t normo = 0;
    for (std::size_t j = 0; j < k; ++j) normo += hist[d[j].second].outcome == Outcome::Normoglycemia;
    ok += 2 * normo > k;
  }
  return ok / static_cast<double>(cfs.size());
}

inline double proximity(const std::vector<FactualSample>& cfs, const std::vector<FactualSample>& fs,
                        const FeatureRanges& r) {
  const auto schema = default_schema();
  double total = 0;
  for (std::size_t n = 0; n < cfs.size(); ++n) {
    double s = 0;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      if (schema[i].kind == FeatureKind::Nominal) continue;
      s += std::pow((cfs[n].features[i] - fs[n].features[i]) / (r.max[i] - r.min[i]), 2);
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(cfs.size());
}

inline double sparsity(const std::vector<FactualSample>& cfs, const std::vector<FactualSample>& fs) {
  double total = 0;
  for (std::size_t n = 0; n < cfs.size(); ++n) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) total += std::abs(cfs[n].features[i] - fs[n].features[i]) > 1e-9;
  }
  return total / static_cast<double>(cfs.size());
}

inline double violations(const std::vector<FactualSample>& cfs, const std::vector<FactualSample>& fs) {
  const auto schema = default_schema();
  double total = 0;
  for (std::size_t n = 0; n < cfs.size(); ++n) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      if (!schema[i].modifiable) total += std::abs(cfs[n].features[i] - fs[n].features[i]) > 1e-9;
    }
  }
  return total / static_cast<double>(cfs.size());
}

inline double plausibility(const std::vector<FactualSample>& cfs, const FeatureRanges& r) {
  double ok = 0;
  for (const auto& c : cfs) {
    bool in = true;
    for (std::size_t i = 0; i < kNumFeatures; ++i) in = in && r.min[i] <= c.features[i] && c.features[i] <= r.max[i];
    ok += in;
  }
  return ok / static_cast<double>(cfs.size());
}

}  // namespace naive

// Random fixtures of at most 10 CFs around hyperglycemic factuals, compared
// metric by metric with the naive versions, plus the identity fixture.
inline std::vector<Check> metric_oracle_checks(std::uint64_t seed = 17, int rounds = 40) {
  std::vector<Check> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const LambdaPredictor sim{[](std::span<const double> x) {
    return sigmoid((x[index(Feature::CarbSize)] - 5 * x[index(Feature::TotalBolus)] - x[index(Feature::DeltaT)] / 5 +
                    (x[index(Feature::PremealBgl)] - 120) / 10) / 10);
  }};
  const auto schema = default_schema();
  bool all = true;
  std::string first_bad;
  for (int t = 0; t < rounds; ++t) {
    std::vector<FactualSample> hist;
    for (int j = 0; j < 15; ++j) {
      auto s = sample_r2();
      s[Feature::Age] = 40 + 15 * u(rng);
      s[Feature::A1c] = 7 + u(rng);
      s[Feature::DeltaT] = 20 * u(rng);
      s[Feature::TotalBasal] = 1 + 0.5 * u(rng);
      s[Feature::PremealSlope] = 3 * u(rng);
      s[Feature::CarbSize] = 40 + 30 * u(rng);
      s[Feature::TotalBolus] = 5 + 4 * u(rng);
      s[Feature::Sex] = static_cast<double>(rng() % 2);
      s[Feature::PremealBgl] = 130 + 40 * u(rng);
      s.outcome = u(rng) < 0 ? Outcome::Normoglycemia : Outcome::Hyperglycemia;
      hist.push_back(s);
    }
    const std::size_t n = 1 + rng() % 10;
    std::vector<FactualSample> fs(hist.begin(), hist.begin() + static_cast<long>(n)), cfs = fs;
    for (auto& c : cfs) {
      for (auto i : schema.modifiable_indices()) {
        if (u(rng) < 0) c.features[i] += 10 * u(rng);
      }
      if (u(rng) > 0.8) c[Feature::A1c] += 0.5;
      if (u(rng) > 0.9) c[Feature::PremealBgl] = 400;
    }
    const auto ranges = compute_ranges(hist);
    const KnnIndex idx(hist);
    const std::size_t k = 1 + 2 * (rng() % 3);
    const std::pair<double, double> pairs[] = {
        {validity(cfs, sim), naive::validity(cfs, sim)},
        {nn_test(cfs, idx, k), naive::nn_test(cfs, hist, k)},
        {mean_proximity(cfs, fs, ranges), naive::proximity(cfs, fs, ranges)},
        {sparsity(cfs, fs), naive::sparsity(cfs, fs)},
        {violations(cfs, fs), naive::violations(cfs, fs)},
        {plausibility(cfs, ranges), naive::plausibility(cfs, ranges)},
        {cfs.size() > 1 ? feature_diversity(cfs, index(Feature::CarbSize)) : 0.0,
         cfs.size() > 1 ? naive_diversity(cfs, index(Feature::CarbSize)) : 0.0}};
    static const char* names[] = {"validity", "nn_test", "proximity", "sparsity", "violations", "plausibility",
                                  "diversity"};
    for (std::size_t m = 0; m < 7; ++m) {
      if (std::abs(pairs[m].first - pairs[m].second) > 1e-9 && all) {
        all = false;
        first_bad = std::string(names[m]) + " round " + std::to_string(t) + ": " +
                    csv::format_number(pairs[m].first) + " vs " + csv::format_number(pairs[m].second);
      }
    }
  }
  out.push_back({"seven metrics match naive versions", all, first_bad});

  // identity: factuals the simulator calls hyperglycemic, cf = factual
  std::vector<FactualSample> fs;
  for (double carb : {80.0, 90.0, 120.0}) fs.push_back(with(sample_r2(), Feature::CarbSize, carb));
  const auto ranges = fixture_ranges();
  out.push_back(check_eq("identity validity 0", validity(fs, sim), 0.0));
  out.push_back(check_eq("identity proximity 0", mean_proximity(fs, fs, ranges), 0.0));
  out.push_back(check_eq("identity sparsity 0", sparsity(fs, fs), 0.0));
  out.push_back(check_eq("identity violations 0", violations(fs, fs), 0.0));
  out.push_back(check_eq("identity plausibility 1", plausibility(fs, compute_ranges(fs)), 1.0));
  return out;
}

}  // namespace glytwin::testing
