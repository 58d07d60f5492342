#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "glytwin/harness.hpp"
#include "support.hpp"

using namespace glytwin;
using glytwin::testing::default_experiment;
using glytwin::testing::sample_r1;

namespace {
CounterfactualResult result_for(const FactualSample& f, const FactualSample& cf, bool converged = true) {
  CounterfactualResult r;
  r.factual = f;
  r.counterfactual = cf;
  r.converged = converged;
  r.termination = converged ? Termination::Converged : Termination::MaxIterations;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

TEST(Narrate, BolusTimingAndPremeal) {
  auto f = sample_r1();
  f[Feature::TotalBolus] = 4.1;
  f[Feature::DeltaT] = 10;
  f[Feature::PremealBgl] = 113;
  auto cf = f;
  cf[Feature::TotalBolus] = 7.69;
  cf[Feature::DeltaT] = -5;
  cf[Feature::PremealBgl] = 100;
  const auto s = narrate(f, result_for(f, cf));
  EXPECT_EQ(s.rfind("You can prevent hyperglycemia if you ", 0), 0u) << s;
  EXPECT_NE(s.find("5 minutes before meal"), std::string::npos) << s;
  EXPECT_NE(s.find("7.69 units"), std::string::npos) << s;
  EXPECT_NE(s.find("3.59 units"), std::string::npos) << s;
  EXPECT_NE(s.find("drops to 100 mg/dL"), std::string::npos) << s;
  EXPECT_EQ(s.back(), '.');
}

TEST(Narrate, CarbsOnly) {
  auto f = sample_r1();
  auto cf = f;
  cf[Feature::CarbSize] = 10;
  EXPECT_EQ(narrate(f, result_for(f, cf)),
            "You can prevent hyperglycemia if you reduce the meal to 10 g of carbohydrates (from 20 g).");
}

TEST(Narrate, NoChange) {
  const auto f = sample_r1();
  EXPECT_NE(narrate(f, result_for(f, f)).find("no change needed"), std::string::npos);
}

TEST(Narrate, NotConverged) {
  const auto f = sample_r1();
  try {
    narrate(f, result_for(f, f, false));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotConverged);
  }
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.seed = 11;
  c.gamma = 0.7;
  c.gamma_grid = {0.5, 0.8};
  c.w_user[index(Feature::CarbSize)] = 0.25;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.seed, 11u);
  EXPECT_EQ(back.w_user[index(Feature::CarbSize)], 0.25);
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(Json{{"sed", 3}}), Error);
  EXPECT_THROW(config_from_json(Json{{"gamma_grid", {0.4}}}), Error);
  EXPECT_THROW(config_from_json(Json{{"knn_k", 4}}), Error);
  EXPECT_THROW(config_from_json(Json{{"seed", "x"}}), Error);
  EXPECT_THROW(config_from_json(Json::array()), Error);
  EXPECT_EQ(config_from_json(Json::object()).seed, 7u);
}

TEST(Subgroups, BinLabels) {
  const std::vector<double> edges{40, 60};
  EXPECT_EQ(bin_label(39.9, edges), "<40");
  EXPECT_EQ(bin_label(40, edges), "40-60");
  EXPECT_EQ(bin_label(60, edges), ">=60");
  EXPECT_EQ(bin_label(6.5, {6.5, 7.5}), "6.5-7.5");
  EXPECT_EQ(bin_label(3, {}), "all");
}

TEST(Runtime, Summary) {
  std::vector<CfRecord> recs(4);
  for (std::size_t i = 0; i < 4; ++i) {
    recs[i].result.converged = i < 3;
    recs[i].result.wall_time = 0.001 * static_cast<double>(i + 1);
    recs[i].result.iterations = 10 * (i + 1);
    recs[i].result.factual = sample_r1();
    recs[i].result.counterfactual = sample_r1();
  }
  recs[0].result.counterfactual[Feature::DeltaT] = 5;
  const auto s = runtime_report(recs);
  EXPECT_EQ(s.n_converged, 3u);
  EXPECT_EQ(s.n_not_converged, 1u);
  EXPECT_NEAR(s.median_converged, 0.002, 1e-12);
  EXPECT_EQ(s.mean_iterations_not_converged, 40.0);
  EXPECT_EQ(share_delaying_bolus(recs), 0.25);
}

TEST(Sweep, SinglePointHasNoFlags) {
  SweepReport s{"gamma", {SweepRow{}}, {}, {}, {}};
  set_trend_flags(s);
  EXPECT_FALSE(s.iterations_non_decreasing.has_value());
  EXPECT_FALSE(s.sparsity_spread.has_value());
  EXPECT_TRUE(to_json(s)["iterations_non_decreasing"].is_null());
}

TEST(Sweep, Flags) {
  SweepReport s{"gamma", {}, {}, {}, {}};
  for (double v : {1.0, 2.0, 2.0}) {
    SweepRow r;
    r.mean_iterations = v;
    r.mean_proximity = 3 - v;
    r.sparsity = v;
    s.rows.push_back(r);
  }
  set_trend_flags(s);
  EXPECT_TRUE(*s.iterations_non_decreasing);
  EXPECT_FALSE(*s.proximity_non_decreasing);
  EXPECT_EQ(*s.sparsity_spread, 1.0);
  EXPECT_EQ(sweep_csv(s).substr(0, 6), "gamma,");
}

// End-to-end on the default experiment.

TEST(Experiment, SplitsAndPool) {
  const auto& e = default_experiment();
  EXPECT_GT(e.test_pool.size(), 50u);
  EXPECT_EQ(e.train.size(), e.classifier.report.n_train);
  EXPECT_GE(e.simulator_samples, 1000u);
  const auto p = e.predictor();
  for (auto i : e.test_pool) {
    EXPECT_EQ(argmax(p.predict_proba(e.dataset.samples[i].features)), class_index(Outcome::Hyperglycemia));
  }
}

TEST(Experiment, PersonalBoundsAndInvariants) {
  const auto& e = default_experiment();
  const auto recs = run_glytwin(e, 0.6);
  ASSERT_EQ(recs.size(), e.test_pool.size());
  const auto cfs = cfs_of(recs), fs = factuals_of(recs);
  EXPECT_EQ(violations(cfs, fs), 0.0);
  EXPECT_EQ(plausibility(cfs, e.data_ranges), 1.0);
  for (const auto& r : recs) {
    const auto p = cf_params_for(e, r.result.factual, 0.6);
    for (auto i : p.schema.modifiable_indices()) {
      ASSERT_GE(r.result.counterfactual.features[i], p.schema[i].min);
      ASSERT_LE(r.result.counterfactual.features[i], p.schema[i].max);
    }
    ASSERT_LE(r.result.iterations, e.config.max_iter);
  }
}

TEST(Experiment, HigherGammaNeedsAtLeastAsManySteps) {
  const auto& e = default_experiment();
  const auto lo = run_glytwin(e, 0.6), hi = run_glytwin(e, 0.75);
  for (std::size_t n = 0; n < lo.size(); ++n) EXPECT_GE(hi[n].result.iterations, lo[n].result.iterations);
}

TEST(Experiment, DeltaOverridesSteps) {
  const auto& e = default_experiment();
  const auto& x = e.dataset.samples[e.test_pool.front()];
  const auto p = cf_params_for(e, x, 0.6, 0.1);
  const auto carb = index(Feature::CarbSize);
  EXPECT_NEAR(p.schema[carb].step, 0.1 * e.data_ranges.range(carb), 1e-12);
}

TEST(Experiment, SubgroupsPartition) {
  const auto& e = default_experiment();
  const auto recs = run_glytwin(e, 0.6);
  const auto rows = subgroup_report(recs, e.profiles, e.config.bins);
  std::map<std::string, std::size_t> per_dim;
  for (const auto& g : rows) {
    per_dim[g.dimension] += g.n;
    EXPECT_GE(g.sparsity, 0.0);
    EXPECT_LE(g.sparsity, static_cast<double>(kNumFeatures));
    EXPECT_EQ(g.low_confidence, g.n < kSmallGroup || g.patients < kSmallGroup);
  }
  ASSERT_EQ(per_dim.size(), 4u);
  for (const auto& [dim, n] : per_dim) EXPECT_EQ(n, recs.size()) << dim;
}

TEST(Experiment, OtherSeedKeepsInvariants) {
  ExperimentConfig c;
  c.seed = 3;
  c.synth.n_patients = 10;
  const auto e = prepare_experiment(c);
  const auto recs = run_glytwin(e, 0.6);
  ASSERT_FALSE(recs.empty());
  EXPECT_EQ(violations(cfs_of(recs), factuals_of(recs)), 0.0);
  EXPECT_EQ(plausibility(cfs_of(recs), e.data_ranges), 1.0);
}

TEST(Experiment, EvaluationFiles) {
  const auto& e = default_experiment();
  const auto out = run_evaluation(e);
  ASSERT_EQ(out.table.size(), 2u);
  EXPECT_EQ(out.baseline.size(), out.glytwin.size());
  const auto dir = glytwin::testing::temp_dir("eval");
  write_evaluation(e, out, dir.string());
  for (const char* f : {"metrics.json", "metrics.txt", "results.jsonl", "baseline.jsonl", "alignment.json",
                        "training.json", "timing_evaluate.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto m = Json::parse(slurp(dir / "metrics.json"));
  EXPECT_EQ(m["table"][0]["generator"], out.table[0].generator);
  EXPECT_EQ(m["table"][0]["violations"], 0.0);
  std::filesystem::remove_all(dir);
}
