#include <gtest/gtest.h>

#include <random>

#include "glytwin/models/gbt.hpp"
#include "glytwin/models/io.hpp"
#include "glytwin/models/knn.hpp"
#include "glytwin/models/mlp.hpp"
#include "support.hpp"

using namespace glytwin;
using glytwin::testing::sample_r1;

namespace {

// Two well-separated groups in carb size and premeal BGL.
std::vector<FactualSample> blobs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<FactualSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = sample_r1();
    s.patient_id = "B";
    const bool hyper = i % 2 == 1;
    s[Feature::CarbSize] = (hyper ? 90.0 : 30.0) + 8.0 * noise(rng);
    s[Feature::PremealBgl] = (hyper ? 200.0 : 110.0) + 10.0 * noise(rng);
    s[Feature::TotalBolus] = 5.0 + noise(rng);
    s.outcome = hyper ? Outcome::Hyperglycemia : Outcome::Normoglycemia;
    out.push_back(s);
  }
  return out;
}

double numeric_loss(MlpNetwork& net, const std::vector<double>& x, const std::vector<int>& y) {
  std::vector<double> scratch;
  return net.loss_and_gradient(x, y, scratch);
}

void gradient_check(MlpSpec spec) {
  const std::size_t in = 5, batch = 8;
  MlpNetwork net(in, spec);
  std::mt19937_64 rng(11);
  net.init_he_normal(rng);
  std::normal_distribution<double> n01(0.0, 1.0);
  // shake gamma/beta and biases away from their initial values
  for (auto& p : net.parameters()) p += 0.1 * n01(rng);
  std::vector<double> x(batch * in);
  for (auto& v : x) v = n01(rng);
  std::vector<int> y(batch);
  for (std::size_t b = 0; b < batch; ++b) y[b] = static_cast<int>(b % 2);

  std::vector<double> grad;
  net.loss_and_gradient(x, y, grad);
  const auto n = net.parameter_count();
  const std::size_t checks = std::min<std::size_t>(100, n);
  std::size_t bad = 0;
  for (std::size_t k = 0; k < checks; ++k) {
    const std::size_t i = k * n / checks;
    const double h = 1e-6, keep = net.parameters()[i];
    net.parameters()[i] = keep + h;
    const double up = numeric_loss(net, x, y);
    net.parameters()[i] = keep - h;
    const double down = numeric_loss(net, x, y);
    net.parameters()[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double rel = std::abs(fd - grad[i]) / std::max({1e-7, std::abs(fd), std::abs(grad[i])});
    if (rel > 1e-4 && std::abs(fd - grad[i]) > 1e-9) {
      ++bad;
      ADD_FAILURE() << "param " << i << ": analytic " << grad[i] << " numeric " << fd;
    }
  }
  EXPECT_EQ(bad, 0u);
}

}  // namespace

TEST(Mlp, GradientCheckPlain) {
  MlpSpec s;
  s.hidden = {4};
  s.batch_norm = false;
  s.dropout = 0.0;
  gradient_check(s);
}

TEST(Mlp, GradientCheckBatchNorm) {
  MlpSpec s;
  s.hidden = {6, 4};
  s.batch_norm = true;
  s.dropout = 0.0;
  gradient_check(s);
}

TEST(Mlp, SeparableBlobs) {
  MlpSpec s;
  s.epochs = 40;
  const auto data = blobs(300, 5);
  const auto m = train_mlp(data, s, 3);
  EXPECT_GE(m.report.accuracy, 0.95);
  EXPECT_EQ(m.report.n_train + m.report.n_test, data.size());
}

TEST(Mlp, SingleClassIsDegenerate) {
  auto data = blobs(300, 5);
  for (auto& s : data) s.outcome = Outcome::Normoglycemia;
  try {
    train_mlp(data, MlpSpec{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateData);
  }
}

TEST(Mlp, OutputsAreDistributions) {
  MlpSpec s;
  s.epochs = 5;
  const auto m = train_mlp(blobs(240, 2), s, 9);
  for (const auto& x : blobs(50, 77)) EXPECT_TRUE(is_distribution(m.classifier.predict_proba(x.features)));
}

TEST(Mlp, SplitIsDeterministic) {
  const auto a = split_indices(100, 0.85, 4), b = split_indices(100, 0.85, 4);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.train.size(), 85u);
  std::vector<int> seen(100, 0);
  for (auto i : a.train) ++seen[i];
  for (auto i : a.test) ++seen[i];
  for (int c : seen) EXPECT_EQ(c, 1);
}

TEST(Gbt, SingleStumpByHand) {
  GbtSpec s;
  s.max_depth = 1;
  s.n_estimators = 1;
  s.learning_rate = 1.0;
  s.min_child_weight = 0.1;
  const std::vector<std::vector<double>> x{{0}, {1}, {2}, {3}};
  const std::vector<int> y{0, 0, 1, 1};
  const auto fit = fit_gbt(x, y, s);
  // base margin 0, p = 0.5, g = p - y, h = 0.25; leaf = -G / (H + 1)
  const double leaf = 1.0 / (0.5 + 1.0);
  EXPECT_DOUBLE_EQ(fit.model.base_margin(), 0.0);
  EXPECT_NEAR(fit.model.margin(std::vector<double>{3}), leaf, 1e-12);
  EXPECT_NEAR(fit.model.margin(std::vector<double>{0}), -leaf, 1e-12);
  EXPECT_NEAR(fit.model.predict_proba(std::vector<double>{3})[1], 1.0 / (1.0 + std::exp(-leaf)), 1e-12);
}

TEST(Gbt, BaseMarginIsPriorLogOdds) {
  const std::vector<std::vector<double>> x{{0}, {1}, {2}, {3}, {4}};
  const std::vector<int> y{0, 1, 1, 1, 0};
  GbtSpec s;
  s.n_estimators = 1;
  EXPECT_NEAR(fit_gbt(x, y, s).model.base_margin(), std::log(3.0 / 2.0), 1e-12);
}

TEST(Gbt, TrainingLossNonIncreasing) {
  const auto data = blobs(300, 8);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::mt19937_64 rng(1);
  for (const auto& s : data) {
    x.push_back(s.features);
    // flip a fifth of the labels so the loss has somewhere to go
    y.push_back(static_cast<int>(class_index(s.outcome)) ^ (rng() % 5 == 0));
  }
  GbtSpec spec;
  spec.n_estimators = 40;
  const auto fit = fit_gbt(x, y, spec);
  ASSERT_EQ(fit.train_loss.size(), 40u);
  for (std::size_t i = 1; i < fit.train_loss.size(); ++i) EXPECT_LE(fit.train_loss[i], fit.train_loss[i - 1] + 1e-12);
}

TEST(Gbt, SpecEchoedInModelFile) {
  const auto t = train_simulator(blobs(240, 3), GbtSpec{}, 2);
  const auto j = model_to_json(t.model, t.report);
  EXPECT_EQ(j["spec"]["max_depth"], 13);
  EXPECT_EQ(j["spec"]["n_estimators"], 100);
  EXPECT_EQ(j["trees"].size(), 100u);
  EXPECT_GE(t.report.accuracy, 0.95);
}

TEST(Gbt, SingleClassIsDegenerate) {
  std::vector<std::vector<double>> x{{0}, {1}};
  std::vector<int> y{1, 1};
  EXPECT_THROW(fit_gbt(x, y, GbtSpec{}), Error);
}

namespace {
std::vector<FactualSample> knn_set(std::vector<Outcome> labels) {
  std::vector<FactualSample> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto s = sample_r1();
    s[Feature::CarbSize] = 10.0 * static_cast<double>(i);
    s.outcome = labels[i];
    out.push_back(s);
  }
  return out;
}
constexpr auto N = Outcome::Normoglycemia;
constexpr auto H = Outcome::Hyperglycemia;
}  // namespace

TEST(Knn, IdentityK1) {
  const auto train = knn_set({N, H, N, H});
  const auto v = knn_vote(train, train[1], 1);
  EXPECT_EQ(v.label, H);
  EXPECT_EQ(v.fraction, 1.0);
}

TEST(Knn, MajorityOfFive) {
  const auto train = knn_set({N, N, N, H, H, H, H});
  auto q = train[0];
  q[Feature::CarbSize] = -5;
  const auto v = knn_vote(train, q, 5);
  EXPECT_EQ(v.label, N);
  EXPECT_DOUBLE_EQ(v.fraction, 0.6);
}

TEST(Knn, InvalidK) {
  const auto train = knn_set({N, H});
  for (std::size_t k : {5u, 2u, 0u}) {
    try {
      knn_vote(train, train[0], k);
      ADD_FAILURE() << k;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidK);
    }
  }
  EXPECT_THROW(KnnIndex(std::vector<FactualSample>{}), Error);
}

TEST(Knn, MixedDistanceByHand) {
  const auto train = knn_set({N, H, N});  // carb range 20
  KnnIndex idx(train);
  auto a = train[0], b = train[0];
  b[Feature::CarbSize] = 10;
  b[Feature::Mode] = static_cast<double>(Mode::Sleep);
  // continuous (10 / 20)^2 plus one nominal mismatch
  EXPECT_NEAR(idx.distance(a.features, b.features), std::sqrt(0.25 + 1.0), 1e-12);
}

TEST(Knn, TiesByIndex) {
  const auto train = knn_set({H, N, H});
  auto q = train[0];
  q[Feature::CarbSize] = 5;  // equidistant from rows 0 and 1
  EXPECT_EQ(KnnIndex(train).nearest(q.features, 1).front(), 0u);
}

TEST(ModelIo, MlpRoundTrip) {
  MlpSpec s;
  s.epochs = 3;
  const auto m = train_mlp(blobs(240, 4), s, 1);
  const auto loaded = model_from_json(Json::parse(model_to_json(m.classifier, m.report).dump()));
  EXPECT_EQ(loaded.kind, "mlp");
  const auto p = loaded.predictor();
  for (const auto& x : blobs(30, 9)) {
    const auto a = m.classifier.predict_proba(x.features), b = p.predict_proba(x.features);
    EXPECT_DOUBLE_EQ(a[1], b[1]);
  }
}

TEST(ModelIo, GbtRoundTrip) {
  GbtSpec s;
  s.n_estimators = 10;
  const auto t = train_simulator(blobs(240, 4), s, 1);
  const auto loaded = model_from_json(Json::parse(model_to_json(t.model, t.report).dump()));
  EXPECT_EQ(loaded.kind, "gbt");
  for (const auto& x : blobs(30, 9)) EXPECT_DOUBLE_EQ(t.model.predict_proba(x.features)[1], loaded.predictor().predict_proba(x.features)[1]);
}

TEST(ModelIo, Rejects) {
  GbtSpec s;
  s.n_estimators = 2;
  const auto t = train_simulator(blobs(240, 4), s, 1);
  auto j = model_to_json(t.model, t.report);
  auto bad = j;
  bad["features"][0] = "years";
  EXPECT_THROW(model_from_json(bad), Error);
  bad = j;
  bad["version"] = 9;
  EXPECT_THROW(model_from_json(bad), Error);
  bad = j;
  bad.erase("trees");
  EXPECT_THROW(model_from_json(bad), Error);
}

TEST(Predictor, TypeErasure) {
  Predictor empty;
  EXPECT_THROW(empty.predict_proba(std::vector<double>(3)), Error);
  Predictor p{LambdaPredictor{[](std::span<const double> x) { return x[0]; }}};
  const auto pr = p.predict_proba(std::vector<double>{0.25});
  EXPECT_EQ(pr[1], 0.25);
  EXPECT_EQ(pr[0], 0.75);
}
