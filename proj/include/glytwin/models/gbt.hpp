#pragma once

// Gradient-boosted regression trees on logistic loss, used as the external
// simulator that judges CF validity. Trees split raw feature values (nominal
// levels are ordinal codes, which a depth-13 tree separates freely).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "glytwin/domain.hpp"
#include "glytwin/error.hpp"
#include "glytwin/models/predictor.hpp"
#include "glytwin/models/training.hpp"

namespace glytwin {

struct GbtSpec {
  std::size_t max_depth = 13;
  double learning_rate = 0.1;
  std::size_t n_estimators = 100;
  double train_fraction = 0.85;
  double lambda = 1.0;            // L2 penalty on leaf values
  double min_child_weight = 1.0;  // minimum hessian mass per child
};

inline void validate(const GbtSpec& s) {
  if (s.max_depth == 0 || s.n_estimators == 0) throw Error(ErrorCode::InvalidArgument, "max_depth and n_estimators must be > 0");
  if (!(s.learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train_fraction must be in (0, 1)");
  }
  if (s.lambda < 0.0 || s.min_child_weight < 0.0) throw Error(ErrorCode::InvalidArgument, "lambda and min_child_weight must be >= 0");
}

struct TreeNode {
  // Leaf when feature < 0.
  int feature = -1;
  double threshold = 0.0;  // go left when x[feature] < threshold
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
  }
};

class GbtModel {
 public:
  GbtModel() = default;
  GbtModel(GbtSpec spec, std::size_t n_features, double base_margin, std::vector<RegressionTree> trees)
      : spec_(spec), n_features_(n_features), base_margin_(base_margin), trees_(std::move(trees)) {}

  double margin(std::span<const double> x) const {
    if (x.size() != n_features_) throw Error(ErrorCode::SchemaMismatch, "gbt: input width mismatch");
    double m = base_margin_;
    for (const auto& t : trees_) m += spec_.learning_rate * t.predict(x);
    return m;
  }

  Proba predict_proba(std::span<const double> x) const {
    const double m = margin(x);
    const double p1 = m >= 0.0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m));
    return {1.0 - p1, p1};
  }

  const GbtSpec& spec() const { return spec_; }
  std::size_t n_features() const { return n_features_; }
  double base_margin() const { return base_margin_; }
  const std::vector<RegressionTree>& trees() const { return trees_; }

 private:
  GbtSpec spec_;
  std::size_t n_features_ = 0;
  double base_margin_ = 0.0;
  std::vector<RegressionTree> trees_;
};

namespace detail {

struct TreeBuilder {
  const std::vector<std::vector<double>>& x;
  const std::vector<double>& grad;
  const std::vector<double>& hess;
  const GbtSpec& spec;
  RegressionTree tree;
  std::vector<std::size_t> order;

  double leaf_value(double g, double h) const { return -g / (h + spec.lambda); }
  double score(double g, double h) const { return g * g / (h + spec.lambda); }

  int build(std::vector<std::size_t>& rows, std::size_t depth) {
    double g = 0.0, h = 0.0;
    for (auto r : rows) {
      g += grad[r];
      h += hess[r];
    }
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, leaf_value(g, h)});
    if (depth >= spec.max_depth || rows.size() < 2) return id;

    const double parent = score(g, h);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    const std::size_t d = x.empty() ? 0 : x[rows.front()].size();
    for (std::size_t f = 0; f < d; ++f) {
      order = rows;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a][f] < x[b][f] || (x[a][f] == x[b][f] && a < b);
      });
      double gl = 0.0, hl = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        gl += grad[order[k]];
        hl += hess[order[k]];
        const double v = x[order[k]][f];
        const double next = x[order[k + 1]][f];
        if (v == next) continue;
        const double hr = h - hl;
        if (hl < spec.min_child_weight || hr < spec.min_child_weight) continue;
        const double gain = score(gl, hl) + score(g - gl, hr) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (v + next);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows) {
      (x[r][static_cast<std::size_t>(best_feature)] < best_threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

inline double logistic_loss(double margin, int y) {
  // log(1 + e^m) - y m, computed stably
  const double softplus = margin > 0.0 ? margin + std::log1p(std::exp(-margin)) : std::log1p(std::exp(margin));
  return softplus - static_cast<double>(y) * margin;
}

}  // namespace detail

struct GbtFit {
  GbtModel model;
  std::vector<double> train_loss;  // mean logistic loss after each round
};

// Fits on raw feature vectors with 0/1 labels (1 = hyperglycemia).
inline GbtFit fit_gbt(const std::vector<std::vector<double>>& x, const std::vector<int>& y, const GbtSpec& spec) {
  validate(spec);
  if (x.empty() || x.size() != y.size()) throw Error(ErrorCode::DegenerateData, "gbt: empty or misaligned training data");
  const std::size_t n = x.size();
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  if (pos == 0.0 || pos == static_cast<double>(n)) {
    throw Error(ErrorCode::DegenerateData, "training data must contain both outcome classes");
  }
  const double base = std::log(pos / (static_cast<double>(n) - pos));
  std::vector<double> margin(n, base), grad(n), hess(n);
  std::vector<RegressionTree> trees;
  std::vector<double> losses;
  for (std::size_t round = 0; round < spec.n_estimators; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-margin[i]));
      grad[i] = p - static_cast<double>(y[i]);
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    detail::TreeBuilder b{x, grad, hess, spec, {}, {}};
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    b.build(rows, 0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += spec.learning_rate * b.tree.predict(x[i]);
      loss += detail::logistic_loss(margin[i], y[i]);
    }
    losses.push_back(loss / static_cast<double>(n));
    trees.push_back(std::move(b.tree));
  }
  return {GbtModel(spec, x.front().size(), base, std::move(trees)), std::move(losses)};
}

struct TrainedGbt {
  GbtModel model;
  TrainingReport report;
  std::vector<double> train_loss;
};

inline TrainedGbt train_simulator(std::span<const FactualSample> samples, const GbtSpec& spec, std::uint64_t seed) {
  validate(spec);
  require_trainable(samples, 200);
  const Split split = split_indices(samples.size(), spec.train_fraction, seed);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (auto i : split.train) {
    x.push_back(samples[i].features);
    y.push_back(static_cast<int>(class_index(samples[i].outcome)));
  }
  auto fit = fit_gbt(x, y, spec);
  const Confusion c = confusion(fit.model, samples, split.test);
  TrainingReport report{c.accuracy(), c.f1(), split.train.size(), split.test.size(), split};
  return {std::move(fit.model), std::move(report), std::move(fit.train_loss)};
}

}  // namespace glytwin
