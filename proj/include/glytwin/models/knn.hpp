#pragma once

// Nearest-neighbour vote over mixed features: continuous differences are
// divided by the training range, nominal features contribute 0/1.

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "glytwin/domain.hpp"
#include "glytwin/error.hpp"

namespace glytwin {

struct FeatureRanges {
  std::vector<double> min;
  std::vector<double> max;

  double range(std::size_t i) const { return max[i] - min[i]; }
};

inline FeatureRanges compute_ranges(std::span<const FactualSample> samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no samples to take ranges from");
  const std::size_t d = samples.front().features.size();
  FeatureRanges r{samples.front().features, samples.front().features};
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < d; ++i) {
      r.min[i] = std::min(r.min[i], s.features[i]);
      r.max[i] = std::max(r.max[i], s.features[i]);
    }
  }
  return r;
}

inline double mixed_distance(const FeatureSchema& schema, const FeatureRanges& ranges, std::span<const double> a,
                             std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].kind == FeatureKind::Nominal) {
      sum += a[i] == b[i] ? 0.0 : 1.0;
      continue;
    }
    const double r = ranges.range(i);
    const double diff = r > 0.0 ? (a[i] - b[i]) / r : 0.0;
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

struct Vote {
  Outcome label;
  double fraction;
};

class KnnIndex {
 public:
  KnnIndex(std::vector<FactualSample> train, FeatureSchema schema = default_schema())
      : train_(std::move(train)), schema_(std::move(schema)) {
    if (train_.empty()) throw Error(ErrorCode::EmptyTrainingSet, "knn: empty training set");
    ranges_ = compute_ranges(train_);
  }

  const std::vector<FactualSample>& train() const { return train_; }
  const FeatureRanges& ranges() const { return ranges_; }
  const FeatureSchema& schema() const { return schema_; }

  double distance(std::span<const double> a, std::span<const double> b) const {
    return mixed_distance(schema_, ranges_, a, b);
  }

  // Indices of the k nearest training samples; ties broken by index.
  std::vector<std::size_t> nearest(std::span<const double> query, std::size_t k) const {
    if (k == 0 || k > train_.size()) {
      throw Error(ErrorCode::InvalidK, "k=" + std::to_string(k) + " with " + std::to_string(train_.size()) + " samples");
    }
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(train_.size());
    for (std::size_t i = 0; i < train_.size(); ++i) d.emplace_back(distance(query, train_[i].features), i);
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(d[i].second);
    return out;
  }

  Vote vote(std::span<const double> query, std::size_t k) const {
    if (k % 2 == 0) throw Error(ErrorCode::InvalidK, "k must be odd");
    std::size_t hyper = 0;
    for (auto i : nearest(query, k)) hyper += train_[i].outcome == Outcome::Hyperglycemia;
    const std::size_t normo = k - hyper;
    const auto kd = static_cast<double>(k);
    if (hyper > normo) return {Outcome::Hyperglycemia, static_cast<double>(hyper) / kd};
    return {Outcome::Normoglycemia, static_cast<double>(normo) / kd};
  }

 private:
  std::vector<FactualSample> train_;
  FeatureSchema schema_;
  FeatureRanges ranges_;
};

inline Vote knn_vote(std::span<const FactualSample> train, const FactualSample& query, std::size_t k) {
  return KnnIndex(std::vector<FactualSample>(train.begin(), train.end())).vote(query.features, k);
}

}  // namespace glytwin
