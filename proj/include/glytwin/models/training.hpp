#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "glytwin/domain.hpp"
#include "glytwin/error.hpp"
#include "glytwin/models/predictor.hpp"

namespace glytwin {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Deterministic shuffled split; the first round(fraction * n) indices train.
inline Split split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, n)));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, n)), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline void require_trainable(std::span<const FactualSample> samples, std::size_t min_samples) {
  bool has[kNumClasses] = {false, false};
  for (const auto& s : samples) has[class_index(s.outcome)] = true;
  if (!has[0] || !has[1]) throw Error(ErrorCode::DegenerateData, "training data must contain both outcome classes");
  if (samples.size() < min_samples) {
    throw Error(ErrorCode::DegenerateData,
                "need at least " + std::to_string(min_samples) + " samples, got " + std::to_string(samples.size()));
  }
}

struct TrainingReport {
  double accuracy = 0.0;
  double f1 = 0.0;  // hyperglycemia as the positive class
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  Split split;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  double accuracy() const {
    const auto n = tp + fp + tn + fn;
    return n ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
  }
  double f1() const {
    const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
    return denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
};

template <RawPredictor P>
Confusion confusion(const P& model, std::span<const FactualSample> samples, std::span<const std::size_t> which) {
  Confusion c;
  for (auto i : which) {
    const bool pred = argmax(model.predict_proba(samples[i].features)) == class_index(Outcome::Hyperglycemia);
    const bool truth = samples[i].outcome == Outcome::Hyperglycemia;
    if (pred && truth) ++c.tp;
    else if (pred) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline std::vector<FactualSample> gather(std::span<const FactualSample> samples, std::span<const std::size_t> which) {
  std::vector<FactualSample> out;
  out.reserve(which.size());
  for (auto i : which) out.push_back(samples[i]);
  return out;
}

}  // namespace glytwin
