#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "glytwin/domain.hpp"
#include "glytwin/error.hpp"

namespace glytwin {

// Probability per class, indexed by class_index(Outcome).
using Proba = std::array<double, kNumClasses>;

// A probabilistic binary classifier over raw feature vectors.
template <class P>
concept RawPredictor = requires(const P& p, std::span<const double> x) {
  { p.predict_proba(x) } -> std::convertible_to<Proba>;
};

// The same contract over encoded model inputs.
template <class M>
concept EncodedModel = requires(const M& m, std::span<const double> z) {
  { m.predict_proba_encoded(z) } -> std::convertible_to<Proba>;
};

inline std::size_t argmax(const Proba& p) { return p[1] > p[0] ? 1 : 0; }

inline bool is_distribution(const Proba& p, double tol = 1e-9) {
  return std::isfinite(p[0]) && std::isfinite(p[1]) && p[0] >= 0.0 && p[1] >= 0.0 &&
         std::abs(p[0] + p[1] - 1.0) <= tol;
}

// Binds a model to the encoder it was trained with, so callers work in raw
// units (grams, units, minutes, mg/dL).
template <EncodedModel M>
class Classifier {
 public:
  Classifier(Encoder encoder, M model) : encoder_(std::move(encoder)), model_(std::move(model)) {}

  Proba predict_proba(std::span<const double> x) const { return model_.predict_proba_encoded(encoder_.encode(x)); }

  const Encoder& encoder() const { return encoder_; }
  const M& model() const { return model_; }

 private:
  Encoder encoder_;
  M model_;
};

// Type-erased predictor; copies share the underlying immutable model.
class Predictor {
 public:
  Predictor() = default;

  template <RawPredictor P>
    requires(!std::same_as<std::remove_cvref_t<P>, Predictor>)
  Predictor(P p)  // NOLINT(google-explicit-constructor)
      : impl_(std::make_shared<Model<P>>(std::move(p))) {}

  Proba predict_proba(std::span<const double> x) const {
    if (!impl_) throw Error(ErrorCode::PredictorFailure, "predictor not loaded");
    return impl_->predict(x);
  }

  explicit operator bool() const { return static_cast<bool>(impl_); }

 private:
  struct Concept {
    virtual ~Concept() = default;
    virtual Proba predict(std::span<const double> x) const = 0;
  };
  template <class P>
  struct Model final : Concept {
    explicit Model(P p) : p(std::move(p)) {}
    Proba predict(std::span<const double> x) const override { return p.predict_proba(x); }
    P p;
  };
  std::shared_ptr<const Concept> impl_;
};

// Wraps any callable returning the hyperglycemia probability.
template <class F>
struct LambdaPredictor {
  F f;
  Proba predict_proba(std::span<const double> x) const {
    const double p1 = f(x);
    return {1.0 - p1, p1};
  }
};

template <class F>
LambdaPredictor(F) -> LambdaPredictor<F>;

}  // namespace glytwin
