#pragma once

// Dense hyperglycemia classifier: hidden blocks of
//   Dense(ReLU, He-normal) -> BatchNorm -> Dropout
// followed by a 2-unit sigmoid head whose outputs are renormalized to a
// distribution. Trained with Adam on cross-entropy of the normalized output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "glytwin/domain.hpp"
#include "glytwin/error.hpp"
#include "glytwin/models/predictor.hpp"
#include "glytwin/models/training.hpp"

namespace glytwin {

struct MlpSpec {
  std::vector<std::size_t> hidden{64, 32, 32};
  bool batch_norm = true;
  double dropout = 0.4;
  double learning_rate = 1e-3;
  std::size_t epochs = 400;
  std::size_t batch_size = 16;
  double train_fraction = 0.85;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-7;
};

inline void validate(const MlpSpec& s) {
  if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout must be in [0, 1)");
  if (s.batch_size == 0 || s.epochs == 0) throw Error(ErrorCode::InvalidArgument, "batch_size and epochs must be > 0");
  if (!(s.learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train_fraction must be in (0, 1)");
  }
  for (auto h : s.hidden) {
    if (h == 0) throw Error(ErrorCode::InvalidArgument, "hidden widths must be > 0");
  }
}

class MlpNetwork {
 public:
  MlpNetwork() = default;

  MlpNetwork(std::size_t input_dim, MlpSpec spec) : spec_(std::move(spec)), input_dim_(input_dim) {
    validate(spec_);
    std::size_t in = input_dim_;
    std::size_t off = 0;
    for (auto width : spec_.hidden) {
      Layer l;
      l.in = in;
      l.out = width;
      l.w = off;
      off += in * width;
      l.b = off;
      off += width;
      if (spec_.batch_norm) {
        l.gamma = off;
        off += width;
        l.beta = off;
        off += width;
      }
      layers_.push_back(l);
      running_mean_.emplace_back(width, 0.0);
      running_var_.emplace_back(width, 1.0);
      in = width;
    }
    head_.in = in;
    head_.out = kNumClasses;
    head_.w = off;
    off += in * kNumClasses;
    head_.b = off;
    off += kNumClasses;
    params_.assign(off, 0.0);
    for (const auto& l : layers_) {
      if (spec_.batch_norm) std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(l.gamma), l.out, 1.0);
    }
  }

  const MlpSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  const std::vector<std::vector<double>>& running_mean() const { return running_mean_; }
  const std::vector<std::vector<double>>& running_var() const { return running_var_; }
  std::vector<std::vector<double>>& running_mean() { return running_mean_; }
  std::vector<std::vector<double>>& running_var() { return running_var_; }

  // He-normal weights (std = sqrt(2 / fan_in)); zero biases.
  void init_he_normal(std::mt19937_64& rng) {
    auto init = [&](const Layer& l) {
      std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(l.in)));
      for (std::size_t i = 0; i < l.in * l.out; ++i) params_[l.w + i] = n(rng);
      std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(l.b), l.out, 0.0);
    };
    for (const auto& l : layers_) init(l);
    init(head_);
  }

  // Inference: running batch-norm statistics, no dropout.
  Proba predict_proba_encoded(std::span<const double> z) const {
    if (z.size() != input_dim_) throw Error(ErrorCode::SchemaMismatch, "mlp: input width mismatch");
    std::vector<double> h(z.begin(), z.end());
    std::vector<double> next;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      next.assign(l.out, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* w = &params_[l.w + o * l.in];
        double acc = params_[l.b + o];
        for (std::size_t i = 0; i < l.in; ++i) acc += w[i] * h[i];
        double a = acc > 0.0 ? acc : 0.0;
        if (spec_.batch_norm) {
          a = params_[l.gamma + o] * (a - running_mean_[li][o]) / std::sqrt(running_var_[li][o] + spec_.bn_epsilon) +
              params_[l.beta + o];
        }
        next[o] = a;
      }
      h.swap(next);
    }
    double s[kNumClasses];
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const double* w = &params_[head_.w + k * head_.in];
      double acc = params_[head_.b + k];
      for (std::size_t i = 0; i < head_.in; ++i) acc += w[i] * h[i];
      s[k] = sigmoid(acc);
    }
    return normalize(s);
  }

  // Mean cross-entropy over a mini-batch (rows of x, row-major) and its
  // gradient with respect to parameters(). Batch statistics are used for
  // batch norm; dropout applies only when `dropout_rng` is given.
  double loss_and_gradient(std::span<const double> x, std::span<const int> labels, std::vector<double>& grad,
                           std::mt19937_64* dropout_rng = nullptr, bool update_running = false) {
    const std::size_t batch = labels.size();
    if (batch == 0 || x.size() != batch * input_dim_) {
      throw Error(ErrorCode::InvalidArgument, "mlp: batch shape mismatch");
    }
    grad.assign(params_.size(), 0.0);
    const std::size_t n_layers = layers_.size();
    caches_.resize(n_layers);

    // Forward.
    std::vector<double> h(x.begin(), x.end());
    for (std::size_t li = 0; li < n_layers; ++li) {
      const auto& l = layers_[li];
      auto& c = caches_[li];
      c.input = h;
      c.pre.assign(batch * l.out, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* hb = &h[b * l.in];
        for (std::size_t o = 0; o < l.out; ++o) {
          const double* w = &params_[l.w + o * l.in];
          double acc = params_[l.b + o];
          for (std::size_t i = 0; i < l.in; ++i) acc += w[i] * hb[i];
          c.pre[b * l.out + o] = acc;
        }
      }
      std::vector<double> a(batch * l.out);
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = c.pre[i] > 0.0 ? c.pre[i] : 0.0;
      if (spec_.batch_norm) {
        c.xhat.assign(batch * l.out, 0.0);
        c.inv_std.assign(l.out, 0.0);
        for (std::size_t o = 0; o < l.out; ++o) {
          double mean = 0.0;
          for (std::size_t b = 0; b < batch; ++b) mean += a[b * l.out + o];
          mean /= static_cast<double>(batch);
          double var = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const double d = a[b * l.out + o] - mean;
            var += d * d;
          }
          var /= static_cast<double>(batch);
          const double inv = 1.0 / std::sqrt(var + spec_.bn_epsilon);
          c.inv_std[o] = inv;
          for (std::size_t b = 0; b < batch; ++b) {
            const double xh = (a[b * l.out + o] - mean) * inv;
            c.xhat[b * l.out + o] = xh;
            a[b * l.out + o] = params_[l.gamma + o] * xh + params_[l.beta + o];
          }
          if (update_running) {
            const double m = spec_.bn_momentum;
            running_mean_[li][o] = m * running_mean_[li][o] + (1.0 - m) * mean;
            running_var_[li][o] = m * running_var_[li][o] + (1.0 - m) * var;
          }
        }
      }
      c.mask.assign(batch * l.out, 1.0);
      if (dropout_rng && spec_.dropout > 0.0) {
        std::bernoulli_distribution keep(1.0 - spec_.dropout);
        const double scale = 1.0 / (1.0 - spec_.dropout);
        for (auto& m : c.mask) m = keep(*dropout_rng) ? scale : 0.0;
      }
      for (std::size_t i = 0; i < a.size(); ++i) a[i] *= c.mask[i];
      h.swap(a);
    }

    // Head and loss.
    double loss = 0.0;
    std::vector<double> d_h(batch * head_.in, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* hb = &h[b * head_.in];
      double s[kNumClasses];
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        const double* w = &params_[head_.w + k * head_.in];
        double acc = params_[head_.b + k];
        for (std::size_t i = 0; i < head_.in; ++i) acc += w[i] * hb[i];
        s[k] = sigmoid(acc);
      }
      const double total = s[0] + s[1];
      const auto y = static_cast<std::size_t>(labels[b]);
      const double p_true = std::max(s[y] / total, 1e-300);
      loss -= std::log(p_true);
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        const double t = k == y ? 1.0 : 0.0;
        const double p = s[k] / total;
        // d(-log p_y)/ds_k = (1 - t_k / p_k) / S
        const double ds = (1.0 - (t > 0.0 ? 1.0 / p : 0.0)) / total / static_cast<double>(batch);
        const double dz = ds * s[k] * (1.0 - s[k]);
        grad[head_.b + k] += dz;
        double* gw = &grad[head_.w + k * head_.in];
        const double* w = &params_[head_.w + k * head_.in];
        for (std::size_t i = 0; i < head_.in; ++i) {
          gw[i] += dz * hb[i];
          d_h[b * head_.in + i] += dz * w[i];
        }
      }
    }
    loss /= static_cast<double>(batch);

    // Backward through hidden blocks.
    for (std::size_t li = n_layers; li-- > 0;) {
      const auto& l = layers_[li];
      const auto& c = caches_[li];
      std::vector<double> d(batch * l.out);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = d_h[i] * c.mask[i];
      if (spec_.batch_norm) {
        for (std::size_t o = 0; o < l.out; ++o) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            sum_dy += d[b * l.out + o];
            sum_dy_xhat += d[b * l.out + o] * c.xhat[b * l.out + o];
          }
          grad[l.beta + o] += sum_dy;
          grad[l.gamma + o] += sum_dy_xhat;
          const double g = params_[l.gamma + o];
          const double nb = static_cast<double>(batch);
          for (std::size_t b = 0; b < batch; ++b) {
            const double dxhat = d[b * l.out + o] * g;
            d[b * l.out + o] = c.inv_std[o] / nb *
                               (nb * dxhat - g * sum_dy - c.xhat[b * l.out + o] * g * sum_dy_xhat);
          }
        }
      }
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (c.pre[i] <= 0.0) d[i] = 0.0;
      }
      std::vector<double> d_in(batch * l.in, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* hb = &c.input[b * l.in];
        for (std::size_t o = 0; o < l.out; ++o) {
          const double dz = d[b * l.out + o];
          if (dz == 0.0) continue;
          grad[l.b + o] += dz;
          double* gw = &grad[l.w + o * l.in];
          const double* w = &params_[l.w + o * l.in];
          double* di = &d_in[b * l.in];
          for (std::size_t i = 0; i < l.in; ++i) {
            gw[i] += dz * hb[i];
            di[i] += dz * w[i];
          }
        }
      }
      d_h.swap(d_in);
    }
    return loss;
  }

  static double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

 private:
  struct Layer {
    std::size_t in = 0, out = 0;
    std::size_t w = 0, b = 0, gamma = 0, beta = 0;
  };
  struct Cache {
    std::vector<double> input, pre, xhat, inv_std, mask;
  };

  static Proba normalize(const double s[kNumClasses]) {
    const double total = s[0] + s[1];
    if (!(total > 0.0)) return {0.5, 0.5};
    return {s[0] / total, s[1] / total};
  }

  MlpSpec spec_;
  std::size_t input_dim_ = 0;
  std::vector<Layer> layers_;
  Layer head_;
  std::vector<double> params_;
  std::vector<std::vector<double>> running_mean_;
  std::vector<std::vector<double>> running_var_;
  std::vector<Cache> caches_;
};

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
      : m_(n, 0.0), v_(n, 0.0), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const double lr_t = lr_ * std::sqrt(c2) / c1;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
      params[i] -= lr_t * m_[i] / (std::sqrt(v_[i]) + eps_);
    }
  }

 private:
  std::vector<double> m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

using MlpClassifier = Classifier<MlpNetwork>;

struct TrainedMlp {
  MlpClassifier classifier;
  TrainingReport report;
};

// Trains on the first train_fraction of a seeded shuffle and reports held-out
// accuracy and F1 on the rest.
inline TrainedMlp train_mlp(std::span<const FactualSample> samples, const MlpSpec& spec, std::uint64_t seed,
                            const FeatureSchema& schema = default_schema()) {
  validate(spec);
  require_trainable(samples, 200);
  const Split split = split_indices(samples.size(), spec.train_fraction, seed);
  const auto train = gather(samples, split.train);
  Encoder encoder(schema, compute_training_stats(schema, train));

  const std::size_t width = encoder.encoded_width();
  std::vector<double> x(train.size() * width);
  std::vector<int> y(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    encoder.encode_into(train[i].features, std::span<double>(&x[i * width], width));
    y[i] = static_cast<int>(class_index(train[i].outcome));
  }

  std::mt19937_64 rng(seed ^ 0x5DEECE66DULL);
  MlpNetwork net(width, spec);
  net.init_he_normal(rng);
  Adam adam(net.parameter_count(), spec.learning_rate, spec.adam_beta1, spec.adam_beta2, spec.adam_epsilon);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> bx;
  std::vector<int> by;
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += spec.batch_size) {
      const std::size_t end = std::min(order.size(), start + spec.batch_size);
      // A single-row batch has no batch statistics to normalize with.
      if (spec.batch_norm && end - start < 2) continue;
      bx.resize((end - start) * width);
      by.resize(end - start);
      for (std::size_t r = start; r < end; ++r) {
        std::copy_n(&x[order[r] * width], width, &bx[(r - start) * width]);
        by[r - start] = y[order[r]];
      }
      net.loss_and_gradient(bx, by, grad, &rng, true);
      adam.step(net.parameters(), grad);
    }
  }

  MlpClassifier classifier(std::move(encoder), std::move(net));
  const Confusion c = confusion(classifier, samples, split.test);
  TrainingReport report{c.accuracy(), c.f1(), split.train.size(), split.test.size(), split};
  return {std::move(classifier), std::move(report)};
}

}  // namespace glytwin
