#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "qlouvain/error.hpp"
#include "qlouvain/tensor.hpp"

namespace qlouvain::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Fully connected layer acting on the last axis: y = x W^T + b.
struct Dense {
  RowMatrix weight;  // out x in
  Vector bias;

  Dense() = default;
  Dense(std::size_t in, std::size_t out)
      : weight(RowMatrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
        bias(Vector::Zero(static_cast<Eigen::Index>(out))) {}

  std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
};

struct Relu {};

/// Inverted dropout: at training time survivors are scaled by 1/(1-rate).
struct Dropout {
  double rate = 0.5;
};

/// Collapses every axis after the batch axis.
struct Flatten {};

using Layer = std::variant<Dense, Relu, Dropout, Flatten>;

inline std::string layer_name(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) return "dense";
        else if constexpr (std::is_same_v<T, Relu>) return "relu";
        else if constexpr (std::is_same_v<T, Dropout>) return "dropout";
        else return "flatten";
      },
      layer);
}

struct DenseGrad {
  RowMatrix weight;
  Vector bias;
};

/// One entry per Dense layer, in layer order.
using Gradients = std::vector<DenseGrad>;

/// Applies dropout in place. Identity when !training or rate == 0; otherwise
/// each element is zeroed with probability rate and survivors are rescaled.
/// Returns the multiplicative mask that was applied (empty for identity).
template <typename Rng>
std::vector<double> dropout_apply(std::span<double> x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) throw DomainError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return {};
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = keep(rng) ? scale : 0.0;
    x[i] *= mask[i];
  }
  return mask;
}

/// Sequential feed-forward network over a fixed per-sample input shape.
///
/// forward() accepts either one sample (shape == input_shape) or a batch
/// (leading batch axis) and caches what backward() needs. predict() is the
/// side-effect-free inference path.
class Mlp {
 public:
  Mlp() = default;

  Mlp(Shape input_shape, std::vector<Layer> layers, std::uint64_t seed)
      : input_shape_(std::move(input_shape)), layers_(std::move(layers)), seed_(seed), dropout_rng_(seed ^ kDropoutSalt) {
    output_shape_ = infer_output_shape();
  }

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const noexcept { return output_shape_; }
  std::span<const Layer> layers() const noexcept { return layers_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::size_t dense_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += std::holds_alternative<Dense>(l) ? 1 : 0;
    return n;
  }

  /// k-th Dense layer in order.
  Dense& dense(std::size_t k) { return const_cast<Dense&>(std::as_const(*this).dense(k)); }
  const Dense& dense(std::size_t k) const {
    for (const auto& l : layers_) {
      if (const auto* d = std::get_if<Dense>(&l)) {
        if (k-- == 0) return *d;
      }
    }
    throw DomainError("network has no dense layer with that index");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < dense_count(); ++k) {
      n += static_cast<std::size_t>(dense(k).weight.size() + dense(k).bias.size());
    }
    return n;
  }

  /// Glorot-uniform weights, zero biases, drawn from an engine seeded with seed().
  void initialize() {
    std::mt19937_64 rng(seed_);
    for (auto& l : layers_) {
      if (auto* d = std::get_if<Dense>(&l)) {
        const double limit = std::sqrt(6.0 / static_cast<double>(d->in() + d->out()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index i = 0; i < d->weight.size(); ++i) d->weight.data()[i] = dist(rng);
        d->bias.setZero();
      }
    }
  }

  Tensor forward(const Tensor& input, bool training) {
    cache_valid_ = false;
    cache_ = Cache{};
    auto out = run(input, training, &cache_, &dropout_rng_);
    cache_valid_ = true;
    return out;
  }

  Tensor predict(const Tensor& input) const { return run(input, false, nullptr, nullptr); }

  /// Gradients of the parameters given dLoss/dOutput for the cached forward pass.
  Gradients backward(const Tensor& output_grad) const {
    if (!cache_valid_) throw StateError("backward() called without a cached forward pass");
    if (output_grad.shape() != cache_.output_shape) {
      throw ShapeError("loss gradient shape " + to_string(output_grad.shape()) + " does not match output shape " +
                       to_string(cache_.output_shape));
    }
    Gradients grads(dense_count());
    std::size_t dense_index = grads.size();
    Tensor g = output_grad.reshaped(cache_.batched_output_shape);
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& in = cache_.inputs[li];
      std::visit(
          [&](const auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, Dense>) {
              const auto rows = static_cast<Eigen::Index>(in.size() / layer.in());
              Eigen::Map<const RowMatrix> x(in.data(), rows, static_cast<Eigen::Index>(layer.in()));
              Eigen::Map<const RowMatrix> dy(g.data(), rows, static_cast<Eigen::Index>(layer.out()));
              auto& dg = grads[--dense_index];
              dg.weight.noalias() = dy.transpose() * x;
              dg.bias = dy.colwise().sum().transpose();
              Shape shape = in.shape();
              Tensor dx(std::move(shape));
              Eigen::Map<RowMatrix> dxm(dx.data(), rows, static_cast<Eigen::Index>(layer.in()));
              dxm.noalias() = dy * layer.weight;
              g = std::move(dx);
            } else if constexpr (std::is_same_v<T, Relu>) {
              for (std::size_t i = 0; i < g.size(); ++i) {
                if (!(in[i] > 0.0)) g[i] = 0.0;
              }
            } else if constexpr (std::is_same_v<T, Dropout>) {
              const auto& mask = cache_.masks[li];
              if (!mask.empty()) {
                for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
              }
            } else {
              g = g.reshaped(in.shape());
            }
          },
          layers_[li]);
    }
    return grads;
  }

  /// Engine state of the dropout generator, for checkpoints.
  std::string rng_state() const {
    std::ostringstream out;
    out << dropout_rng_;
    return out.str();
  }

  void set_rng_state(const std::string& state) {
    std::istringstream in(state);
    in >> dropout_rng_;
    if (!in) throw SchemaError("invalid random engine state");
  }

 private:
  static constexpr std::uint64_t kDropoutSalt = 0x9e3779b97f4a7c15ULL;

  struct Cache {
    std::vector<Tensor> inputs;
    std::vector<std::vector<double>> masks;
    Shape output_shape;
    Shape batched_output_shape;
  };

  Shape infer_output_shape() const {
    Shape shape{1};
    shape.insert(shape.end(), input_shape_.begin(), input_shape_.end());
    for (std::size_t li = 0; li < layers_.size(); ++li) shape = layer_output_shape(li, shape);
    return Shape(shape.begin() + 1, shape.end());
  }

  Shape layer_output_shape(std::size_t li, const Shape& in) const {
    return std::visit(
        [&](const auto& layer) -> Shape {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, Dense>) {
            if (in.size() < 2 || in.back() != layer.in()) {
              throw ShapeError("layer " + std::to_string(li) + " (dense): expected last dimension " +
                               std::to_string(layer.in()) + ", got input " + to_string(Shape(in.begin() + 1, in.end())));
            }
            Shape out = in;
            out.back() = layer.out();
            return out;
          } else if constexpr (std::is_same_v<T, Flatten>) {
            return Shape{in.front(), element_count(Shape(in.begin() + 1, in.end()))};
          } else {
            return in;
          }
        },
        layers_[li]);
  }

  template <typename Rng>
  Tensor run_impl(const Tensor& input, bool training, Cache* cache, Rng* rng) const {
    bool batched = false;
    if (input.shape() == input_shape_) {
      batched = false;
    } else if (input.rank() == input_shape_.size() + 1 && Shape(input.shape().begin() + 1, input.shape().end()) == input_shape_) {
      batched = true;
    } else {
      throw ShapeError("input of shape " + to_string(input.shape()) + " does not match network input " +
                       to_string(input_shape_));
    }
    Shape shape = input.shape();
    if (!batched) shape.insert(shape.begin(), 1);
    Tensor x = input.reshaped(shape);
    if (cache) {
      cache->inputs.resize(layers_.size());
      cache->masks.resize(layers_.size());
    }
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const Shape out_shape = layer_output_shape(li, x.shape());
      if (cache) cache->inputs[li] = x;
      std::visit(
          [&](const auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, Dense>) {
              const auto rows = static_cast<Eigen::Index>(x.size() / layer.in());
              Tensor y(out_shape);
              Eigen::Map<const RowMatrix> xm(x.data(), rows, static_cast<Eigen::Index>(layer.in()));
              Eigen::Map<RowMatrix> ym(y.data(), rows, static_cast<Eigen::Index>(layer.out()));
              ym.noalias() = xm * layer.weight.transpose();
              ym.rowwise() += layer.bias.transpose();
              x = std::move(y);
            } else if constexpr (std::is_same_v<T, Relu>) {
              for (auto& v : x.values()) v = v > 0.0 ? v : 0.0;
            } else if constexpr (std::is_same_v<T, Dropout>) {
              if (training && rng) {
                auto mask = dropout_apply(x.values(), layer.rate, true, *rng);
                if (cache) cache->masks[li] = std::move(mask);
              } else if (!(layer.rate >= 0.0) || layer.rate >= 1.0) {
                throw DomainError("dropout rate must lie in [0, 1)");
              }
            } else {
              x = x.reshaped(out_shape);
            }
          },
          layers_[li]);
    }
    if (cache) cache->batched_output_shape = x.shape();
    if (!batched) x = x.reshaped(Shape(x.shape().begin() + 1, x.shape().end()));
    if (cache) cache->output_shape = x.shape();
    return x;
  }

  Tensor run(const Tensor& input, bool training, Cache* cache, std::mt19937_64* rng) const {
    return run_impl(input, training, cache, rng);
  }

  Shape input_shape_;
  Shape output_shape_;
  std::vector<Layer> layers_;
  std::uint64_t seed_ = 0;
  std::mt19937_64 dropout_rng_;
  Cache cache_;
  bool cache_valid_ = false;
};

struct QNetworkOptions {
  std::size_t hidden = 128;
  double dropout = 0.5;
};

/// Q-network over a (state_size, action_size) state matrix: three 128-wide
/// ReLU layers on the last axis (dropout after the first two), flatten, then a
/// linear layer to action_size outputs.
inline Mlp build_q_network(std::size_t state_size, std::size_t action_size, std::uint64_t seed,
                           const QNetworkOptions& opts = {}) {
  if (state_size < 1) throw DomainError("state_size must be at least 1");
  if (action_size < 2) throw DomainError("action_size must be at least 2");
  const std::size_t h = opts.hidden;
  std::vector<Layer> layers{Dense(action_size, h), Relu{},    Dropout{opts.dropout}, Dense(h, h),
                            Relu{},                Dropout{opts.dropout}, Dense(h, h), Relu{},
                            Flatten{},             Dense(state_size * h, action_size)};
  Mlp model({state_size, action_size}, std::move(layers), seed);
  model.initialize();
  return model;
}

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

/// Mean squared error over all elements; grad = 2 (pred - target) / N.
inline LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse: prediction shape " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
  }
  LossResult r{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update of a flat parameter block at (1-based) step t.
inline void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                        std::span<double> v, std::uint64_t t, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size()) {
    throw ShapeError("adam: parameter, gradient and moment sizes differ");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  Gradients m;
  Gradients v;
};

inline AdamState make_adam(const Mlp& model, const AdamConfig& cfg = {}) {
  AdamState s{cfg, 0, {}, {}};
  for (std::size_t k = 0; k < model.dense_count(); ++k) {
    const auto& d = model.dense(k);
    DenseGrad zero{RowMatrix::Zero(d.weight.rows(), d.weight.cols()), Vector::Zero(d.bias.size())};
    s.m.push_back(zero);
    s.v.push_back(zero);
  }
  return s;
}

namespace detail {
template <typename M>
std::span<double> flat(M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename M>
std::span<const double> flat(const M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
}  // namespace detail

inline void adam_step(AdamState& state, Mlp& model, const Gradients& grads) {
  if (grads.size() != model.dense_count() || state.m.size() != grads.size()) {
    throw ShapeError("adam: gradient list does not match the network");
  }
  ++state.step;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    auto& d = model.dense(k);
    adam_update(detail::flat(d.weight), detail::flat(grads[k].weight), detail::flat(state.m[k].weight),
                detail::flat(state.v[k].weight), state.step, state.config);
    adam_update(detail::flat(d.bias), detail::flat(grads[k].bias), detail::flat(state.m[k].bias),
                detail::flat(state.v[k].bias), state.step, state.config);
  }
}

/// One forward/backward/Adam step on a batch ([B, ...] states, [B, outputs]
/// targets). Returns the loss before the update.
inline double train_on_batch(Mlp& model, const Tensor& states, const Tensor& targets, AdamState& adam) {
  if (states.rank() != model.input_shape().size() + 1 || states.shape().front() == 0) {
    throw ShapeError("train_on_batch expects a nonempty batch of shape (B, " + to_string(model.input_shape()) + ")");
  }
  Shape expected{states.shape().front()};
  expected.insert(expected.end(), model.output_shape().begin(), model.output_shape().end());
  if (targets.shape() != expected) {
    throw ShapeError("targets have shape " + to_string(targets.shape()) + ", expected " + to_string(expected));
  }
  const auto pred = model.forward(states, true);
  const auto loss = mse_loss(pred, targets);
  const auto grads = model.backward(loss.grad);
  adam_step(adam, model, grads);
  return loss.loss;
}

}  // namespace qlouvain::nn
