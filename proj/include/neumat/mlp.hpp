// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neumat/random.hpp"

namespace neumat {

enum class Activation : std::uint8_t {
  kLinear = 0,
  kRelu = 1,
  kLeakyRelu = 2,
};

inline constexpr float kLeakySlope = 0.01f;

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

template <typename Scalar>
Scalar activate(Activation a, Scalar x) {
  switch (a) {
    case Activation::kRelu:
      return x > Scalar(0) ? x : Scalar(0);
    case Activation::kLeakyRelu:
      return x > Scalar(0) ? x : Scalar(kLeakySlope) * x;
    case Activation::kLinear:
      break;
  }
  return x;
}

/// Derivative of the activation with respect to its pre-activation input.
template <typename Scalar>
Scalar activate_derivative(Activation a, Scalar x) {
  switch (a) {
    case Activation::kRelu:
      return x > Scalar(0) ? Scalar(1) : Scalar(0);
    case Activation::kLeakyRelu:
      return x > Scalar(0) ? Scalar(1) : Scalar(kLeakySlope);
    case Activation::kLinear:
      break;
  }
  return Scalar(1);
}

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fully connected network with per-layer activations. Batched entry points take
/// one sample per column.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;
    Activation activation = Activation::kLinear;
  };

  struct Gradients {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;

    void set_zero() {
      for (auto& w : weight) w.setZero();
      for (auto& b : bias) b.setZero();
    }
    Gradients& operator+=(const Gradients& o) {
      for (size_t i = 0; i < weight.size(); ++i) {
        weight[i] += o.weight[i];
        bias[i] += o.bias[i];
      }
      return *this;
    }
    Gradients& operator*=(Scalar s) {
      for (size_t i = 0; i < weight.size(); ++i) {
        weight[i] *= s;
        bias[i] *= s;
      }
      return *this;
    }
  };

  /// Intermediate values recorded by a batched forward pass for backward().
  struct Tape {
    Matrix input;
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
  };

  Mlp() = default;

  /// sizes = {in, hidden..., out}; hidden layers use `hidden`, the last layer `output`.
  /// Weights are He-uniform in fan-in, biases zero.
  Mlp(std::span<const int> sizes, Activation hidden, Activation output, std::uint64_t seed) {
    if (sizes.size() < 2) throw DimensionError("Mlp: need at least input and output sizes");
    Rng rng(seed, 0x6d6c70);
    for (size_t i = 0; i + 1 < sizes.size(); ++i) {
      const int in = sizes[i];
      const int out = sizes[i + 1];
      if (in <= 0 || out <= 0) throw DimensionError("Mlp: layer sizes must be positive");
      Layer layer;
      const double bound = std::sqrt(6.0 / in);
      layer.weight.resize(out, in);
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) layer.weight(r, c) = Scalar((2.0 * rng.uniform() - 1.0) * bound);
      layer.bias = Vector::Zero(out);
      layer.activation = (i + 2 == sizes.size()) ? output : hidden;
      layers_.push_back(std::move(layer));
    }
  }

  Mlp(std::initializer_list<int> sizes, Activation hidden, Activation output, std::uint64_t seed)
      : Mlp(std::span<const int>(sizes.begin(), sizes.size()), hidden, output, seed) {}

  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw DimensionError("Mlp: no layers");
    for (size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.size() != l.weight.rows()) throw DimensionError("Mlp: bias size mismatch");
      if (i > 0 && l.weight.cols() != layers_[i - 1].weight.rows())
        throw DimensionError("Mlp: layer dimensions do not chain");
    }
  }

  int input_size() const { return layers_.empty() ? 0 : int(layers_.front().weight.cols()); }
  int output_size() const { return layers_.empty() ? 0 : int(layers_.back().weight.rows()); }
  int num_layers() const { return int(layers_.size()); }
  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(int i) const { return layers_[i]; }
  Matrix& weight(int i) { return layers_[i].weight; }
  Vector& bias(int i) { return layers_[i].bias; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Hidden widths as a string like "2x32"; empty when widths differ.
  std::string hidden_shape() const {
    if (layers_.size() < 2) return "0x0";
    const auto width = layers_.front().weight.rows();
    for (size_t i = 0; i + 1 < layers_.size(); ++i)
      if (layers_[i].weight.rows() != width) return {};
    return std::to_string(layers_.size() - 1) + "x" + std::to_string(width);
  }

  Vector forward(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != input_size()) throw DimensionError("Mlp::forward: input size mismatch");
    Vector h = x;
    for (const auto& l : layers_) {
      Vector z = l.weight * h + l.bias;
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = activate(l.activation, z[k]);
      h = std::move(z);
    }
    return h;
  }

  Matrix forward_batch(const Matrix& x, Tape* tape = nullptr) const {
    if (x.rows() != input_size()) throw DimensionError("Mlp::forward_batch: input size mismatch");
    if (tape) {
      tape->input = x;
      tape->pre.resize(layers_.size());
      tape->post.resize(layers_.size());
    }
    Matrix h = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      Matrix z = l.weight * h;
      z.colwise() += l.bias;
      if (tape) tape->pre[i] = z;
      if (l.activation != Activation::kLinear)
        z = z.unaryExpr([a = l.activation](Scalar v) { return activate(a, v); });
      if (tape) tape->post[i] = z;
      h = std::move(z);
    }
    return h;
  }

  /// Reverse pass for a taped batch. Parameter gradients are summed over the batch and
  /// added to *grads when non-null. Returns d(loss)/d(input).
  Matrix backward_batch(const Tape& tape, const Matrix& output_grad, Gradients* grads) const {
    if (output_grad.rows() != output_size() || output_grad.cols() != tape.input.cols())
      throw DimensionError("Mlp::backward_batch: output gradient shape mismatch");
    Matrix delta = output_grad;
    for (int i = num_layers() - 1; i >= 0; --i) {
      const auto& l = layers_[i];
      if (l.activation != Activation::kLinear)
        delta = delta.cwiseProduct(tape.pre[i].unaryExpr(
            [a = l.activation](Scalar v) { return activate_derivative(a, v); }));
      const Matrix& below = i == 0 ? tape.input : tape.post[i - 1];
      if (grads) {
        grads->weight[i].noalias() += delta * below.transpose();
        grads->bias[i] += delta.rowwise().sum();
      }
      Matrix next = l.weight.transpose() * delta;
      delta = std::move(next);
    }
    return delta;
  }

  struct BackwardResult {
    Gradients grads;
    Vector input_grad;
  };

  BackwardResult backward(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& output_grad) const {
    if (x.size() != input_size() || output_grad.size() != output_size())
      throw DimensionError("Mlp::backward: shape mismatch");
    Tape tape;
    forward_batch(Matrix(x), &tape);
    BackwardResult r{zero_gradients(), {}};
    r.input_grad = backward_batch(tape, Matrix(output_grad), &r.grads);
    return r;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) {
      g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
  }

  template <typename Other>
  Mlp<Other> cast() const {
    std::vector<typename Mlp<Other>::Layer> out;
    for (const auto& l : layers_)
      out.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>(), l.activation});
    return Mlp<Other>(std::move(out));
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

 private:
  std::vector<Layer> layers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Learning rate with x0.1 decay at 60% and x0.01 at 90% of training.
inline double scheduled_lr(double base, long iteration, long total) {
  if (total <= 0) return base;
  const double t = double(iteration) / double(total);
  if (t >= 0.9) return base * 0.01;
  if (t >= 0.6) return base * 0.1;
  return base;
}

/// In-place Adam update of a dense block; `step` is the 1-based step index.
template <typename P, typename G, typename M>
void adam_update(P&& param, const G& grad, M& m, M& v, long step, double lr, const AdamConfig& cfg) {
  using Scalar = typename std::decay_t<P>::Scalar;
  m = Scalar(cfg.beta1) * m + Scalar(1 - cfg.beta1) * grad;
  v = Scalar(cfg.beta2) * v + Scalar(1 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
  const Scalar step_size = Scalar(lr / c1);
  const Scalar inv_c2 = Scalar(1.0 / c2);
  const Scalar eps = Scalar(cfg.eps);
  param.array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + eps);
}

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  long step = 0;
  typename Mlp<Scalar>::Gradients m;
  typename Mlp<Scalar>::Gradients v;

  AdamState() = default;
  AdamState(const Mlp<Scalar>& net, AdamConfig cfg) : config(cfg), m(net.zero_gradients()), v(net.zero_gradients()) {}
};

/// One Adam step with bias correction. `lr` overrides the configured rate when >= 0.
template <typename Scalar>
void adam_step(Mlp<Scalar>& net, const typename Mlp<Scalar>::Gradients& grads, AdamState<Scalar>& state,
               double lr = -1.0) {
  if (grads.weight.size() != std::size_t(net.num_layers()))
    throw DimensionError("adam_step: gradient layout mismatch");
  const double rate = lr >= 0.0 ? lr : state.config.lr;
  ++state.step;
  for (int i = 0; i < net.num_layers(); ++i) {
    adam_update(net.weight(i), grads.weight[i], state.m.weight[i], state.v.weight[i], state.step, rate,
                state.config);
    adam_update(net.bias(i), grads.bias[i], state.m.bias[i], state.v.bias[i], state.step, rate, state.config);
  }
}

}  // namespace neumat
