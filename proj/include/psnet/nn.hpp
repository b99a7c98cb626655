#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "psnet/errors.hpp"
#include "psnet/linalg.hpp"
#include "psnet/random.hpp"

namespace psnet {

using Label = std::int32_t;

enum class Mode { Train, Eval };

/// Affine map y = x W + b with W stored in_dim x out_dim.
template <typename Scalar>
class LinearLayer {
public:
  LinearLayer(Index in_dim, Index out_dim)
      : weight_(zeros<Scalar>(in_dim, out_dim)),
        bias_(RowVector<Scalar>::Zero(out_dim)),
        grad_weight_(zeros<Scalar>(in_dim, out_dim)),
        grad_bias_(RowVector<Scalar>::Zero(out_dim)) {}

  Index in_dim() const { return weight_.rows(); }
  Index out_dim() const { return weight_.cols(); }
  Index param_count() const { return weight_.size() + bias_.size(); }

  Matrix<Scalar>& weight() { return weight_; }
  const Matrix<Scalar>& weight() const { return weight_; }
  RowVector<Scalar>& bias() { return bias_; }
  const RowVector<Scalar>& bias() const { return bias_; }
  const Matrix<Scalar>& grad_weight() const { return grad_weight_; }
  Matrix<Scalar>& grad_weight() { return grad_weight_; }
  const RowVector<Scalar>& grad_bias() const { return grad_bias_; }
  RowVector<Scalar>& grad_bias() { return grad_bias_; }

  /// Stateless evaluation; safe to call concurrently on a frozen layer.
  template <typename Derived>
  Matrix<Scalar> apply(const Eigen::MatrixBase<Derived>& x) const {
    check_input(x.cols());
    Matrix<Scalar> y = x * weight_;
    y.rowwise() += bias_;
    return y;
  }

  /// Training forward: evaluates and caches the input for backward.
  template <typename Derived>
  Matrix<Scalar> forward(const Eigen::MatrixBase<Derived>& x) {
    check_input(x.cols());
    input_ = x;
    has_input_ = true;
    Matrix<Scalar> y = input_ * weight_;
    y.rowwise() += bias_;
    return y;
  }

  /// Accumulates dW += x^T g, db += colsum(g) and returns g W^T.
  Matrix<Scalar> backward(const ConstRef<Scalar>& grad_out) {
    if (!has_input_) {
      throw StateError("linear backward without a cached forward");
    }
    if (grad_out.rows() != input_.rows() || grad_out.cols() != out_dim()) {
      throw ShapeError("linear backward: grad " + shape_of(grad_out) + ", expected " +
                       std::to_string(input_.rows()) + "x" + std::to_string(out_dim()));
    }
    grad_weight_.noalias() += input_.transpose() * grad_out;
    grad_bias_ += grad_out.colwise().sum();
    return grad_out * weight_.transpose();
  }

  const Matrix<Scalar>& cached_input() const { return input_; }

  void zero_grads() {
    grad_weight_.setZero();
    grad_bias_.setZero();
  }

  void clear_cache() {
    input_.resize(0, 0);
    has_input_ = false;
  }

private:
  void check_input(Index cols) const {
    if (cols != in_dim()) {
      throw ShapeError("linear forward: input has " + std::to_string(cols) + " columns, layer expects " +
                       std::to_string(in_dim()));
    }
  }

  Matrix<Scalar> weight_;
  RowVector<Scalar> bias_;
  Matrix<Scalar> grad_weight_;
  RowVector<Scalar> grad_bias_;
  Matrix<Scalar> input_;
  bool has_input_ = false;
};

/// Kaiming-uniform weights, W ~ U(-sqrt(6/in_dim), sqrt(6/in_dim)), zero bias.
/// Draws in_dim*out_dim variates in row-major order.
template <typename Scalar>
LinearLayer<Scalar> init_layer(Index in_dim, Index out_dim, Rng& rng) {
  if (in_dim < 1 || out_dim < 1) {
    throw ConfigError("layer dims must be >= 1, got " + std::to_string(in_dim) + "x" + std::to_string(out_dim));
  }
  LinearLayer<Scalar> layer(in_dim, out_dim);
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim));
  auto& w = layer.weight();
  for (Index i = 0; i < in_dim; ++i) {
    for (Index j = 0; j < out_dim; ++j) {
      w(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
  }
  return layer;
}

template <typename Scalar>
class Relu {
public:
  template <typename Derived>
  static Matrix<Scalar> apply(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(Scalar(0));
  }

  template <typename Derived>
  Matrix<Scalar> forward(const Eigen::MatrixBase<Derived>& x) {
    mask_ = (x.array() > Scalar(0)).template cast<Scalar>();
    return hadamard(x, mask_);
  }

  /// Gradient is zero wherever the forward input was <= 0.
  Matrix<Scalar> backward(const ConstRef<Scalar>& grad_out) const {
    if (mask_.size() == 0) {
      throw StateError("relu backward without a cached forward");
    }
    return hadamard(grad_out, mask_);
  }

private:
  Matrix<Scalar> mask_;
};

/// Inverted dropout: survivors are scaled by 1/(1-p) so eval mode is the identity.
template <typename Scalar>
class Dropout {
public:
  explicit Dropout(double p = 0.0) : p_(p) {
    if (!(p >= 0.0 && p < 1.0)) {
      throw ConfigError("dropout p must be in [0, 1), got " + std::to_string(p));
    }
  }

  double p() const { return p_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }
  bool active() const { return mode_ == Mode::Train && p_ > 0.0; }
  const Matrix<Scalar>& mask() const { return mask_; }

  Matrix<Scalar> forward(const ConstRef<Scalar>& x, Rng* rng) {
    if (!active()) {
      mask_.resize(0, 0);
      return x;
    }
    if (rng == nullptr) {
      throw StateError("dropout in train mode needs an rng");
    }
    const auto keep = static_cast<Scalar>(1.0 / (1.0 - p_));
    mask_.resize(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < x.cols(); ++j) {
        mask_(i, j) = rng->bernoulli(p_) ? Scalar(0) : keep;
      }
    }
    return hadamard(x, mask_);
  }

  Matrix<Scalar> backward(const ConstRef<Scalar>& grad_out) const {
    if (mask_.size() == 0) {
      return grad_out;
    }
    return hadamard(grad_out, mask_);
  }

private:
  double p_;
  Mode mode_ = Mode::Train;
  Matrix<Scalar> mask_;
};

template <typename Scalar>
struct LossResult {
  double loss;
  Matrix<Scalar> grad_logits;
};

/// Mean negative log-likelihood of log-softmax(logits); gradient is (softmax - onehot)/batch.
template <typename Scalar>
LossResult<Scalar> nll_loss(const ConstRef<Scalar>& logits, std::span<const Label> labels) {
  const Index batch = logits.rows();
  const Index classes = logits.cols();
  if (batch < 1 || static_cast<Index>(labels.size()) != batch) {
    throw ShapeError("nll_loss: " + shape_of(logits) + " logits vs " + std::to_string(labels.size()) + " labels");
  }
  LossResult<Scalar> out{0.0, Matrix<Scalar>(batch, classes)};
  double total = 0.0;
  for (Index i = 0; i < batch; ++i) {
    const Label y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) {
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
    const Scalar peak = logits.row(i).maxCoeff();
    auto row = out.grad_logits.row(i);
    row = (logits.row(i).array() - peak).exp().matrix();
    const Scalar sum = row.sum();
    total -= static_cast<double>(logits(i, y) - peak - std::log(sum));
    row /= sum;
    row(y) -= Scalar(1);
  }
  out.grad_logits /= static_cast<Scalar>(batch);
  out.loss = total / static_cast<double>(batch);
  return out;
}

/// Row-wise argmax; ties resolve to the lowest index.
template <typename Derived>
std::vector<Label> argmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  std::vector<Label> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) {
        best = j;
      }
    }
    out[static_cast<std::size_t>(i)] = static_cast<Label>(best);
  }
  return out;
}

} // namespace psnet
