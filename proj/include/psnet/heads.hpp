#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psnet/errors.hpp"
#include "psnet/linalg.hpp"
#include "psnet/nn.hpp"
#include "psnet/random.hpp"

namespace psnet {

/// Head wiring rule. Numeric values are the checkpoint variant codes.
enum class Variant : std::uint8_t { Plain = 0, Spinal = 1, Progressive = 2 };

inline std::string_view to_string(Variant v) {
  switch (v) {
  case Variant::Plain: return "plain";
  case Variant::Spinal: return "spinal";
  case Variant::Progressive: return "progressive";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "plain") return Variant::Plain;
  if (s == "spinal") return Variant::Spinal;
  if (s == "progressive") return Variant::Progressive;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected plain, spinal or progressive)");
}

struct HeadConfig {
  Variant variant = Variant::Progressive;
  Index input_dim = 784;
  Index hidden = 128;
  Index depth = 6;
  Index classes = 10;
  double dropout = 0.2;

  void validate() const {
    auto require = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("invalid head config: " + what);
    };
    require(input_dim >= 1, "input_dim >= 1 (got " + std::to_string(input_dim) + ")");
    require(hidden >= 1, "hidden >= 1 (got " + std::to_string(hidden) + ")");
    require(depth >= 1, "layers >= 1 (got " + std::to_string(depth) + ")");
    require(classes >= 2, "classes >= 2 (got " + std::to_string(classes) + ")");
    require(dropout >= 0.0 && dropout < 1.0, "dropout in [0, 1) (got " + std::to_string(dropout) + ")");
    require(variant != Variant::Spinal || input_dim >= 2,
            "spinal needs input_dim >= 2 (got " + std::to_string(input_dim) + ")");
  }

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

// Spinal input halves: A = [0, floor(D/2)), B = [floor(D/2), D). Hidden layer k (0-based)
// reads A when k is even and B when k is odd.
inline Index spinal_half_offset(const HeadConfig& c, Index k) { return k % 2 == 0 ? 0 : c.input_dim / 2; }
inline Index spinal_half_width(const HeadConfig& c, Index k) {
  return k % 2 == 0 ? c.input_dim / 2 : c.input_dim - c.input_dim / 2;
}

/// Input width of hidden layer k (0-based).
inline Index hidden_in_dim(const HeadConfig& c, Index k) {
  switch (c.variant) {
  case Variant::Plain: return k == 0 ? c.input_dim : c.hidden;
  case Variant::Spinal: return spinal_half_width(c, k) + (k == 0 ? 0 : c.hidden);
  case Variant::Progressive: return c.input_dim + k * c.hidden;
  }
  return 0;
}

inline Index classifier_in_dim(const HeadConfig& c) {
  switch (c.variant) {
  case Variant::Plain: return c.hidden;
  case Variant::Spinal: return c.depth * c.hidden;
  case Variant::Progressive: return c.input_dim + c.depth * c.hidden;
  }
  return 0;
}

/// Closed-form parameter count (weights plus biases of every layer).
inline Index param_count(const HeadConfig& c) {
  const Index D = c.input_dim, H = c.hidden, L = c.depth, C = c.classes;
  switch (c.variant) {
  case Variant::Plain:
    return (D * H + H) + (L - 1) * (H * H + H) + (H * C + C);
  case Variant::Spinal: {
    // Layers at even index read half A, odd index read half B; all but the first also read H.
    const Index a = D / 2, b = D - D / 2;
    const Index n_a = (L + 1) / 2, n_b = L / 2;
    return n_a * a * H + n_b * b * H + (L - 1) * H * H + L * H + (L * H * C + C);
  }
  case Variant::Progressive:
    // sum_k (D + kH) H + H  for k = 0..L-1, then the classifier.
    return L * D * H + H * H * (L * (L - 1) / 2) + L * H + (D + L * H) * C + C;
  }
  return 0;
}

/// Mutable view of one parameter tensor and its gradient buffer.
template <typename Scalar>
struct Param {
  std::string name;
  Scalar* value;
  const Scalar* grad;
  Index rows;
  Index cols;

  Index size() const { return rows * cols; }
  Eigen::Map<Matrix<Scalar>> values() const { return {value, rows, cols}; }
  Eigen::Map<const Matrix<Scalar>> grads() const { return {grad, rows, cols}; }
};

/// A fully-connected classification head: L hidden layers of width H plus a linear classifier.
///
/// Progressive: hidden layer k reads [x, h_1, ..., h_{k-1}], the classifier reads [x, h_1, ..., h_L].
/// Plain:       a chain x -> h_1 -> ... -> h_L -> classifier.
/// Spinal:      hidden layer k reads [half_k(x), h_{k-1}], the classifier reads [h_1, ..., h_L].
///
/// Each hidden activation is dropout(relu(linear(.))); raw x columns are never dropped.
template <typename Scalar>
class Head {
public:
  /// Zero-initialised head with the configured shapes.
  explicit Head(const HeadConfig& config) : config_(config) {
    config_.validate();
    for (Index k = 0; k < config_.depth; ++k) {
      hidden_.emplace_back(hidden_in_dim(config_, k), config_.hidden);
    }
    classifier_.emplace(classifier_in_dim(config_), config_.classes);
    relus_.resize(static_cast<std::size_t>(config_.depth));
    dropouts_.assign(static_cast<std::size_t>(config_.depth), Dropout<Scalar>(config_.dropout));
  }

  /// Initialises hidden layers 1..L then the classifier from rng, in that order.
  static Head build(const HeadConfig& config, Rng& rng) {
    Head head(config);
    for (auto& layer : head.hidden_) {
      layer = init_layer<Scalar>(layer.in_dim(), layer.out_dim(), rng);
    }
    head.classifier_ = init_layer<Scalar>(head.classifier_->in_dim(), head.classifier_->out_dim(), rng);
    return head;
  }

  const HeadConfig& config() const { return config_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m) {
    mode_ = m;
    for (auto& d : dropouts_) d.set_mode(m);
  }

  std::vector<LinearLayer<Scalar>>& hidden_layers() { return hidden_; }
  const std::vector<LinearLayer<Scalar>>& hidden_layers() const { return hidden_; }
  LinearLayer<Scalar>& classifier() { return *classifier_; }
  const LinearLayer<Scalar>& classifier() const { return *classifier_; }
  const Dropout<Scalar>& dropout(Index k) const { return dropouts_[static_cast<std::size_t>(k)]; }

  /// Training forward; caches every intermediate for backward. rng drives dropout and
  /// may be null when dropout is inactive.
  Matrix<Scalar> forward(const ConstRef<Scalar>& x, Rng* rng) {
    check_input(x);
    input_ = x;
    activations_.clear();
    for (Index k = 0; k < config_.depth; ++k) {
      const auto i = static_cast<std::size_t>(k);
      Matrix<Scalar> z = hidden_[i].forward(layer_input(input_, k));
      activations_.push_back(dropouts_[i].forward(relus_[i].forward(z), rng));
    }
    has_forward_ = true;
    return classifier_->forward(classifier_input(input_));
  }

  /// Pure evaluation with dropout disabled; touches no cached state.
  Matrix<Scalar> infer(const ConstRef<Scalar>& x) const {
    check_input(x);
    std::vector<Matrix<Scalar>> acts;
    acts.reserve(static_cast<std::size_t>(config_.depth));
    for (Index k = 0; k < config_.depth; ++k) {
      const auto& layer = hidden_[static_cast<std::size_t>(k)];
      acts.push_back(Relu<Scalar>::apply(layer.apply(layer_input(x, k, acts))));
    }
    return classifier_->apply(classifier_input(x, acts));
  }

  std::vector<Label> predict(const ConstRef<Scalar>& x) const { return argmax_rows(infer(x)); }

  /// Accumulates parameter gradients for the cached forward. The gradient reaching
  /// each hidden output is the sum of its classifier slot and every later consumer;
  /// the gradient with respect to x is dropped at the head boundary.
  void backward(const ConstRef<Scalar>& grad_logits) {
    if (!has_forward_) {
      throw StateError("head backward without a cached forward");
    }
    const Index H = config_.hidden;
    const Index D = config_.input_dim;
    Matrix<Scalar> g = classifier_->backward(grad_logits);

    for (Index k = config_.depth - 1; k >= 0; --k) {
      const auto i = static_cast<std::size_t>(k);
      Matrix<Scalar> g_h;
      switch (config_.variant) {
      case Variant::Plain: g_h = g; break;
      case Variant::Spinal: g_h = g.middleCols(k * H, H); break;
      case Variant::Progressive: g_h = g.middleCols(D + k * H, H); break;
      }
      Matrix<Scalar> g_pre = relus_[i].backward(dropouts_[i].backward(g_h));
      Matrix<Scalar> g_in = hidden_[i].backward(g_pre);
      if (fault_layer_ == k) {
        corrupt_slot_gradient(k, g_pre);
      }

      switch (config_.variant) {
      case Variant::Plain: g = std::move(g_in); break;
      case Variant::Spinal:
        if (k > 0) g.middleCols((k - 1) * H, H) += g_in.rightCols(H);
        break;
      case Variant::Progressive: g.leftCols(D + k * H) += g_in; break;
      }
    }
  }

  void zero_grads() {
    for (auto& l : hidden_) l.zero_grads();
    classifier_->zero_grads();
  }

  /// Parameter tensors in storage order: each hidden layer's W then b, then the classifier's.
  std::vector<Param<Scalar>> parameters() {
    std::vector<Param<Scalar>> out;
    auto add = [&out](const std::string& name, LinearLayer<Scalar>& l) {
      out.push_back({name + ".weight", l.weight().data(), l.grad_weight().data(), l.in_dim(), l.out_dim()});
      out.push_back({name + ".bias", l.bias().data(), l.grad_bias().data(), 1, l.out_dim()});
    };
    for (std::size_t k = 0; k < hidden_.size(); ++k) {
      add("hidden" + std::to_string(k + 1), hidden_[k]);
    }
    add("classifier", *classifier_);
    return out;
  }

  /// Parameter count by enumerating the allocated buffers.
  Index enumerate_params() const {
    Index n = classifier_->weight().size() + classifier_->bias().size();
    for (const auto& l : hidden_) n += l.weight().size() + l.bias().size();
    return n;
  }

  /// Same architecture and weights at another precision.
  template <typename Other>
  Head<Other> cast() const {
    Head<Other> out(config_);
    auto copy = [](const LinearLayer<Scalar>& from, LinearLayer<Other>& to) {
      to.weight() = from.weight().template cast<Other>();
      to.bias() = from.bias().template cast<Other>();
    };
    for (std::size_t k = 0; k < hidden_.size(); ++k) copy(hidden_[k], out.hidden_layers()[k]);
    copy(*classifier_, out.classifier());
    out.set_mode(mode_);
    return out;
  }

  /// Mutation-testing hook: makes backward double-count the weight gradient of the
  /// newest concatenation slot of hidden layer `layer` (0-based). Only that layer's dW is
  /// affected. Pass std::nullopt to clear.
  void inject_routing_fault(std::optional<Index> layer) { fault_layer_ = layer; }

private:
  void check_input(const ConstRef<Scalar>& x) const {
    if (x.cols() != config_.input_dim) {
      throw ShapeError("head expects " + std::to_string(config_.input_dim) + " input columns, got " +
                       std::to_string(x.cols()));
    }
  }

  Matrix<Scalar> layer_input(const ConstRef<Scalar>& x, Index k) const { return layer_input(x, k, activations_); }

  Matrix<Scalar> layer_input(const ConstRef<Scalar>& x, Index k, const std::vector<Matrix<Scalar>>& acts) const {
    std::vector<ConstRef<Scalar>> parts;
    switch (config_.variant) {
    case Variant::Plain:
      parts.emplace_back(k == 0 ? x : ConstRef<Scalar>(acts.back()));
      break;
    case Variant::Spinal:
      parts.emplace_back(x.middleCols(spinal_half_offset(config_, k), spinal_half_width(config_, k)));
      if (k > 0) parts.emplace_back(acts.back());
      break;
    case Variant::Progressive:
      parts.emplace_back(x);
      for (const auto& h : acts) parts.emplace_back(h);
      break;
    }
    Matrix<Scalar> z = concat_cols(parts);
    if (z.cols() != hidden_in_dim(config_, k)) {
      throw ShapeError("layer " + std::to_string(k + 1) + " input has " + std::to_string(z.cols()) +
                       " columns, expected " + std::to_string(hidden_in_dim(config_, k)));
    }
    return z;
  }

  Matrix<Scalar> classifier_input(const ConstRef<Scalar>& x) const { return classifier_input(x, activations_); }

  Matrix<Scalar> classifier_input(const ConstRef<Scalar>& x, const std::vector<Matrix<Scalar>>& acts) const {
    std::vector<ConstRef<Scalar>> parts;
    switch (config_.variant) {
    case Variant::Plain:
      parts.emplace_back(acts.back());
      break;
    case Variant::Spinal:
      for (const auto& h : acts) parts.emplace_back(h);
      break;
    case Variant::Progressive:
      parts.emplace_back(x);
      for (const auto& h : acts) parts.emplace_back(h);
      break;
    }
    return concat_cols(parts);
  }

  void corrupt_slot_gradient(Index k, const Matrix<Scalar>& g_pre) {
    auto& layer = hidden_[static_cast<std::size_t>(k)];
    const Index width = std::min(config_.hidden, layer.in_dim());
    const Index offset = layer.in_dim() - width;
    layer.grad_weight().middleRows(offset, width) +=
        layer.cached_input().middleCols(offset, width).transpose() * g_pre;
  }

  HeadConfig config_;
  std::vector<LinearLayer<Scalar>> hidden_;
  std::optional<LinearLayer<Scalar>> classifier_;
  std::vector<Relu<Scalar>> relus_;
  std::vector<Dropout<Scalar>> dropouts_;
  Mode mode_ = Mode::Train;

  Matrix<Scalar> input_;
  std::vector<Matrix<Scalar>> activations_;
  bool has_forward_ = false;
  std::optional<Index> fault_layer_;
};

} // namespace psnet
