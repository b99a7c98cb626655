#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psnet/errors.hpp"
#include "psnet/heads.hpp"
#include "psnet/linalg.hpp"

namespace psnet {

enum class OptimizerKind { Sgd, Adam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Sgd;
  double lr = 0.001;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam betas must be in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  }
};

/// lr(epoch) = base_lr * gamma^floor(epoch / step_size), epochs counted from 0.
struct StepLR {
  double base_lr = 0.001;
  int step_size = 7;
  double gamma = 0.1;

  double lr_at(int epoch) const { return base_lr * std::pow(gamma, epoch / step_size); }
};

namespace detail {

template <typename Scalar>
void ensure_slots(std::vector<Matrix<Scalar>>& slots, std::span<const Param<Scalar>> params) {
  if (slots.empty()) {
    for (const auto& p : params) slots.push_back(Matrix<Scalar>::Zero(p.rows, p.cols));
    return;
  }
  if (slots.size() != params.size()) {
    throw ShapeError("optimizer state has " + std::to_string(slots.size()) + " slots for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (slots[i].rows() != params[i].rows || slots[i].cols() != params[i].cols) {
      throw ShapeError("optimizer slot " + shape_of(slots[i]) + " does not mirror parameter " + params[i].name);
    }
  }
}

} // namespace detail

template <typename Scalar>
struct SgdState {
  double lr = 0.01;
  double momentum = 0.9;
  std::vector<Matrix<Scalar>> velocity;
};

/// Classic momentum: v <- mu v + g; w <- w - lr v. No dampening, no Nesterov.
template <typename Scalar>
void sgd_momentum_step(std::span<const Param<Scalar>> params, SgdState<Scalar>& state) {
  detail::ensure_slots(state.velocity, params);
  const auto lr = static_cast<Scalar>(state.lr);
  const auto mu = static_cast<Scalar>(state.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = state.velocity[i];
    v = mu * v + params[i].grads();
    params[i].values() -= lr * v;
  }
}

template <typename Scalar>
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> u;
};

/// Bias-corrected Adam.
template <typename Scalar>
void adam_step(std::span<const Param<Scalar>> params, AdamState<Scalar>& state) {
  detail::ensure_slots(state.m, params);
  detail::ensure_slots(state.u, params);
  ++state.t;
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, static_cast<double>(state.t)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, static_cast<double>(state.t)));
  const auto lr = static_cast<Scalar>(state.lr);
  const auto eps = static_cast<Scalar>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = params[i].grads().array();
    auto& m = state.m[i];
    auto& u = state.u[i];
    m.array() = b1 * m.array() + (Scalar(1) - b1) * g;
    u.array() = b2 * u.array() + (Scalar(1) - b2) * g.square();
    params[i].values().array() -= lr * (m.array() / c1) / ((u.array() / c2).sqrt() + eps);
  }
}

/// Runtime-selected optimizer bound to one head's parameter list.
template <typename Scalar>
class Optimizer {
public:
  explicit Optimizer(const OptimizerSettings& s) : kind_(s.kind) {
    s.validate();
    sgd_.lr = s.lr;
    sgd_.momentum = s.momentum;
    adam_.lr = s.lr;
    adam_.beta1 = s.beta1;
    adam_.beta2 = s.beta2;
    adam_.eps = s.eps;
  }

  OptimizerKind kind() const { return kind_; }
  double lr() const { return kind_ == OptimizerKind::Sgd ? sgd_.lr : adam_.lr; }
  void set_lr(double lr) { sgd_.lr = adam_.lr = lr; }

  void step(std::span<const Param<Scalar>> params) {
    if (kind_ == OptimizerKind::Sgd) {
      sgd_momentum_step(params, sgd_);
    } else {
      adam_step(params, adam_);
    }
  }

  const SgdState<Scalar>& sgd_state() const { return sgd_; }
  const AdamState<Scalar>& adam_state() const { return adam_; }

private:
  OptimizerKind kind_;
  SgdState<Scalar> sgd_;
  AdamState<Scalar> adam_;
};

} // namespace psnet
