#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "psnet/errors.hpp"
#include "psnet/heads.hpp"
#include "psnet/nn.hpp"
#include "psnet/random.hpp"

namespace psnet {

inline constexpr double kDefaultGradStep = 1e-5;
inline constexpr double kDefaultGradTolerance = 1e-6;
inline constexpr Index kMaxGradcheckParams = 5000;

/// |a - n| / max(|a|, |n|, 1e-12); symmetric and finite at zero.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

/// Central differences (f(w + h e_i) - f(w - h e_i)) / 2h for every coordinate of `params`.
/// Each coordinate is restored to its exact original bits before moving on. The difference
/// is taken in f's own return type, so an f that returns long double keeps its extra bits.
template <typename F>
std::vector<double> numeric_gradient(F&& f, std::span<double> params, double h = kDefaultGradStep) {
  using R = decltype(f());
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const R up = f();
    params[i] = saved - h;
    const R down = f();
    params[i] = saved;
    grad[i] = static_cast<double>((up - down) / (R(2) * R(h)));
  }
  return grad;
}

struct ParamReport {
  std::string name;
  Index layer = 0; // 1-based hidden layer index; depth+1 for the classifier
  Index count = 0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
  Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradReport {
  HeadConfig config;
  Index batch = 0;
  double tolerance = kDefaultGradTolerance;
  std::vector<ParamReport> params;
  double max_rel = 0.0;
  std::size_t worst_param = 0;
  bool pass = false;

  const ParamReport& worst() const { return params.at(worst_param); }
};

struct GradcheckOptions {
  Index batch = 3;
  double tolerance = kDefaultGradTolerance;
  double step = kDefaultGradStep;
  std::uint64_t seed = 7;
  std::optional<Index> fault_layer; // mutation test: see Head::inject_routing_fault
};

/// Compares the analytic head gradient of mean nll loss with central finite differences.
/// Parameters, inputs and the analytic pass are 64-bit. The loss seen by the finite
/// differences is evaluated in long double: a 64-bit loss carries about 1e-16 of rounding,
/// which after dividing by 2h is 1e-11 absolute, enough to push coordinates with gradients
/// near 1e-5 over a 1e-6 relative tolerance on its own.
/// Dropout is forced off. Inputs are standard normal, labels uniform, biases small normal.
GradReport check_head(HeadConfig config, const GradcheckOptions& options = {});

void print_report(std::ostream& os, const GradReport& report);
void write_report_csv(std::ostream& os, const GradReport& report);

} // namespace psnet
