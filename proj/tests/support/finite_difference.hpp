#pragma once

// Central finite-difference gradient oracle (test-only, double precision).
//
// The oracle only evaluates the loss function with grad mode off; it never
// reads the tape. Gradients are compared per leaf tensor with the norm-wise
// relative error |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, floor),
// which stays meaningful when individual entries are close to zero.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "exitrack/numerics/layers.hpp"

namespace exitrack::testing {

struct GradientReport {
  double worst_relative_error = 0.0;
  std::string worst_leaf;
  std::size_t elements_checked = 0;
};

inline std::vector<double> numeric_gradient(const std::function<num::Tensor64()>& loss_fn, num::Tensor64& leaf,
                                            double step) {
  num::NoGradGuard no_grad;
  auto data = leaf.data();
  std::vector<double> grad(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + step;
    const double plus = loss_fn().item();
    data[i] = saved - step;
    const double minus = loss_fn().item();
    data[i] = saved;
    grad[i] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

inline GradientReport check_gradients(const std::function<num::Tensor64()>& loss_fn,
                                      num::ParameterList<double>& leaves, double step = 1e-4,
                                      double floor = 1e-10) {
  for (auto& leaf : leaves) {
    leaf.tensor.set_requires_grad(true);
    leaf.tensor.zero_grad();
  }
  {
    auto loss = loss_fn();
    num::backward(loss);
  }
  GradientReport report;
  for (auto& leaf : leaves) {
    const auto numeric = numeric_gradient(loss_fn, leaf.tensor, step);
    const auto analytic = leaf.tensor.grad();
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      norm_a += analytic[i] * analytic[i];
      norm_n += numeric[i] * numeric[i];
    }
    double rel = std::sqrt(diff) / std::max({std::sqrt(norm_a), std::sqrt(norm_n), floor});
    // NaN must not slip past the comparisons below
    if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
    report.elements_checked += numeric.size();
    if (rel >= report.worst_relative_error) {
      report.worst_relative_error = rel;
      report.worst_leaf = leaf.name;
    }
  }
  return report;
}

// Random tensor with entries uniform in [lo, hi).
inline num::Tensor64 random_tensor(num::Shape shape, num::RandomState& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(num::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return num::Tensor64(std::move(shape), std::move(v), true);
}

}  // namespace exitrack::testing
