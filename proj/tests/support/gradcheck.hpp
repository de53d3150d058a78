#pragma once

// Central finite-difference oracle. Lives in test code so it shares nothing
// with the reverse-mode implementation except the forward evaluation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "diffcore/tensor.hpp"

namespace anchorforge::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "<input>[<index>]"
  std::size_t checked = 0;
};

/// Relative error with a small absolute floor so that exact zeros on both
/// sides compare equal.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// `loss` maps the (mutable) input variables to a scalar. Every element of
/// every input is perturbed by +-step. Central differences of a 64-bit loss
/// carry roundoff of roughly eps*|loss|/step, so the absolute floor of the
/// relative error is 1e-5 * max(1, |loss|): gradients that are exactly zero
/// analytically then compare equal to their roundoff-level estimates.
inline GradCheckResult gradcheck(std::vector<diff::Tensor<double>> inputs,
                                 const std::function<diff::Tensor<double>()>& loss,
                                 const std::vector<std::string>& names = {}, double step = 1e-5) {
  const auto base = loss();
  const double floor = 1e-5 * std::max(1.0, std::abs(base.value()[0]));
  diff::backward(base);
  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

  GradCheckResult out;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    auto& values = inputs[p].mutable_value().data;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss().value()[0];
      values[i] = saved - step;
      const double down = loss().value()[0];
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p].empty() ? 0.0 : analytic[p][i];
      const double e = rel_err(a, numeric, floor);
      ++out.checked;
      if (e > out.max_rel_err) {
        out.max_rel_err = e;
        out.worst = (p < names.size() ? names[p] : std::to_string(p)) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

}  // namespace anchorforge::testing
