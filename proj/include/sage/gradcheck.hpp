#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "sage/mlp.hpp"

namespace sage {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

using FlatLoss = std::function<double(std::span<const double>)>;
using ParamsLoss = std::function<double(const DenoiserParams&)>;

// Compares `analytic` to central differences of `loss` around `point`.
GradCheckReport finite_diff_check(const FlatLoss& loss, std::span<const double> point,
                                  std::span<const double> analytic, double tolerance,
                                  GradCheckOptions opts = {});

GradCheckReport finite_diff_check(const ParamsLoss& loss, const DenoiserParams& params,
                                  const ParamGrads& analytic, double tolerance,
                                  GradCheckOptions opts = {});

}  // namespace sage
