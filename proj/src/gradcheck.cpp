#include "sage/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sage/error.hpp"

namespace sage {

namespace {

void record(GradCheckReport& rep, std::size_t i, double a, double n, const GradCheckOptions& o) {
  const double denom = std::max({std::abs(a), std::abs(n), o.floor});
  const double rel = std::abs(a - n) / denom;
  ++rep.checked;
  if (rep.checked == 1 || rel > rep.max_rel_error) {
    rep.max_rel_error = rel;
    rep.worst_index = i;
    rep.worst_analytic = a;
    rep.worst_numeric = n;
  }
}

}  // namespace

GradCheckReport finite_diff_check(const FlatLoss& loss, std::span<const double> point,
                                  std::span<const double> analytic, double tolerance,
                                  GradCheckOptions opts) {
  require(point.size() == analytic.size(), "finite_diff_check: gradient length mismatch");
  GradCheckReport rep;
  Vector x(point.begin(), point.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + opts.step;
    const double up = loss(x);
    x[i] = orig - opts.step;
    const double down = loss(x);
    x[i] = orig;
    record(rep, i, analytic[i], (up - down) / (2.0 * opts.step), opts);
  }
  rep.passed = rep.max_rel_error <= tolerance;
  return rep;
}

GradCheckReport finite_diff_check(const ParamsLoss& loss, const DenoiserParams& params,
                                  const ParamGrads& analytic, double tolerance,
                                  GradCheckOptions opts) {
  require(analytic.layers.size() == params.layers.size(), "finite_diff_check: layout mismatch");
  GradCheckReport rep;
  DenoiserParams probe = params;
  const std::size_t n = probe.parameter_count();
  for (std::size_t i = 0; i < n; ++i) {
    double& slot = flat_at(probe.layers, i);
    const double orig = slot;
    slot = orig + opts.step;
    const double up = loss(probe);
    slot = orig - opts.step;
    const double down = loss(probe);
    slot = orig;
    record(rep, i, flat_at(analytic.layers, i), (up - down) / (2.0 * opts.step), opts);
  }
  rep.passed = rep.max_rel_error <= tolerance;
  return rep;
}

}  // namespace sage
