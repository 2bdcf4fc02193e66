#include "sage/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sage/error.hpp"

namespace sage {

std::string to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + name + "'");
}

NoiseSchedule build_schedule(int t_train, ScheduleKind kind) {
  if (t_train < 2) throw ConfigError("schedule needs t_train >= 2");
  NoiseSchedule s;
  s.t_train = t_train;
  s.kind = kind;
  s.alpha.resize(static_cast<std::size_t>(t_train) + 1);
  s.sigma.resize(s.alpha.size());
  const double T = static_cast<double>(t_train);
  constexpr double offset = 0.008;
  auto cosine_f = [&](double t) {
    const double c = std::cos((t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = cosine_f(0.0);
  for (int t = 0; t <= t_train; ++t) {
    double abar;
    if (kind == ScheduleKind::linear) {
      abar = 1.0 - (1.0 - kTerminalSignal) * (static_cast<double>(t) / T);
    } else {
      abar = kTerminalSignal + (1.0 - kTerminalSignal) * (cosine_f(static_cast<double>(t)) / f0);
    }
    const auto i = static_cast<std::size_t>(t);
    s.alpha[i] = std::sqrt(abar);
    s.sigma[i] = std::sqrt(1.0 - abar);
  }
  s.alpha[0] = 1.0;
  s.sigma[0] = 0.0;
  return s;
}

NoiseSchedule build_schedule(int t_train, const std::string& kind) {
  return build_schedule(t_train, parse_schedule_kind(kind));
}

Vector forward_sample(const NoiseSchedule& s, std::span<const double> z0,
                      std::span<const double> eps, int t) {
  require(z0.size() == eps.size(), "forward_sample: z0 and eps lengths differ");
  require(t >= 0 && t <= s.t_train, "forward_sample: timestep out of range");
  const double a = s.alpha_at(t);
  const double sg = s.sigma_at(t);
  Vector out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + sg * eps[i];
  return out;
}

Vector ddim_step(const NoiseSchedule& s, std::span<const double> z_t,
                 std::span<const double> eps_hat, int t, int t_prev) {
  require(z_t.size() == eps_hat.size(), "ddim_step: z_t and eps_hat lengths differ");
  require(t > t_prev && t_prev >= 0 && t <= s.t_train, "ddim_step: need t > t_prev >= 0");
  const double a = s.alpha_at(t);
  if (a == 0.0) throw NumericalError("ddim_step: alpha_t = 0");
  const double sg = s.sigma_at(t);
  const double a_prev = s.alpha_at(t_prev);
  const double sg_prev = s.sigma_at(t_prev);
  Vector out(z_t.size());
  for (std::size_t i = 0; i < z_t.size(); ++i) {
    const double z0_hat = (z_t[i] - sg * eps_hat[i]) / a;
    out[i] = a_prev * z0_hat + sg_prev * eps_hat[i];
  }
  return out;
}

SamplingGrid build_grid_shared(const NoiseSchedule& s, int n_steps, int shared_steps) {
  require(n_steps >= 1 && n_steps <= s.t_train, "build_grid: need 1 <= n_steps <= t_train");
  require(shared_steps >= 0 && shared_steps <= n_steps, "build_grid: shared steps out of range");
  SamplingGrid g;
  g.steps.reserve(static_cast<std::size_t>(n_steps));
  for (int k = 0; k < n_steps; ++k) {
    const double t = static_cast<double>(s.t_train) * static_cast<double>(n_steps - k) /
                     static_cast<double>(n_steps);
    g.steps.push_back(static_cast<int>(std::floor(t + 0.5)));
  }
  g.branch_index = n_steps - shared_steps;
  return g;
}

SamplingGrid build_grid(const NoiseSchedule& s, int n_steps, double beta) {
  require(beta >= 0.0 && beta <= 1.0, "build_grid: beta must be in [0, 1]");
  require(n_steps >= 1, "build_grid: n_steps must be positive");
  // Round half up; the epsilon absorbs representation error such as (1 - 0.3) * 30.
  const double raw = (1.0 - beta) * static_cast<double>(n_steps);
  const int branch = static_cast<int>(std::floor(raw + 0.5 + 1e-9));
  return build_grid_shared(s, n_steps, n_steps - std::min(branch, n_steps));
}

}  // namespace sage
