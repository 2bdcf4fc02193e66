#pragma once

#include <span>
#include <string>
#include <vector>

#include "sage/linalg.hpp"

namespace sage {

enum class ScheduleKind { linear, cosine };

std::string to_string(ScheduleKind k);
ScheduleKind parse_schedule_kind(const std::string& name);

// Variance-preserving discrete schedule, t = 0..t_train.
//   linear: alpha_t^2 = 1 - (1 - abar_T) * t / T
//   cosine: alpha_t^2 = abar_T + (1 - abar_T) * f(t) / f(0),
//           f(t) = cos^2(((t / T) + s) / (1 + s) * pi / 2), s = 0.008
struct NoiseSchedule {
  int t_train = 0;
  ScheduleKind kind = ScheduleKind::linear;
  Vector alpha;
  Vector sigma;

  double alpha_at(int t) const { return alpha.at(static_cast<std::size_t>(t)); }
  double sigma_at(int t) const { return sigma.at(static_cast<std::size_t>(t)); }
};

// Signal level alpha_T^2 at the terminal timestep.
inline constexpr double kTerminalSignal = 1e-3;

NoiseSchedule build_schedule(int t_train, ScheduleKind kind);
NoiseSchedule build_schedule(int t_train, const std::string& kind);

// alpha_t * z0 + sigma_t * eps
Vector forward_sample(const NoiseSchedule& s, std::span<const double> z0,
                      std::span<const double> eps, int t);

// Deterministic DDIM update (eta = 0) from t to t_prev.
Vector ddim_step(const NoiseSchedule& s, std::span<const double> z_t,
                 std::span<const double> eps_hat, int t, int t_prev);

// Inference timesteps, strictly decreasing. The first `shared_count()` grid
// positions form the shared phase; the last `branch_index` positions (T*) are
// run per prompt.
struct SamplingGrid {
  std::vector<int> steps;
  int branch_index = 0;

  int length() const { return static_cast<int>(steps.size()); }
  int shared_count() const { return length() - branch_index; }
  double sharing_ratio() const {
    return static_cast<double>(shared_count()) / static_cast<double>(length());
  }
  // Timestep that follows grid position `pos`; 0 after the last one.
  int next_timestep(int pos) const {
    return pos + 1 < length() ? steps[static_cast<std::size_t>(pos) + 1] : 0;
  }
};

// Uniform-stride grid t_k = round(T * (n - k) / n), k = 0..n-1, with
// branch_index = round_half_up((1 - beta) * n).
SamplingGrid build_grid(const NoiseSchedule& s, int n_steps, double beta);
// Same grid with an explicit shared-step count.
SamplingGrid build_grid_shared(const NoiseSchedule& s, int n_steps, int shared_steps);

}  // namespace sage
