#include <cmath>

#include "doctest.h"
#include "sage/error.hpp"
#include "sage/rng.hpp"
#include "sage/schedule.hpp"

using namespace sage;

TEST_CASE("build_schedule: boundaries and variance preservation") {
  for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
    auto s = build_schedule(1000, kind);
    CHECK(s.alpha_at(0) == 1.0);
    CHECK(s.sigma_at(0) == 0.0);
    double worst = 0.0;
    for (int t = 0; t <= 1000; ++t) {
      worst = std::max(worst, std::abs(s.alpha_at(t) * s.alpha_at(t) +
                                       s.sigma_at(t) * s.sigma_at(t) - 1.0));
      if (t > 0) {
        CHECK(s.alpha_at(t) < s.alpha_at(t - 1));
        CHECK(s.sigma_at(t) > s.sigma_at(t - 1));
      }
    }
    CHECK(worst <= 1e-12);
    CHECK(s.alpha_at(1000) > 0.0);
  }
  auto lin = build_schedule(1000, "linear");
  CHECK(lin.alpha_at(1000) <= 0.1);
  // alpha_T^2 = 1e-3 by construction.
  CHECK(lin.alpha_at(1000) == doctest::Approx(std::sqrt(1e-3)).epsilon(1e-12));
  CHECK_THROWS_AS(build_schedule(1000, "sigmoid"), ConfigError);
  CHECK_THROWS_AS(build_schedule(1, ScheduleKind::linear), ConfigError);
}

TEST_CASE("forward_sample examples") {
  auto s = build_schedule(1000, ScheduleKind::linear);
  Vector z0{0.4, -2.0}, eps{1.5, 0.25};
  CHECK(forward_sample(s, z0, eps, 0) == z0);
  auto z = forward_sample(s, Vector{0, 0}, eps, 500);
  CHECK(z == Vector{s.sigma_at(500) * eps[0], s.sigma_at(500) * eps[1]});

  NoiseSchedule hand;
  hand.t_train = 1;
  hand.alpha = {1.0, 0.8};
  hand.sigma = {0.0, 0.6};
  auto r = forward_sample(hand, Vector{1, 0}, Vector{0, 1}, 1);
  CHECK(r[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("ddim_step: inversion, zero noise, chaining") {
  auto s = build_schedule(1000, ScheduleKind::linear);
  Rng rng(11);
  for (int t = 1; t <= 1000; t += 37) {
    auto z0 = gaussian(rng, 3);
    auto eps = gaussian(rng, 3);
    auto back = ddim_step(s, forward_sample(s, z0, eps, t), eps, t, 0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(back[i] - z0[i]) <= 1e-12);
  }
  Vector z{0.7, -1.1};
  auto out = ddim_step(s, z, Vector{0, 0}, 800, 300);
  const double ratio = s.alpha_at(300) / s.alpha_at(800);
  CHECK(out[0] == doctest::Approx(ratio * z[0]).epsilon(1e-14));
  CHECK(out[1] == doctest::Approx(ratio * z[1]).epsilon(1e-14));

  auto grid = build_grid(s, 30, 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto zt = gaussian(rng, 2);
    auto eps = gaussian(rng, 2);
    Vector chained = zt;
    for (int k = 0; k < grid.length(); ++k)
      chained = ddim_step(s, chained, eps, grid.steps[k], grid.next_timestep(k));
    auto direct = ddim_step(s, zt, eps, grid.steps[0], 0);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(chained[i] - direct[i]) <= 1e-12);
  }
}

TEST_CASE("ddim_step: zero alpha is a numerical error") {
  NoiseSchedule bad;
  bad.t_train = 1;
  bad.alpha = {1.0, 0.0};
  bad.sigma = {0.0, 1.0};
  CHECK_THROWS_AS(ddim_step(bad, Vector{1.0}, Vector{0.0}, 1, 0), NumericalError);
}

TEST_CASE("build_grid examples") {
  auto s = build_schedule(1000, ScheduleKind::linear);
  auto g = build_grid(s, 30, 0.3);
  CHECK(g.length() == 30);
  CHECK(g.branch_index == 21);
  CHECK(g.shared_count() == 9);
  CHECK(g.steps.front() == 1000);
  CHECK(g.steps.back() > 0);
  for (int k = 1; k < g.length(); ++k) CHECK(g.steps[k] < g.steps[k - 1]);
  CHECK(g.next_timestep(29) == 0);
  CHECK(build_grid(s, 30, 0.0).branch_index == 30);
  CHECK(build_grid(s, 30, 1.0).branch_index == 0);
  for (double beta : {0.2, 0.3, 0.4})
    CHECK(build_grid(s, 30, beta).shared_count() == static_cast<int>(std::lround(beta * 30)));
  CHECK(build_grid_shared(s, 30, 12).branch_index == 18);
  CHECK(build_grid(s, 1000, 0.5).steps.back() == 1);
}
