#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sage/adamw.hpp"
#include "sage/data.hpp"
#include "sage/model.hpp"
#include "sage/rng.hpp"

namespace sage {

// N identity-encoded latents and their conditions; means are recomputed on use.
struct TrainingGroup {
  std::vector<Vector> z;
  std::vector<Vector> c;

  std::size_t size() const { return z.size(); }
  Vector z_bar() const { return mean_of(z); }
  Vector c_bar() const { return mean_of(c); }
};

enum class LossMode { ldm, sage };
std::string to_string(LossMode m);
LossMode parse_loss_mode(const std::string& name);

// w_t is constant one.
struct SageLossConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  int t_star_train = 700;
  double cfg_dropout = 0.1;
  // Let gradients flow through the averaged per-prompt prediction.
  bool soft_target_grad = false;
};

// round((1 - beta) * T), clamped to [1, T].
int branch_timestep(double beta, int t_train);

// t_s ~ U{T*..T} and t_b ~ U{1..T*}, in that order.
std::pair<int, int> draw_timesteps(Rng& rng, int t_star, int t_train);

// Which condition slots are replaced by the null embedding.
struct DropMask {
  bool shared = false;
  std::vector<bool> members;
};

struct LossTerms {
  double term1 = 0.0;  // shared-phase noise error at (z_bar, c_bar, t_s)
  double term2 = 0.0;  // soft-target alignment
  double term3 = 0.0;  // branch-phase noise error averaged over members
  double total = 0.0;
};

struct LossResult {
  LossTerms terms;
  ParamGrads grads;
};

// |eps_theta(alpha_t z + sigma_t eps, c) - eps|^2; the value lands in term1.
LossResult loss_ldm(const Denoiser& model, std::span<const double> z, std::span<const double> c,
                    std::span<const double> eps, int t, bool with_grads = true);

// Hybrid objective over one group sharing a single eps. `mask` (optional)
// replaces conditions by the null embedding before evaluation.
LossResult loss_sage(const Denoiser& model, const TrainingGroup& group,
                     std::span<const double> eps, int t_s, int t_b, const SageLossConfig& cfg,
                     const DropMask* mask = nullptr, bool with_grads = true);

struct TrainConfig {
  LossMode mode = LossMode::sage;
  SageLossConfig loss;
  AdamWOptions adam;
  std::size_t steps = 20000;
  std::size_t batch = 4;
  std::size_t checkpoint_every = 0;  // 0: never
};

struct LossRow {
  std::size_t step = 0;
  LossTerms terms;
};

struct TrainResult {
  std::vector<LossRow> curve;
  std::size_t steps_done = 0;
  bool diverged = false;
};

using CheckpointHook = std::function<void(std::size_t step, const Denoiser&)>;

// Grouped training loop with a fixed step budget. On a non-finite loss or gradient
// the loop stops and `model` keeps the last good parameters.
TrainResult train(Denoiser& model, const GroupedDataset& data, const TrainConfig& cfg, Rng& rng,
                  const CheckpointHook& hook = {});

// Training units: dataset groups, or every group member as its own singleton.
std::vector<TrainingGroup> training_groups(const GroupedDataset& data, LossMode mode);

std::string loss_csv(const std::vector<LossRow>& curve);

}  // namespace sage
