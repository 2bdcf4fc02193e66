#include "sage/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sage/error.hpp"
#include "sage/text.hpp"

namespace sage {

std::string to_string(LossMode m) { return m == LossMode::ldm ? "ldm" : "sage"; }

LossMode parse_loss_mode(const std::string& name) {
  if (name == "ldm") return LossMode::ldm;
  if (name == "sage") return LossMode::sage;
  throw ConfigError("unknown loss mode '" + name + "' (expected ldm or sage)");
}

int branch_timestep(double beta, int t_train) {
  require(beta >= 0.0 && beta <= 1.0, "branch_timestep: beta must be in [0, 1]");
  const auto t = static_cast<int>(std::floor((1.0 - beta) * t_train + 0.5 + 1e-9));
  return std::clamp(t, 1, t_train);
}

std::pair<int, int> draw_timesteps(Rng& rng, int t_star, int t_train) {
  require(t_star >= 1 && t_star <= t_train, "draw_timesteps: need 1 <= T* <= T");
  const auto t_s = rng.uniform_int(static_cast<std::uint64_t>(t_star),
                                   static_cast<std::uint64_t>(t_train));
  const auto t_b = rng.uniform_int(1, static_cast<std::uint64_t>(t_star));
  return {static_cast<int>(t_s), static_cast<int>(t_b)};
}

namespace {

Vector residual(std::span<const double> a, std::span<const double> b) { return subtract(a, b); }

// Adds scale * 2 * r to grads through one taped evaluation.
void push_grad(const Denoiser& model, const MlpTape& tape, const Vector& r, double scale,
               ParamGrads& grads) {
  mlp_backward(model.params(), tape, scaled(r, 2.0 * scale), grads);
}

}  // namespace

LossResult loss_ldm(const Denoiser& model, std::span<const double> z, std::span<const double> c,
                    std::span<const double> eps, int t, bool with_grads) {
  require(z.size() == eps.size(), "loss_ldm: z and eps differ in length");
  const auto zt = forward_sample(model.schedule(), z, eps, t);
  LossResult out;
  if (with_grads) out.grads = ParamGrads::zeros_like(model.params());
  auto fwd = model.predict_with_tape(zt, t, c);
  const auto r = residual(fwd.output, eps);
  out.terms.term1 = squared_norm(r);
  out.terms.total = out.terms.term1;
  if (with_grads) push_grad(model, fwd.tape, r, 1.0, out.grads);
  return out;
}

LossResult loss_sage(const Denoiser& model, const TrainingGroup& group,
                     std::span<const double> eps, int t_s, int t_b, const SageLossConfig& cfg,
                     const DropMask* mask, bool with_grads) {
  const std::size_t n = group.size();
  require(n >= 1, "loss_sage: empty group");
  require(group.c.size() == n, "loss_sage: latents and conditions differ in count");
  require(mask == nullptr || mask->members.size() == n, "loss_sage: mask size mismatch");
  const auto& s = model.schedule();
  const Vector null_c = model.null_condition();
  auto cond = [&](std::size_t i) -> const Vector& {
    return mask && mask->members[i] ? null_c : group.c[i];
  };
  const Vector c_bar = mask && mask->shared ? null_c : group.c_bar();
  const double inv_n = 1.0 / static_cast<double>(n);

  LossResult out;
  if (with_grads) out.grads = ParamGrads::zeros_like(model.params());

  // Shared-phase evaluation, reused by terms 1 and 2.
  const auto zs_bar = forward_sample(s, group.z_bar(), eps, t_s);
  auto shared = model.predict_with_tape(zs_bar, t_s, c_bar);

  // Soft target: average per-prompt prediction at t_s.
  std::vector<MlpForward> per_prompt;
  std::vector<Vector> preds;
  per_prompt.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    per_prompt.push_back(model.predict_with_tape(forward_sample(s, group.z[i], eps, t_s), t_s,
                                                 cond(i)));
    preds.push_back(per_prompt.back().output);
  }
  const Vector soft = mean_of(preds);

  const auto r1 = residual(shared.output, eps);
  const auto r2 = residual(shared.output, soft);
  out.terms.term1 = cfg.lambda1 * squared_norm(r1);
  out.terms.term2 = cfg.lambda2 * squared_norm(r2);
  if (with_grads) {
    Vector g = scaled(r1, 2.0 * cfg.lambda1);
    axpy(2.0 * cfg.lambda2, r2, g);
    mlp_backward(model.params(), shared.tape, g, out.grads);
    if (cfg.soft_target_grad)
      for (std::size_t i = 0; i < n; ++i)
        push_grad(model, per_prompt[i].tape, r2, -cfg.lambda2 * inv_n, out.grads);
  }

  // Branch phase at t_b, per prompt.
  double branch = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto fwd = model.predict_with_tape(forward_sample(s, group.z[i], eps, t_b), t_b, cond(i));
    const auto r3 = residual(fwd.output, eps);
    branch += squared_norm(r3);
    if (with_grads) push_grad(model, fwd.tape, r3, inv_n, out.grads);
  }
  out.terms.term3 = branch * inv_n;
  out.terms.total = out.terms.term1 + out.terms.term2 + out.terms.term3;
  return out;
}

std::vector<TrainingGroup> training_groups(const GroupedDataset& data, LossMode mode) {
  std::vector<TrainingGroup> out;
  for (const auto& g : data.groups) {
    if (mode == LossMode::sage) {
      TrainingGroup tg;
      for (std::size_t id : g) {
        tg.z.push_back(data.records.at(id).x);
        tg.c.push_back(data.records.at(id).embedding);
      }
      out.push_back(std::move(tg));
    } else {
      for (std::size_t id : g)
        out.push_back({{data.records.at(id).x}, {data.records.at(id).embedding}});
    }
  }
  return out;
}

TrainResult train(Denoiser& model, const GroupedDataset& data, const TrainConfig& cfg, Rng& rng,
                  const CheckpointHook& hook) {
  const auto units = training_groups(data, cfg.mode);
  require(!units.empty(), "train: dataset has no groups");
  require(cfg.batch >= 1, "train: batch must be >= 1");
  const int T = model.schedule().t_train;
  const int t_star = cfg.loss.t_star_train;
  require(t_star >= 1 && t_star <= T, "train: need 1 <= T*_train <= T_train");
  const double p_drop = cfg.loss.cfg_dropout;
  require(p_drop >= 0.0 && p_drop < 1.0, "train: cfg dropout must be in [0, 1)");

  auto state = AdamWState::for_params(model.params());
  TrainResult result;
  result.curve.reserve(cfg.steps);
  const double inv_b = 1.0 / static_cast<double>(cfg.batch);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    auto grads = ParamGrads::zeros_like(model.params());
    LossTerms mean;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto& g = units[rng.uniform_int(0, units.size() - 1)];
      LossResult r;
      if (cfg.mode == LossMode::ldm) {
        const int t = static_cast<int>(rng.uniform_int(1, static_cast<std::uint64_t>(T)));
        const auto eps = gaussian(rng, model.data_dim());
        const bool drop = rng.bernoulli(p_drop);
        r = loss_ldm(model, g.z[0], drop ? model.null_condition() : g.c[0], eps, t);
      } else {
        const auto [t_s, t_b] = draw_timesteps(rng, t_star, T);
        const auto eps = gaussian(rng, model.data_dim());
        DropMask mask;
        mask.shared = rng.bernoulli(p_drop);
        for (std::size_t i = 0; i < g.size(); ++i) mask.members.push_back(rng.bernoulli(p_drop));
        r = loss_sage(model, g, eps, t_s, t_b, cfg.loss, &mask);
      }
      grads.add(r.grads, inv_b);
      mean.term1 += r.terms.term1 * inv_b;
      mean.term2 += r.terms.term2 * inv_b;
      mean.term3 += r.terms.term3 * inv_b;
      mean.total += r.terms.total * inv_b;
    }
    if (!std::isfinite(mean.total) || !adamw_step(model.mutable_params(), grads, state, cfg.adam)) {
      result.diverged = true;
      break;
    }
    result.curve.push_back({step, mean});
    result.steps_done = step;
    if (hook && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) hook(step, model);
  }
  return result;
}

std::string loss_csv(const std::vector<LossRow>& curve) {
  std::ostringstream out;
  out << "step,term1,term2,term3,total\n";
  for (const auto& r : curve)
    out << r.step << ',' << format_double(r.terms.term1) << ',' << format_double(r.terms.term2)
        << ',' << format_double(r.terms.term3) << ',' << format_double(r.terms.total) << '\n';
  return out.str();
}

}  // namespace sage
