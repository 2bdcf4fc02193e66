#include "sage/adamw.hpp"

#include <cmath>

#include "sage/error.hpp"

namespace sage {

AdamWState AdamWState::for_params(const DenoiserParams& params) {
  AdamWState s;
  s.m = ParamGrads::zeros_like(params).layers;
  s.v = s.m;
  return s;
}

bool adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, std::int64_t step, const AdamWOptions& opts) {
  require(params.size() == grads.size() && m.size() == params.size() &&
              v.size() == params.size(),
          "adamw_update: buffer sizes differ");
  require(opts.lr > 0.0, "adamw_update: lr must be positive");
  require(step >= 1, "adamw_update: step counts from 1");
  if (!all_finite(grads)) return false;

  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g;
    v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= opts.lr * (opts.weight_decay * params[i] + mhat / (std::sqrt(vhat) + opts.eps));
  }
  return true;
}

bool adamw_step(DenoiserParams& params, const ParamGrads& grads, AdamWState& state,
                const AdamWOptions& opts) {
  require(grads.layers.size() == params.layers.size() &&
              state.m.size() == params.layers.size() && state.v.size() == params.layers.size(),
          "adamw_step: layout mismatch");
  if (!grads.all_finite()) return false;
  const std::int64_t step = state.step + 1;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& p = params.layers[k];
    const auto& g = grads.layers[k];
    require(g.weight.size() == p.weight.size() && g.bias.size() == p.bias.size(),
            "adamw_step: gradient shape mismatch");
    // Gradients were checked above, so these cannot reject.
    (void)adamw_update(p.weight.values(), g.weight.values(), state.m[k].weight.values(),
                       state.v[k].weight.values(), step, opts);
    (void)adamw_update(p.bias, g.bias, state.m[k].bias, state.v[k].bias, step, opts);
  }
  state.step = step;
  return true;
}

}  // namespace sage
