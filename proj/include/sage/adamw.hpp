#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sage/mlp.hpp"

namespace sage {

struct AdamWOptions {
  double lr = 1e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  std::int64_t step = 0;

  static AdamWState for_params(const DenoiserParams& params);
};

// Decoupled weight decay: p <- p - lr * (wd * p + mhat / (sqrt(vhat) + eps)).
// Returns false and leaves params and moments untouched when any gradient
// component is non-finite.
[[nodiscard]] bool adamw_step(DenoiserParams& params, const ParamGrads& grads, AdamWState& state,
                              const AdamWOptions& opts);

// Same update over flat buffers; `step` is the 1-based step count after increment.
[[nodiscard]] bool adamw_update(std::span<double> params, std::span<const double> grads,
                                std::span<double> m, std::span<double> v, std::int64_t step,
                                const AdamWOptions& opts);

}  // namespace sage
