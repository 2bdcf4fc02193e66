#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sage/grouping.hpp"
#include "sage/model.hpp"
#include "sage/rng.hpp"
#include "sage/schedule.hpp"

namespace sage {

struct TraceStep {
  int t = 0;
  Vector z;
};

struct SampleTrace {
  std::size_t group_id = 0;
  std::vector<std::size_t> prompt_ids;
  // Starts at (t_T, z_T) and ends at the branch point latent.
  std::vector<TraceStep> shared_prefix;
  // One per prompt; each starts with the last shared latent and ends at t = 0.
  std::vector<std::vector<TraceStep>> branches;
  std::vector<Vector> finals;
  std::size_t shared_steps = 0;
  std::size_t branch_steps = 0;  // summed over prompts
};

struct CostReport {
  std::size_t independent_steps = 0;
  std::size_t shared_steps = 0;
  double saving_ratio = 0.0;

  void add(std::size_t group_size, std::size_t n_steps, std::size_t shared_count);
};

// Closed form beta * sum(N_k - 1) / sum(N_k) for a uniform sharing ratio.
double closed_form_saving(std::span<const std::size_t> group_sizes, double beta);

// One group: one z_T, shared phase under the centroid of the
// member embeddings, then per-prompt branches. `prompts` holds the embeddings
// that group.members index into.
SampleTrace sample_shared(const NoisePredictor& model, const SamplingGrid& grid,
                          const PromptGroup& group, std::span<const Vector> prompts,
                          const GuidanceSchedule& guidance, Rng& rng);

// Fresh noise per prompt, full-length DDIM under each prompt's own condition.
std::vector<SampleTrace> sample_independent(const NoisePredictor& model, const SamplingGrid& grid,
                                            std::span<const Vector> prompts,
                                            const GuidanceSchedule& guidance, Rng& rng);

// DDIM over grid positions [from, to) starting at z, conditioned on `cond`.
// Appends each visited (t, z) to `path` when given.
Vector ddim_run(const NoisePredictor& model, const SamplingGrid& grid, int from, int to, Vector z,
                std::span<const double> cond, const GuidanceSchedule& guidance,
                std::vector<TraceStep>* path = nullptr);

enum class Scheme { independent, shared };
std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& name);

struct GeneratedSample {
  std::size_t prompt_id = 0;
  std::size_t group_id = 0;
  Vector x0;
};

struct BatchResult {
  std::vector<PromptGroup> groups;
  std::vector<GeneratedSample> samples;  // ordered by group, then member
  std::vector<SampleTrace> traces;
  CostReport cost;
};

// greedy_partition, then one sample_shared per group. Group k draws from
// master.split(k), so groups are independent of evaluation order. The
// independent scheme keeps the same groups for reporting but gives every
// prompt its own stream master.split(prompt index) and charges full length.
BatchResult run_batch(const NoisePredictor& model, std::span<const Vector> prompts,
                      const SamplingGrid& grid, double threshold, const GuidanceSchedule& guidance,
                      const Rng& master, Scheme scheme = Scheme::shared);

}  // namespace sage
