#include "sage/sampling.hpp"

#include <numeric>

#include "sage/error.hpp"

namespace sage {

void CostReport::add(std::size_t group_size, std::size_t n_steps, std::size_t shared_count) {
  require(shared_count <= n_steps, "CostReport: shared steps exceed the grid");
  independent_steps += group_size * n_steps;
  shared_steps += shared_count + group_size * (n_steps - shared_count);
  saving_ratio = independent_steps == 0
                     ? 0.0
                     : 1.0 - static_cast<double>(shared_steps) /
                                 static_cast<double>(independent_steps);
}

double closed_form_saving(std::span<const std::size_t> group_sizes, double beta) {
  const double total = std::accumulate(group_sizes.begin(), group_sizes.end(), 0.0);
  if (total == 0.0) return 0.0;
  return beta * (total - static_cast<double>(group_sizes.size())) / total;
}

Vector ddim_run(const NoisePredictor& model, const SamplingGrid& grid, int from, int to, Vector z,
                std::span<const double> cond, const GuidanceSchedule& guidance,
                std::vector<TraceStep>* path) {
  require(0 <= from && from <= to && to <= grid.length(), "ddim_run: bad grid range");
  for (int k = from; k < to; ++k) {
    const int t = grid.steps[static_cast<std::size_t>(k)];
    const int t_prev = grid.next_timestep(k);
    const auto eps = predict_cfg(model, z, t, cond, guidance.at(t));
    z = ddim_step(model.schedule(), z, eps, t, t_prev);
    if (path) path->push_back({t_prev, z});
  }
  return z;
}

SampleTrace sample_shared(const NoisePredictor& model, const SamplingGrid& grid,
                          const PromptGroup& group, std::span<const Vector> prompts,
                          const GuidanceSchedule& guidance, Rng& rng) {
  require(!group.members.empty(), "sample_shared: empty group");
  require(grid.length() >= 1 && grid.branch_index >= 0 && grid.branch_index <= grid.length(),
          "sample_shared: invalid grid");
  SamplingGrid g = grid;
  if (group.beta) g = build_grid(model.schedule(), grid.length(), *group.beta);

  std::vector<Vector> members;
  for (std::size_t id : group.members) members.push_back(prompts[id]);
  const Vector c_bar = centroid(members);

  SampleTrace tr;
  tr.prompt_ids = group.members;
  const int shared = g.shared_count();
  Vector z = gaussian(rng, model.data_dim());
  tr.shared_prefix.push_back({g.steps.front(), z});
  z = ddim_run(model, g, 0, shared, std::move(z), c_bar, guidance, &tr.shared_prefix);
  tr.shared_steps = static_cast<std::size_t>(shared);

  for (const auto& c : members) {
    std::vector<TraceStep> branch{tr.shared_prefix.back()};
    tr.finals.push_back(ddim_run(model, g, shared, g.length(), z, c, guidance, &branch));
    tr.branches.push_back(std::move(branch));
  }
  tr.branch_steps = members.size() * static_cast<std::size_t>(g.branch_index);
  return tr;
}

std::vector<SampleTrace> sample_independent(const NoisePredictor& model, const SamplingGrid& grid,
                                            std::span<const Vector> prompts,
                                            const GuidanceSchedule& guidance, Rng& rng) {
  require(!prompts.empty(), "sample_independent: no prompts");
  std::vector<SampleTrace> out;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    SampleTrace tr;
    tr.group_id = i;
    tr.prompt_ids = {i};
    Vector z = gaussian(rng, model.data_dim());
    tr.shared_prefix.push_back({grid.steps.front(), z});
    std::vector<TraceStep> branch{tr.shared_prefix.back()};
    tr.finals.push_back(ddim_run(model, grid, 0, grid.length(), z, prompts[i], guidance, &branch));
    tr.branches.push_back(std::move(branch));
    tr.branch_steps = static_cast<std::size_t>(grid.length());
    out.push_back(std::move(tr));
  }
  return out;
}

std::string to_string(Scheme s) { return s == Scheme::shared ? "shared" : "independent"; }

Scheme parse_scheme(const std::string& name) {
  if (name == "shared") return Scheme::shared;
  if (name == "independent") return Scheme::independent;
  throw ConfigError("unknown sampling scheme '" + name + "' (expected shared or independent)");
}

BatchResult run_batch(const NoisePredictor& model, std::span<const Vector> prompts,
                      const SamplingGrid& grid, double threshold, const GuidanceSchedule& guidance,
                      const Rng& master, Scheme scheme) {
  require(!prompts.empty(), "run_batch: no prompts");
  BatchResult out;
  out.groups = greedy_partition(prompts, threshold);
  const auto n = static_cast<std::size_t>(grid.length());
  for (std::size_t k = 0; k < out.groups.size(); ++k) {
    const auto& g = out.groups[k];
    SampleTrace tr;
    if (scheme == Scheme::shared) {
      Rng rng = master.split(k);
      tr = sample_shared(model, grid, g, prompts, guidance, rng);
      out.cost.add(g.members.size(), n, tr.shared_steps);
    } else {
      tr.prompt_ids = g.members;
      for (std::size_t id : g.members) {
        Rng rng = master.split(id);
        const Vector one[] = {prompts[id]};
        auto single = sample_independent(model, grid, one, guidance, rng);
        tr.shared_prefix = single[0].shared_prefix;
        tr.branches.push_back(std::move(single[0].branches[0]));
        tr.finals.push_back(std::move(single[0].finals[0]));
        tr.branch_steps += n;
      }
      // Every member started from its own noise; there is no shared prefix.
      tr.shared_prefix.clear();
      out.cost.add(g.members.size(), n, 0);
    }
    tr.group_id = k;
    for (std::size_t i = 0; i < g.members.size(); ++i)
      out.samples.push_back({g.members[i], k, tr.finals[i]});
    out.traces.push_back(std::move(tr));
  }
  return out;
}

}  // namespace sage
