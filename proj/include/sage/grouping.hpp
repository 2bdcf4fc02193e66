#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sage/linalg.hpp"

namespace sage {

// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Throws ContractViolation on a zero vector.
double cosine(std::span<const double> a, std::span<const double> b);

// Edge (i, j) iff tau_min < cos(c_i, c_j) < tau_max and i != j.
class SimilarityGraph {
 public:
  SimilarityGraph(std::size_t n, double tau_min, double tau_max);

  std::size_t size() const { return n_; }
  double tau_min() const { return tau_min_; }
  double tau_max() const { return tau_max_; }
  bool adjacent(std::size_t i, std::size_t j) const { return adj_[i * n_ + j] != 0; }
  void connect(std::size_t i, std::size_t j);
  std::size_t edge_count() const;
  // Sorted neighbour ids.
  std::vector<std::size_t> neighbours(std::size_t i) const;

 private:
  std::size_t n_;
  double tau_min_;
  double tau_max_;
  std::vector<std::uint8_t> adj_;
};

SimilarityGraph build_graph(std::span<const Vector> embeddings, double tau_min, double tau_max);

using Clique = std::vector<std::size_t>;

struct CliqueOptions {
  std::size_t min_size = 2;
  std::size_t max_size = 5;
  std::size_t cap = 1'000'000;
};

struct CliqueList {
  std::vector<Clique> cliques;  // members ascending, list in lexicographic order
  bool truncated = false;
};

// Every clique with size in [min_size, max_size], each once, in lexicographic
// order of the sorted member ids; the first `cap` of that order are kept.
CliqueList enumerate_cliques(const SimilarityGraph& graph, const CliqueOptions& opts = {});

// Streams the same order without storing it. `visit` returns false to stop.
// Returns the number of cliques visited; opts.cap bounds the walk.
std::size_t visit_cliques(const SimilarityGraph& graph, const CliqueOptions& opts,
                          const std::function<bool(const Clique&)>& visit);

struct PromptGroup {
  std::vector<std::size_t> members;
  Vector centroid;
  // Per-group sharing ratio; unset means the global grid's branch point applies.
  std::optional<double> beta;
};

// First fit: each prompt joins the earliest-created group whose members all
// have cosine >= threshold with it, otherwise opens a new group.
std::vector<PromptGroup> greedy_partition(std::span<const Vector> embeddings, double threshold);
// Same rule over an arbitrary pairwise similarity; centroids are left empty.
std::vector<PromptGroup> greedy_partition(std::size_t n,
                                          const std::function<double(std::size_t, std::size_t)>& sim,
                                          double threshold);

// Groups file: one header line starting with '#', then one group per line as
// comma-separated member ids.
struct GroupsHeader {
  double tau_min = 0.0;
  double tau_max = 0.0;
  double threshold = 0.0;
  std::string data_hash;
};

std::string format_groups(const GroupsHeader& header,
                          std::span<const std::vector<std::size_t>> groups);
void write_groups(const std::string& path, const GroupsHeader& header,
                  std::span<const std::vector<std::size_t>> groups);
std::vector<std::vector<std::size_t>> read_groups(const std::string& path,
                                                  GroupsHeader* header = nullptr);

}  // namespace sage
