#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sage/linalg.hpp"
#include "sage/rng.hpp"

namespace sage {

// Synthetic concept world. Meta-concepts sit at data means drawn uniformly in
// a disk; a meta embedding carries location features of that mean plus a
// random component, and each child is a slerp of the meta embedding toward
// its own direction in a reserved perturbation subspace. Child data means are
// the meta mean plus a fixed linear image of the embedding displacement.
struct WorldParams {
  std::uint64_t seed = 1;
  std::size_t n_meta = 200;
  std::size_t children = 3;
  std::size_t embed_dim = 16;
  std::size_t data_dim = 2;
  double tau_min = 0.6;
  double tau_max = 0.9;
  double spread = 0.15;
  double radius = 5.0;
  // Share of a meta embedding's energy on location features.
  double location_weight = 0.65;
  double location_freq = 0.5;
  std::size_t noise_dims = 4;
  // Subspace reserved for child perturbations; must hold `children` directions.
  std::size_t perturb_dims = 4;
  double offset_scale = 2.0;
  // Smallest child-to-meta angle (radians) the perturbation may use.
  double min_angle = 0.05;
  std::size_t max_retries = 20;

  bool operator==(const WorldParams&) const = default;
};

struct Concept {
  std::size_t id = 0;
  std::size_t meta = 0;
  Vector embedding;
  Vector mean;
  double spread = 0.0;

  bool operator==(const Concept&) const = default;
};

struct WorldStats {
  double sibling_in_window = 1.0;  // fraction of sibling pairs inside (tau_min, tau_max)
  double cross_below_min = 1.0;    // fraction of cross-meta pairs below tau_min
  double child_angle = 0.0;
  std::size_t attempts = 0;
};

struct OracleWorld {
  WorldParams params;
  std::vector<Concept> concepts;
  WorldStats stats;

  const Concept& concept_at(std::size_t id) const { return concepts.at(id); }
};

// Throws ConfigError when the window cannot be met after max_retries attempts.
OracleWorld make_world(const WorldParams& params);
OracleWorld make_world(Rng& rng, const WorldParams& params);

struct Record {
  std::size_t id = 0;
  std::size_t concept_id = 0;
  Vector embedding;
  Vector x;

  bool operator==(const Record&) const = default;
};

// Records are emitted concept by concept; x ~ N(mean_c, spread_c^2 I).
std::vector<Record> sample_records(Rng& rng, const OracleWorld& world, std::size_t per_concept);

struct DatasetProvenance {
  double tau_min = 0.6;
  double tau_max = 0.9;
  WorldParams world;
  std::size_t per_concept = 0;
  std::size_t target_groups = 0;
  std::size_t available_cliques = 0;
  bool cliques_truncated = false;
  bool fewer_than_target = false;
  std::string data_hash;

  bool operator==(const DatasetProvenance&) const = default;
};

struct GroupedDataset {
  std::vector<Record> records;
  std::vector<std::vector<std::size_t>> groups;  // record ids
  DatasetProvenance provenance;

  bool operator==(const GroupedDataset&) const = default;
};

struct GroupingOptions {
  // Bound on the streamed enumeration; subsampling strides over everything
  // visited, so the output is unbiased unless this bound is hit.
  std::size_t clique_cap = 100'000'000;
  // Optional relative weights for group sizes 2, 3, 4, 5. Empty: plain stride
  // sampling over the canonical clique order.
  std::vector<double> size_weights;
};

// Fills tau window, target and clique counts of the provenance; the caller
// owns the world fields.
GroupedDataset build_grouped_dataset(const std::vector<Record>& records, double tau_min,
                                     double tau_max, std::size_t target_groups,
                                     const GroupingOptions& opts = {});

struct DatasetConfig {
  WorldParams world;
  std::size_t per_concept = 3;
  std::size_t target_groups = 5000;
  GroupingOptions grouping;
};

// World, records and groups from one seed, with provenance and data hash.
struct GeneratedData {
  OracleWorld world;
  GroupedDataset dataset;
};
GeneratedData generate_dataset(const DatasetConfig& cfg);

// Group sizes 0..5 -> count.
std::vector<std::size_t> group_size_histogram(const GroupedDataset& ds);

// Spearman rank correlation between embedding cosine and negative distance of
// data means, over all concept pairs.
double embedding_mean_coupling(const OracleWorld& world);

// Deterministic fingerprint of everything that determines a dataset.
std::string data_fingerprint(const DatasetConfig& cfg);

// world.json, records.jsonl and groups.txt in `dir`.
void write_dataset(const std::string& dir, const OracleWorld& world, const GroupedDataset& ds);
OracleWorld read_world(const std::string& path);
GroupedDataset read_dataset(const std::string& dir);

std::string world_to_json(const OracleWorld& world, const DatasetProvenance& prov);
std::string world_params_text(const WorldParams& p);
std::string records_to_jsonl(const std::vector<Record>& records);

}  // namespace sage
