#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sage/data.hpp"
#include "sage/linalg.hpp"
#include "sage/sampling.hpp"

namespace sage {

struct GaussianFit {
  Vector mean;
  Matrix covariance;
};

// Sample mean and unbiased covariance (zero covariance for a single point).
GaussianFit fit_gaussian(std::span<const Vector> points);

// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2). Eigenvalues
// down to -1e-10 are clamped to zero; anything more negative is a NumericalError.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

// Mean of exp(-|x - mean_c|^2 / (2 spread_c^2)); spread 0 scores exact hits only.
double alignment_score(std::span<const Vector> samples, const Concept& target);

// Mean pairwise distance within each group of final samples, averaged over
// groups with at least two members; empty when no such group exists.
std::optional<double> diversity(std::span<const std::vector<Vector>> groups);

// One line of samples.jsonl.
struct SampleRecord {
  std::size_t prompt_id = 0;  // concept id
  std::size_t group_id = 0;
  Vector x0;
  std::string model;
  std::string scheme;
  double beta = 0.0;
  double omega = 0.0;
  std::uint64_t seed = 0;
  int n_steps = 0;
  int shared_steps = 0;
  std::size_t repeat = 0;
};

struct SamplesFile {
  std::string config_hash;
  std::string data_hash;
  std::vector<SampleRecord> samples;
};

std::string format_samples(const SamplesFile& f);
void write_samples(const std::string& path, const SamplesFile& f);
SamplesFile read_samples(const std::string& path);

struct MetricsReport {
  std::string model;
  std::string scheme;
  double beta = 0.0;
  std::optional<double> frechet;
  std::optional<double> alignment;
  std::optional<double> diversity;
  double cost_saving = 0.0;
  // Echo of the producing configuration, kept in comment lines of the CSV.
  double omega = 0.0;
  double tau_min = 0.0;
  double tau_max = 0.0;
  std::uint64_t seed = 0;
  std::size_t unresolved = 0;
  std::string config_hash;

  bool operator==(const MetricsReport&) const = default;
};

// Frechet of generated vs reference records, per-prompt alignment averaged
// over prompts, within-group diversity averaged over repeats and groups (0
// when every group is a singleton), and
// the step saving recomputed from the stored group sizes. Samples whose
// prompt id has no concept are counted in `unresolved` and skipped. Without a
// reference dataset the frechet field stays empty.
MetricsReport evaluate(std::span<const SampleRecord> samples, const GroupedDataset* reference,
                       const OracleWorld& world);

inline constexpr const char* kReportHeader =
    "model,scheme,beta,frechet,alignment,diversity,cost_saving";

// Rows may come from different configs (one per model or beta) but must share
// the dataset lineage named in the header.
struct ReportFile {
  std::string data_hash;
  std::vector<MetricsReport> rows;
};

std::string format_report(const ReportFile& r);
ReportFile parse_report(const std::string& text);
ReportFile read_report(const std::string& path);
void write_report(const std::string& path, const ReportFile& r);

}  // namespace sage
