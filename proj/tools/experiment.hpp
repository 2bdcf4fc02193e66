#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sage/data.hpp"
#include "sage/model.hpp"
#include "sage/sampling.hpp"
#include "sage/training.hpp"

namespace sage::cli {

// Flat key = value configuration. Every key has a default; unknown keys are
// rejected. Values are kept as text so the canonical form (and the hash)
// is exactly what the user wrote after normalisation.
class ExperimentConfig {
 public:
  ExperimentConfig();

  // key = value lines, '#' comments, optional double quotes around strings.
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  // "key=value"
  void apply_override(const std::string& assignment);
  const std::string& get(const std::string& key) const;

  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;

  // Sorted "key = value" lines, strings quoted; parses back to the same config.
  std::string canonical() const;

  // Dataset lineage (same as the data module's fingerprint).
  std::string data_hash() const;
  // Everything that determines a checkpoint.
  std::string train_hash() const;
  // Every key except the output directory.
  std::string config_hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// SAGE_SEED, when set and non-empty, overrides the master seed.
void apply_environment(ExperimentConfig& c);

enum class Stage { data, train, sample, output };
Stage stage_of(const std::string& key);
std::vector<std::string> known_keys();

DatasetConfig dataset_config(const ExperimentConfig& c);
DenoiserShape denoiser_shape(const ExperimentConfig& c);
std::shared_ptr<const NoiseSchedule> noise_schedule(const ExperimentConfig& c);
TrainConfig train_config(const ExperimentConfig& c);
SamplingGrid sampling_grid(const ExperimentConfig& c, const NoiseSchedule& s);
std::string model_label(const ExperimentConfig& c);

// Random streams derived from the master seed, one per pipeline stage.
inline constexpr std::uint64_t kInitStream = 10;
inline constexpr std::uint64_t kTrainStream = 11;
inline constexpr std::uint64_t kSampleStream = 20;

}  // namespace sage::cli
