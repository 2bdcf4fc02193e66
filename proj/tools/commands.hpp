#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "experiment.hpp"

namespace sage::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumerical = 3;

struct RunOptions {
  bool force = false;  // proceed past lineage mismatches
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

// Artifact locations under out_dir.
std::string data_dir(const ExperimentConfig& c);
std::string model_dir(const ExperimentConfig& c);
std::string checkpoint_path(const ExperimentConfig& c);
// <model_dir>/<kind>_<scheme>_s<shared_steps><ext>, kind = samples | cost | traces
std::string artifact_path(const ExperimentConfig& c, const std::string& kind,
                          const std::string& scheme, int shared_steps, const std::string& ext);
std::string samples_path(const ExperimentConfig& c, const std::string& scheme, int shared_steps);
std::string report_path(const ExperimentConfig& c);

int cmd_make_data(const ExperimentConfig& c, const RunOptions& o);

// Exit 3 on divergence, after saving the last good parameters.
int cmd_train(const ExperimentConfig& c, const RunOptions& o);

struct SampleOptions {
  std::vector<int> shared_steps;  // sweep; empty means use `beta`
  bool trace = false;
  std::string checkpoint;  // empty: checkpoint_path(c)
};
// Writes one samples file (plus cost CSV, plus traces when asked) per sweep
// point and returns their paths through `written`.
int cmd_sample(const ExperimentConfig& c, const SampleOptions& s, const RunOptions& o,
               std::vector<std::string>* written = nullptr);

struct EvalOptions {
  std::vector<std::string> samples;
  std::string report;  // empty: report_path(c)
  bool self_check = false;  // also append the reference data scored against itself
};
int cmd_eval(const ExperimentConfig& c, const EvalOptions& e, const RunOptions& o);

struct PlotOptions {
  std::string report;  // empty: report_path(c)
  std::string samples;
  std::string traces;
  std::string plot_dir;  // empty: out_dir/plots
};
int cmd_plot(const ExperimentConfig& c, const PlotOptions& p, const RunOptions& o);

}  // namespace sage::cli
