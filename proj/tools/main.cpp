#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "sage/error.hpp"

using namespace sage::cli;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out_dir;
  bool force = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_file, "key = value config file");
  app->add_option("-s,--set", c.overrides, "override a config key (key=value), repeatable")
      ->expected(1)
      ->allow_extra_args(false)
      ->take_all();
  app->add_option("-o,--out", c.out_dir, "output directory (config key out_dir)");
  app->add_flag("-f,--force", c.force, "proceed past config/data hash mismatches");
}

ExperimentConfig resolve(const Common& c) {
  auto cfg = c.config_file.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config_file);
  for (const auto& o : c.overrides) cfg.apply_override(o);
  apply_environment(cfg);
  if (!c.out_dir.empty()) cfg.set("out_dir", c.out_dir);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shared-prefix diffusion sampling on a synthetic concept world"};
  app.require_subcommand(1);
  Common common;

  auto* make_data = app.add_subcommand("make-data", "generate world, records and clique groups");
  auto* train = app.add_subcommand("train", "train a denoiser (loss = ldm | sage)");
  auto* sample = app.add_subcommand("sample", "sample prompts with independent or shared schemes");
  auto* eval = app.add_subcommand("eval", "score samples files and append rows to the report");
  auto* plot = app.add_subcommand("plot", "write SVG charts from a report and samples");
  for (auto* sub : {make_data, train, sample, eval, plot}) add_common(sub, common);

  SampleOptions sopt;
  std::string scheme;
  sample->add_option("--scheme", scheme, "independent | shared (config key scheme)");
  sample->add_option("--shared-steps", sopt.shared_steps, "sweep of shared step counts")->delimiter(',');
  sample->add_flag("--trace", sopt.trace, "also write per-group latent trajectories");
  sample->add_option("--checkpoint", sopt.checkpoint, "checkpoint to load");

  EvalOptions eopt;
  eval->add_option("samples", eopt.samples, "samples files");
  eval->add_option("--report", eopt.report, "report CSV to append to");
  eval->add_flag("--self-check", eopt.self_check, "append the reference data scored against itself");

  PlotOptions popt;
  plot->add_option("--report", popt.report, "report CSV");
  plot->add_option("--samples", popt.samples, "samples file for the scatter plot");
  plot->add_option("--traces", popt.traces, "traces file for shared-prefix paths");
  plot->add_option("--plot-dir", popt.plot_dir, "where to write SVG files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    auto cfg = resolve(common);
    RunOptions run;
    run.force = common.force;
    if (*make_data) return cmd_make_data(cfg, run);
    if (*train) return cmd_train(cfg, run);
    if (*sample) {
      if (!scheme.empty()) cfg.set("scheme", scheme);
      return cmd_sample(cfg, sopt, run);
    }
    if (*eval) return cmd_eval(cfg, eopt, run);
    if (*plot) return cmd_plot(cfg, popt, run);
  } catch (const sage::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const sage::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
