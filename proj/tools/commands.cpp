#include "commands.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sage/error.hpp"
#include "sage/metrics.hpp"
#include "sage/text.hpp"
#include "svg.hpp"

namespace sage::cli {

namespace fs = std::filesystem;

namespace {

std::ostream& out_of(const RunOptions& o) { return o.out ? *o.out : std::cout; }
std::ostream& err_of(const RunOptions& o) { return o.err ? *o.err : std::cerr; }

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Returns true when the caller may go on.
bool lineage_ok(const std::string& what, const std::string& expected, const std::string& found,
                const RunOptions& o) {
  if (expected == found) return true;
  err_of(o) << "warning: " << what << " hash mismatch (expected " << expected << ", found "
            << found << ")" << (o.force ? "; continuing because of --force" : "; pass --force to use it anyway")
            << '\n';
  return o.force;
}

std::string trace_json(const SampleTrace& tr) {
  auto step = [](const TraceStep& s) {
    std::string out = "[" + std::to_string(s.t);
    for (double v : s.z) out += "," + format_double(v);
    return out + "]";
  };
  std::ostringstream out;
  out << "{\"group_id\": " << tr.group_id << ", \"prompt_ids\": [";
  for (std::size_t i = 0; i < tr.prompt_ids.size(); ++i) out << (i ? "," : "") << tr.prompt_ids[i];
  out << "], \"shared_prefix\": [";
  for (std::size_t i = 0; i < tr.shared_prefix.size(); ++i)
    out << (i ? "," : "") << step(tr.shared_prefix[i]);
  out << "], \"branches\": [";
  for (std::size_t b = 0; b < tr.branches.size(); ++b) {
    out << (b ? "," : "") << '[';
    for (std::size_t i = 0; i < tr.branches[b].size(); ++i)
      out << (i ? "," : "") << step(tr.branches[b][i]);
    out << ']';
  }
  out << "]}\n";
  return out.str();
}

std::string cost_csv(const std::string& hash, const std::string& scheme, double beta, int n_steps,
                     int shared, const BatchResult& b) {
  std::vector<std::size_t> sizes;
  for (const auto& g : b.groups) sizes.push_back(g.members.size());
  std::ostringstream out;
  out << "# config_hash=" << hash << '\n'
      << "scheme,beta,n_steps,shared_steps,groups,prompts,independent_steps,total_steps,"
         "saving_ratio,closed_form\n"
      << scheme << ',' << format_double(beta) << ',' << n_steps << ',' << shared << ','
      << b.groups.size() << ',' << b.samples.size() << ',' << b.cost.independent_steps << ','
      << b.cost.shared_steps << ',' << format_double(b.cost.saving_ratio) << ','
      << format_double(scheme == "shared" ? closed_form_saving(sizes, beta) : 0.0) << '\n';
  return out.str();
}

}  // namespace

std::string data_dir(const ExperimentConfig& c) { return join(c.get("out_dir"), "data"); }
std::string model_dir(const ExperimentConfig& c) { return join(c.get("out_dir"), model_label(c)); }
std::string checkpoint_path(const ExperimentConfig& c) { return join(model_dir(c), "checkpoint.txt"); }
std::string artifact_path(const ExperimentConfig& c, const std::string& kind,
                          const std::string& scheme, int shared_steps, const std::string& ext) {
  return join(model_dir(c), kind + "_" + scheme + "_s" + std::to_string(shared_steps) + ext);
}
std::string samples_path(const ExperimentConfig& c, const std::string& scheme, int shared_steps) {
  return artifact_path(c, "samples", scheme, shared_steps, ".jsonl");
}
std::string report_path(const ExperimentConfig& c) { return join(c.get("out_dir"), "report.csv"); }

int cmd_make_data(const ExperimentConfig& c, const RunOptions& o) {
  const auto gen = generate_dataset(dataset_config(c));
  const auto dir = data_dir(c);
  write_dataset(dir, gen.world, gen.dataset);
  const auto h = group_size_histogram(gen.dataset);
  auto& out = out_of(o);
  out << "wrote " << dir << ": " << gen.world.concepts.size() << " concepts, "
      << gen.dataset.records.size() << " records, " << gen.dataset.groups.size()
      << " groups (sizes";
  for (std::size_t n = 1; n < h.size(); ++n)
    if (h[n]) out << ' ' << n << ':' << h[n];
  out << "), " << gen.dataset.provenance.available_cliques << " cliques available, data_hash "
      << gen.dataset.provenance.data_hash << '\n';
  if (gen.dataset.provenance.fewer_than_target)
    err_of(o) << "warning: only " << gen.dataset.groups.size() << " groups available, target "
              << gen.dataset.provenance.target_groups << '\n';
  return kExitOk;
}

int cmd_train(const ExperimentConfig& c, const RunOptions& o) {
  const auto data = read_dataset(data_dir(c));
  if (!lineage_ok("dataset", c.data_hash(), data.provenance.data_hash, o)) return kExitUsage;
  const auto cfg = train_config(c);
  const auto seed = static_cast<std::uint64_t>(parse_int(c.get("seed")));
  Rng init(seed, kInitStream);
  auto model = Denoiser::create(denoiser_shape(c), noise_schedule(c), init);
  if (model.embed_dim() != data.records.front().embedding.size())
    throw ConfigError("embed_dim does not match the dataset");

  const auto dir = model_dir(c);
  fs::create_directories(dir);
  CheckpointMeta meta{c.train_hash(), data.provenance.data_hash, model_label(c), 0};
  auto hook = [&](std::size_t step, const Denoiser& d) {
    auto m = meta;
    m.steps = step;
    save_checkpoint(join(dir, "checkpoint_step" + std::to_string(step) + ".txt"), d, m);
  };
  Rng rng(seed, kTrainStream);
  const auto result = train(model, data, cfg, rng, hook);
  meta.steps = result.steps_done;
  save_checkpoint(checkpoint_path(c), model, meta);
  write_file(join(dir, "loss.csv"), "# config_hash=" + c.train_hash() + "\n" + loss_csv(result.curve));

  auto& out = out_of(o);
  out << "trained " << meta.model_label << " (" << to_string(cfg.mode) << ") for "
      << result.steps_done << " steps";
  if (!result.curve.empty()) out << ", final loss " << format_double(result.curve.back().terms.total);
  out << "; wrote " << checkpoint_path(c) << '\n';
  if (result.diverged) {
    err_of(o) << "error: training diverged at step " << result.steps_done + 1
              << "; saved the last good parameters\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_sample(const ExperimentConfig& c, const SampleOptions& s, const RunOptions& o,
               std::vector<std::string>* written) {
  const auto ckpt = load_checkpoint(s.checkpoint.empty() ? checkpoint_path(c) : s.checkpoint);
  if (!lineage_ok("checkpoint config", c.train_hash(), ckpt.meta.config_hash, o)) return kExitUsage;
  if (!lineage_ok("checkpoint dataset", c.data_hash(), ckpt.meta.data_hash, o)) return kExitUsage;
  const auto world = read_world(join(data_dir(c), "world.json"));
  std::vector<Vector> prompts;
  for (const auto& con : world.concepts) prompts.push_back(con.embedding);

  const auto& model = ckpt.denoiser;
  const Scheme scheme = parse_scheme(c.get("scheme"));
  const int n_steps = static_cast<int>(c.count("n_steps"));
  std::vector<SamplingGrid> grids;
  if (s.shared_steps.empty()) grids.push_back(sampling_grid(c, model.schedule()));
  for (int k : s.shared_steps) {
    if (k < 0 || k > n_steps) throw ConfigError("--shared-steps values must lie in [0, n_steps]");
    grids.push_back(build_grid_shared(model.schedule(), n_steps, k));
  }
  const double omega = c.number("omega");
  const double threshold = c.number("threshold");
  const auto seed = static_cast<std::uint64_t>(parse_int(c.get("seed")));
  const std::size_t repeats = std::max<std::size_t>(1, c.count("repeats"));
  const auto dir = model_dir(c);
  fs::create_directories(dir);

  for (const auto& grid : grids) {
    const int shared = scheme == Scheme::shared ? grid.shared_count() : 0;
    const double beta = scheme == Scheme::shared ? grid.sharing_ratio() : 0.0;
    SamplesFile file{c.config_hash(), ckpt.meta.data_hash, {}};
    std::string traces, cost;
    for (std::size_t r = 0; r < repeats; ++r) {
      const Rng master(seed, kSampleStream + r);
      const auto batch = run_batch(model, prompts, grid, threshold, GuidanceSchedule(omega), master, scheme);
      for (const auto& smp : batch.samples)
        file.samples.push_back({smp.prompt_id, smp.group_id, smp.x0, ckpt.meta.model_label,
                                to_string(scheme), beta, omega, seed, n_steps, shared, r});
      if (r == 0) {
        cost = cost_csv(c.config_hash(), to_string(scheme), beta, n_steps, shared, batch);
        if (s.trace)
          for (const auto& tr : batch.traces) traces += trace_json(tr);
      }
    }
    const auto path = samples_path(c, to_string(scheme), shared);
    write_samples(path, file);
    write_file(artifact_path(c, "cost", to_string(scheme), shared, ".csv"), cost);
    if (s.trace) write_file(artifact_path(c, "traces", to_string(scheme), shared, ".jsonl"), traces);
    if (written) written->push_back(path);
    out_of(o) << "wrote " << path << " (" << file.samples.size() << " samples, shared steps "
              << shared << "/" << n_steps << ")\n";
  }
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& c, const EvalOptions& e, const RunOptions& o) {
  const auto ddir = data_dir(c);
  const auto data = read_dataset(ddir);
  const auto world = read_world(join(ddir, "world.json"));
  const auto path = e.report.empty() ? report_path(c) : e.report;
  ReportFile report;
  if (fs::exists(path)) {
    report = read_report(path);
    if (!lineage_ok("report dataset", data.provenance.data_hash, report.data_hash, o)) return kExitUsage;
  }
  report.data_hash = data.provenance.data_hash;
  auto& out = out_of(o);

  if (e.self_check) {
    std::vector<SampleRecord> ref;
    for (const auto& rec : data.records) {
      SampleRecord s;
      s.prompt_id = rec.concept_id;
      s.group_id = rec.id;
      s.x0 = rec.x;
      s.model = "reference";
      s.scheme = "data";
      s.seed = data.provenance.world.seed;
      s.n_steps = static_cast<int>(c.count("n_steps"));
      ref.push_back(std::move(s));
    }
    auto row = evaluate(ref, &data, world);
    row.config_hash = data.provenance.data_hash;
    report.rows.push_back(row);
    out << "reference row: frechet " << format_double(*row.frechet) << '\n';
  }

  for (const auto& sp : e.samples) {
    const auto file = read_samples(sp);
    if (!lineage_ok("samples dataset (" + sp + ")", data.provenance.data_hash, file.data_hash, o))
      return kExitUsage;
    if (file.samples.empty()) {
      err_of(o) << "warning: " << sp << " holds no samples; skipped\n";
      continue;
    }
    std::set<std::size_t> unresolved;
    for (const auto& s : file.samples)
      if (s.prompt_id >= world.concepts.size()) unresolved.insert(s.prompt_id);
    if (!unresolved.empty()) {
      err_of(o) << "warning: " << sp << ": unresolved prompt ids";
      for (auto id : unresolved) err_of(o) << ' ' << id;
      err_of(o) << " (skipped)\n";
    }
    auto row = evaluate(file.samples, &data, world);
    row.config_hash = file.config_hash;
    report.rows.push_back(row);
    out << row.model << ' ' << row.scheme << " beta " << format_double(row.beta) << ": frechet "
        << (row.frechet ? format_double(*row.frechet) : "-") << ", alignment "
        << (row.alignment ? format_double(*row.alignment) : "-") << ", diversity "
        << (row.diversity ? format_double(*row.diversity) : "-") << ", saving "
        << format_double(row.cost_saving) << ", unresolved " << row.unresolved << '\n';
  }
  write_report(path, report);
  out << "report " << path << ": " << report.rows.size() << " rows\n";
  return kExitOk;
}

int cmd_plot(const ExperimentConfig& c, const PlotOptions& p, const RunOptions& o) {
  const auto rpath = p.report.empty() ? report_path(c) : p.report;
  const auto report = read_report(rpath);
  const auto dir = p.plot_dir.empty() ? join(c.get("out_dir"), "plots") : p.plot_dir;
  auto& out = out_of(o);
  if (report.rows.empty() && p.samples.empty()) {
    err_of(o) << "warning: " << rpath << " has no rows; nothing to plot\n";
    return kExitOk;
  }
  fs::create_directories(dir);

  struct Metric {
    const char* name;
    std::optional<double> (*get)(const MetricsReport&);
  };
  const Metric metrics[] = {
      {"frechet", [](const MetricsReport& r) { return r.frechet; }},
      {"alignment", [](const MetricsReport& r) { return r.alignment; }},
      {"diversity", [](const MetricsReport& r) { return r.diversity; }},
      {"cost_saving", [](const MetricsReport& r) { return std::optional<double>(r.cost_saving); }},
  };
  if (!report.rows.empty()) {
    for (const auto& m : metrics) {
      std::map<std::string, Series> by_series;
      for (const auto& r : report.rows) {
        const auto v = m.get(r);
        if (!v) continue;
        auto& s = by_series[r.model + " / " + r.scheme];
        s.name = r.model + " / " + r.scheme;
        s.points.emplace_back(r.beta, *v);
      }
      std::vector<Series> series;
      for (auto& [k, s] : by_series) {
        std::stable_sort(s.points.begin(), s.points.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        series.push_back(std::move(s));
      }
      const auto file = join(dir, std::string(m.name) + "_vs_beta.svg");
      write_file(file, line_chart(std::string(m.name) + " vs sharing ratio", "beta (shared fraction of steps)",
                                  m.name, series));
      out << "wrote " << file << '\n';
    }
  }

  if (!p.samples.empty()) {
    const auto samples = read_samples(p.samples);
    std::vector<ScatterPoint> pts;
    for (const auto& s : samples.samples)
      if (s.repeat == 0)
        pts.push_back({s.x0[0], s.x0.size() > 1 ? s.x0[1] : 0.0, s.prompt_id});
    std::vector<PlotPath> paths;
    if (!p.traces.empty()) {
      std::istringstream in(read_file(p.traces));
      std::string line;
      std::size_t drawn = 0;
      auto xy = [](const nlohmann::json& step) {
        return std::make_pair(step.at(1).get<double>(), step.size() > 2 ? step.at(2).get<double>() : 0.0);
      };
      while (std::getline(in, line) && drawn < 12) {
        if (trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const auto ids = j.at("prompt_ids").get<std::vector<std::size_t>>();
        if (ids.size() < 2) continue;
        PlotPath prefix;
        prefix.emphasised = true;
        for (const auto& st : j.at("shared_prefix")) prefix.points.push_back(xy(st));
        const auto& branches = j.at("branches");
        for (std::size_t b = 0; b < branches.size(); ++b) {
          PlotPath br;
          br.color = ids[b];
          for (const auto& st : branches[b]) br.points.push_back(xy(st));
          paths.push_back(std::move(br));
        }
        paths.push_back(std::move(prefix));
        ++drawn;
      }
    }
    const auto file = join(dir, "scatter.svg");
    write_file(file, scatter_plot("generated samples by prompt", pts, paths));
    out << "wrote " << file << '\n';
  }
  return kExitOk;
}

}  // namespace sage::cli
