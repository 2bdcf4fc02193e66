#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "sage/error.hpp"
#include "sage/metrics.hpp"
#include "sage/text.hpp"
#include "svg.hpp"

using namespace sage;
using namespace sage::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("sage_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

// Small world so the pipeline runs in well under a second.
ExperimentConfig small_config(const std::string& out) {
  ExperimentConfig c;
  c.set("n_meta", "20");
  c.set("target_groups", "200");
  c.set("hidden", "16,16");
  c.set("steps", "200");
  c.set("out_dir", out);
  return c;
}

struct Quiet {
  std::ostringstream out, err;
  RunOptions run(bool force = false) {
    RunOptions o;
    o.force = force;
    o.out = &out;
    o.err = &err;
    return o;
  }
};

std::string slurp(const std::string& p) { return read_file(p); }

// Tag balance and attribute quoting; enough to catch broken SVG output.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  if (s.rfind("<?xml", 0) == 0) i = s.find("?>") + 2;
  bool root_seen = false;
  while ((i = s.find('<', i)) != std::string::npos) {
    const auto close = s.find('>', i);
    if (close == std::string::npos) return false;
    std::string tag = s.substr(i + 1, close - i - 1);
    i = close + 1;
    if (std::count(tag.begin(), tag.end(), '"') % 2) return false;
    if (tag.empty()) return false;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.back() == '/';
    const auto name = tag.substr(0, tag.find_first_of(" /"));
    if (stack.empty() && root_seen) return false;
    root_seen = true;
    if (!self_closing) stack.push_back(name);
  }
  return root_seen && stack.empty();
}

}  // namespace

TEST_CASE("config parsing, overrides and hashes") {
  const auto c = ExperimentConfig::parse(
      "# comment\nseed = 7\nloss = \"ldm\"  # trailing\nomega=2.5\nhidden = \"32,32\"\n");
  CHECK(c.get("seed") == "7");
  CHECK(c.get("loss") == "ldm");
  CHECK(c.number("omega") == 2.5);
  CHECK(c.get("tau_min") == format_double(0.6));
  CHECK(ExperimentConfig::parse(c.canonical()).values() == c.values());

  CHECK_THROWS_AS(ExperimentConfig::parse("nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("seed 7\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("steps = many\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("soft_target_grad = maybe\n"), ConfigError);

  auto d = c;
  d.apply_override("omega=3");
  CHECK(d.number("omega") == 3.0);
  CHECK(d.config_hash() != c.config_hash());
  CHECK(d.train_hash() == c.train_hash());
  CHECK(d.data_hash() == c.data_hash());
  d.apply_override("lr=0.01");
  CHECK(d.train_hash() != c.train_hash());
  CHECK(d.data_hash() == c.data_hash());
  d.apply_override("tau_max=0.95");
  CHECK(d.data_hash() != c.data_hash());

  auto e = c;
  e.set("out_dir", "/elsewhere");
  CHECK(e.config_hash() == c.config_hash());
  // Equivalent spellings normalise to the same hash.
  auto f = c;
  f.set("omega", "2.50");
  CHECK(f.config_hash() == c.config_hash());
}

TEST_CASE("SAGE_SEED overrides the master seed") {
  ExperimentConfig c;
  ::setenv("SAGE_SEED", "99", 1);
  apply_environment(c);
  ::unsetenv("SAGE_SEED");
  CHECK(c.get("seed") == "99");
  CHECK(dataset_config(c).world.seed == 99);
}

TEST_CASE("derived configs") {
  ExperimentConfig c;
  const auto t = train_config(c);
  CHECK(t.loss.t_star_train == 700);
  CHECK(t.batch == 4);
  CHECK(t.steps == 20000);
  CHECK(denoiser_shape(c).hidden == std::vector<std::size_t>{64, 64});
  CHECK(sampling_grid(c, *noise_schedule(c)).shared_count() == 9);
  c.set("hidden", "0");
  CHECK_THROWS_AS(denoiser_shape(c), ConfigError);
  c.set("beta", "1.5");
  CHECK_THROWS_AS(sampling_grid(c, *noise_schedule(c)), ConfigError);
}

TEST_CASE("make-data is reproducible and honours the window") {
  TempDir a("data_a"), b("data_b");
  Quiet q;
  REQUIRE(cmd_make_data(small_config(a.str()), q.run()) == kExitOk);
  REQUIRE(cmd_make_data(small_config(b.str()), q.run()) == kExitOk);
  for (const char* f : {"world.json", "records.jsonl", "groups.txt"})
    CHECK(slurp((a.path / "data" / f).string()) == slurp((b.path / "data" / f).string()));
  CHECK(q.out.str().find("groups (sizes") != std::string::npos);

  auto wide = small_config(a.str());
  wide.set("target_groups", "100000000");
  auto narrow = wide;
  narrow.set("tau_min", "0.95");
  narrow.set("tau_max", "0.99");
  narrow.set("out_dir", b.str());
  REQUIRE(cmd_make_data(wide, q.run()) == kExitOk);
  REQUIRE(cmd_make_data(narrow, q.run()) == kExitOk);
  const auto dw = read_dataset((a.path / "data").string());
  const auto dn = read_dataset((b.path / "data").string());
  MESSAGE("groups wide " << dw.groups.size() << " narrow " << dn.groups.size());
  CHECK(dn.groups.size() < dw.groups.size());
  const auto h = group_size_histogram(dw);
  CHECK(h[0] + h[1] == 0);
  CHECK(h.size() <= 6);

  auto bad = small_config(a.str());
  bad.set("tau_min", "0.999");
  bad.set("tau_max", "1");
  CHECK_THROWS_AS(cmd_make_data(bad, q.run()), ConfigError);
}

TEST_CASE("train, sample, eval and plot") {
  TempDir dir("pipeline");
  Quiet q;
  auto c = small_config(dir.str());
  REQUIRE(cmd_make_data(c, q.run()) == kExitOk);

  SUBCASE("zero steps keeps the initialisation") {
    c.set("steps", "0");
    REQUIRE(cmd_train(c, q.run()) == kExitOk);
    const auto ck = load_checkpoint(checkpoint_path(c));
    Rng init(1, kInitStream);
    const auto fresh = Denoiser::create(denoiser_shape(c), noise_schedule(c), init);
    CHECK(ck.denoiser.params() == fresh.params());
    CHECK(ck.meta.steps == 0);
    CHECK(ck.meta.config_hash == c.train_hash());
  }

  SUBCASE("divergence exits 3 and keeps finite parameters") {
    c.set("lr", "1e300");
    c.set("steps", "50");
    CHECK(cmd_train(c, q.run()) == kExitNumerical);
    const auto ck = load_checkpoint(checkpoint_path(c));
    for (const auto& l : ck.denoiser.params().layers)
      for (double v : l.weight.values()) CHECK(std::isfinite(v));
    CHECK(q.err.str().find("diverged") != std::string::npos);
  }

  SUBCASE("full chain") {
    REQUIRE(cmd_train(c, q.run()) == kExitOk);
    CHECK(fs::exists(fs::path(model_dir(c)) / "loss.csv"));

    std::vector<std::string> files;
    REQUIRE(cmd_sample(c, {}, q.run(), &files) == kExitOk);
    REQUIRE(files.size() == 1);
    const auto first = slurp(files[0]);
    REQUIRE(cmd_sample(c, {}, q.run()) == kExitOk);
    CHECK(slurp(files[0]) == first);

    auto ind = c;
    ind.set("scheme", "independent");
    std::vector<std::string> ind_files;
    REQUIRE(cmd_sample(ind, {}, q.run(), &ind_files) == kExitOk);
    const auto cost = slurp(artifact_path(ind, "cost", "independent", 0, ".csv"));
    CHECK(cost.find("independent,0,30,0,") != std::string::npos);

    // Lineage: a checkpoint trained under another config needs --force.
    auto other = c;
    other.set("lr", "0.01");
    CHECK(cmd_sample(other, {}, q.run()) == kExitUsage);
    CHECK(cmd_sample(other, {}, q.run(true)) == kExitOk);
    CHECK(q.err.str().find("hash mismatch") != std::string::npos);

    // beta = 1: every group collapses to one point.
    SampleOptions full;
    full.shared_steps = {30};
    full.trace = true;
    std::vector<std::string> full_files;
    REQUIRE(cmd_sample(c, full, q.run(), &full_files) == kExitOk);
    const auto collapsed = read_samples(full_files[0]);
    std::map<std::size_t, Vector> first_in_group;
    for (const auto& s : collapsed.samples) {
      auto [it, fresh] = first_in_group.emplace(s.group_id, s.x0);
      if (!fresh) CHECK(s.x0 == it->second);
    }

    EvalOptions e;
    e.self_check = true;
    e.samples = {files[0], ind_files[0]};
    REQUIRE(cmd_eval(c, e, q.run()) == kExitOk);
    auto report = read_report(report_path(c));
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].model == "reference");
    CHECK(*report.rows[0].frechet == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(report.rows[2].cost_saving == 0.0);

    // A report from another dataset lineage is not appended to silently.
    ReportFile foreign = report;
    foreign.data_hash = "0000000000000000";
    write_report(report_path(c), foreign);
    EvalOptions again;
    again.samples = {files[0]};
    CHECK(cmd_eval(c, again, q.run()) == kExitUsage);
    CHECK(cmd_eval(c, again, q.run(true)) == kExitOk);

    PlotOptions p;
    p.samples = full_files[0];
    p.traces = artifact_path(c, "traces", "shared", 30, ".jsonl");
    REQUIRE(cmd_plot(c, p, q.run()) == kExitOk);
    for (const auto& entry : fs::directory_iterator(fs::path(dir.str()) / "plots"))
      CHECK_MESSAGE(well_formed_xml(slurp(entry.path().string())), entry.path().string());
  }
}

TEST_CASE("three models by three betas give nine rows") {
  TempDir dir("nine");
  Quiet q;
  auto c = small_config(dir.str());
  c.set("steps", "50");
  REQUIRE(cmd_make_data(c, q.run()) == kExitOk);
  EvalOptions e;
  for (const char* label : {"base", "ldm", "sage"}) {
    auto m = c;
    m.set("model_label", label);
    m.set("loss", std::string(label) == "sage" ? "sage" : "ldm");
    if (std::string(label) == "base") m.set("steps", "0");
    REQUIRE(cmd_train(m, q.run()) == kExitOk);
    SampleOptions s;
    s.shared_steps = {6, 9, 12};
    std::vector<std::string> files;
    REQUIRE(cmd_sample(m, s, q.run(), &files) == kExitOk);
    e.samples.insert(e.samples.end(), files.begin(), files.end());
  }
  REQUIRE(cmd_eval(c, e, q.run()) == kExitOk);
  const auto report = read_report(report_path(c));
  REQUIRE(report.rows.size() == 9);
  CHECK(report.rows[0].model == "base");
  CHECK(report.rows[8].model == "sage");
  CHECK(report.rows[4].beta == doctest::Approx(0.3));
}

TEST_CASE("plot edge cases") {
  TempDir dir("plot");
  Quiet q;
  auto c = small_config(dir.str());
  ReportFile empty;
  empty.data_hash = "x";
  write_report(report_path(c), empty);
  CHECK(cmd_plot(c, {}, q.run()) == kExitOk);
  CHECK(q.err.str().find("nothing to plot") != std::string::npos);
  CHECK_FALSE(fs::exists(fs::path(dir.str()) / "plots"));

  ReportFile one = empty;
  MetricsReport r;
  r.model = "sage";
  r.scheme = "shared";
  r.beta = 0.3;
  r.frechet = 0.5;
  r.alignment = 0.2;
  r.diversity = 1.0;
  r.cost_saving = 0.19;
  one.rows = {r};
  write_report(report_path(c), one);
  REQUIRE(cmd_plot(c, {}, q.run()) == kExitOk);
  const auto svg = slurp((fs::path(dir.str()) / "plots" / "frechet_vs_beta.svg").string());
  CHECK(well_formed_xml(svg));
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(xml_escape("a<b&\"c\"") == "a&lt;b&amp;&quot;c&quot;");
}
