#include "sage/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <sstream>

#include "json.hpp"
#include "sage/error.hpp"
#include "sage/text.hpp"

namespace sage {

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  return e;
}

// Eigenvalues of a symmetric matrix with the clamp rule applied.
Eigen::VectorXd clamped_eigenvalues(const Eigen::MatrixXd& s, Eigen::MatrixXd* vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-10) throw NumericalError("covariance is not positive semidefinite");
    ev(i) = std::max(ev(i), 0.0);
  }
  if (vectors) *vectors = es.eigenvectors();
  return ev;
}

}  // namespace

GaussianFit fit_gaussian(std::span<const Vector> points) {
  require(!points.empty(), "fit_gaussian: no points");
  const std::size_t d = points.front().size();
  GaussianFit f{mean_of(points), Matrix(d, d)};
  if (points.size() < 2) return f;
  for (const auto& p : points)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        f.covariance(i, j) += (p[i] - f.mean[i]) * (p[j] - f.mean[j]);
  const double inv = 1.0 / static_cast<double>(points.size() - 1);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) f.covariance(i, j) *= inv;
  return f;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  require(a.mean.size() == b.mean.size() && a.covariance.rows() == a.mean.size() &&
              b.covariance.rows() == b.mean.size(),
          "frechet_distance: dimension mismatch");
  const Eigen::MatrixXd sa = to_eigen(a.covariance), sb = to_eigen(b.covariance);
  Eigen::MatrixXd va;
  const Eigen::VectorXd la = clamped_eigenvalues(sa, &va);
  const Eigen::MatrixXd root_a = va * la.cwiseSqrt().asDiagonal() * va.transpose();
  const Eigen::VectorXd lm = clamped_eigenvalues(root_a * sb * root_a, nullptr);
  const double cross = lm.cwiseSqrt().sum();
  const double mean_term = squared_distance(a.mean, b.mean);
  const double value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

double alignment_score(std::span<const Vector> samples, const Concept& target) {
  require(!samples.empty(), "alignment_score: no samples");
  double total = 0.0;
  for (const auto& x : samples) {
    const double d2 = squared_distance(x, target.mean);
    if (target.spread == 0.0) total += d2 == 0.0 ? 1.0 : 0.0;
    else total += std::exp(-d2 / (2.0 * target.spread * target.spread));
  }
  return total / static_cast<double>(samples.size());
}

std::optional<double> diversity(std::span<const std::vector<Vector>> groups) {
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    double pair_sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = i + 1; j < g.size(); ++j)
        pair_sum += std::sqrt(squared_distance(g[i], g[j]));
    const double n = static_cast<double>(g.size());
    sum += 2.0 * pair_sum / (n * (n - 1.0));
    ++counted;
  }
  if (counted == 0) return std::nullopt;
  return sum / static_cast<double>(counted);
}

std::string format_samples(const SamplesFile& f) {
  std::ostringstream out;
  out << "{\"config_hash\": \"" << f.config_hash << "\", \"data_hash\": \"" << f.data_hash
      << "\", \"count\": " << f.samples.size() << "}\n";
  for (const auto& s : f.samples) {
    out << "{\"prompt_id\": " << s.prompt_id << ", \"group_id\": " << s.group_id << ", \"x0\": [";
    for (std::size_t i = 0; i < s.x0.size(); ++i) out << (i ? "," : "") << format_double(s.x0[i]);
    out << "], \"model\": \"" << s.model << "\", \"scheme\": \"" << s.scheme
        << "\", \"beta\": " << format_double(s.beta) << ", \"omega\": " << format_double(s.omega)
        << ", \"seed\": " << s.seed << ", \"n_steps\": " << s.n_steps
        << ", \"shared_steps\": " << s.shared_steps << ", \"repeat\": " << s.repeat << "}\n";
  }
  return out.str();
}

void write_samples(const std::string& path, const SamplesFile& f) {
  write_file(path, format_samples(f));
}

SamplesFile read_samples(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  SamplesFile f;
  bool header = true;
  try {
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (header) {
        f.config_hash = j.at("config_hash").get<std::string>();
        f.data_hash = j.at("data_hash").get<std::string>();
        header = false;
        continue;
      }
      SampleRecord s;
      s.prompt_id = j.at("prompt_id").get<std::size_t>();
      s.group_id = j.at("group_id").get<std::size_t>();
      s.x0 = j.at("x0").get<std::vector<double>>();
      s.model = j.at("model").get<std::string>();
      s.scheme = j.at("scheme").get<std::string>();
      s.beta = j.at("beta").get<double>();
      s.omega = j.at("omega").get<double>();
      s.seed = j.at("seed").get<std::uint64_t>();
      s.n_steps = j.at("n_steps").get<int>();
      s.shared_steps = j.at("shared_steps").get<int>();
      s.repeat = j.at("repeat").get<std::size_t>();
      f.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  if (header) throw IoError(path + ": empty samples file");
  return f;
}

MetricsReport evaluate(std::span<const SampleRecord> samples, const GroupedDataset* reference,
                       const OracleWorld& world) {
  require(!samples.empty(), "evaluate: no samples");
  MetricsReport r;
  const auto& first = samples.front();
  r.model = first.model;
  r.scheme = first.scheme;
  r.beta = first.beta;
  r.omega = first.omega;
  r.seed = first.seed;
  r.tau_min = world.params.tau_min;
  r.tau_max = world.params.tau_max;

  std::vector<Vector> generated;
  std::map<std::size_t, std::vector<Vector>> by_prompt;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<Vector>> by_group;
  for (const auto& s : samples) {
    if (s.prompt_id >= world.concepts.size()) {
      ++r.unresolved;
      continue;
    }
    generated.push_back(s.x0);
    by_prompt[s.prompt_id].push_back(s.x0);
    by_group[{s.repeat, s.group_id}].push_back(s.x0);
  }
  if (generated.empty()) return r;

  if (reference && !reference->records.empty()) {
    std::vector<Vector> ref;
    for (const auto& rec : reference->records) ref.push_back(rec.x);
    r.frechet = frechet_distance(fit_gaussian(generated), fit_gaussian(ref));
  }
  double align = 0.0;
  for (const auto& [pid, xs] : by_prompt) align += alignment_score(xs, world.concept_at(pid));
  r.alignment = align / static_cast<double>(by_prompt.size());

  std::vector<std::vector<Vector>> groups;
  for (auto& [key, xs] : by_group) groups.push_back(xs);
  // A batch of singletons (or beta = 1) has no within-group spread to report.
  r.diversity = diversity(groups).value_or(0.0);

  // Cost from group sizes of the first repeat.
  CostReport cost;
  const std::size_t rep0 = by_group.begin()->first.first;
  std::map<std::size_t, std::size_t> sizes;
  std::map<std::size_t, int> shared;
  for (const auto& s : samples)
    if (s.repeat == rep0 && s.prompt_id < world.concepts.size()) {
      ++sizes[s.group_id];
      shared[s.group_id] = s.scheme == "shared" ? s.shared_steps : 0;
    }
  for (const auto& [gid, n] : sizes)
    cost.add(n, static_cast<std::size_t>(first.n_steps), static_cast<std::size_t>(shared[gid]));
  r.cost_saving = cost.saving_ratio;
  return r;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }

std::optional<double> parse_opt(const std::string& s) {
  if (trim(s).empty()) return std::nullopt;
  return parse_double(s);
}

}  // namespace

std::string format_report(const ReportFile& r) {
  std::ostringstream out;
  out << "# data_hash=" << r.data_hash << '\n' << kReportHeader << '\n';
  for (const auto& m : r.rows) {
    out << "# echo omega=" << format_double(m.omega) << " tau_min=" << format_double(m.tau_min)
        << " tau_max=" << format_double(m.tau_max) << " seed=" << m.seed
        << " unresolved=" << m.unresolved << " config_hash=" << m.config_hash << '\n';
    out << m.model << ',' << m.scheme << ',' << format_double(m.beta) << ',' << opt(m.frechet)
        << ',' << opt(m.alignment) << ',' << opt(m.diversity) << ','
        << format_double(m.cost_saving) << '\n';
  }
  return out.str();
}

ReportFile parse_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  ReportFile r;
  MetricsReport pending;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (line.rfind("# data_hash=", 0) == 0) {
      r.data_hash = trim(line.substr(12));
      continue;
    }
    if (line.rfind("# echo ", 0) == 0) {
      for (const auto& tok : split(trim(line.substr(7)), ' ')) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "omega") pending.omega = parse_double(val);
        else if (key == "tau_min") pending.tau_min = parse_double(val);
        else if (key == "tau_max") pending.tau_max = parse_double(val);
        else if (key == "seed") pending.seed = static_cast<std::uint64_t>(parse_int(val));
        else if (key == "unresolved") pending.unresolved = static_cast<std::size_t>(parse_int(val));
        else if (key == "config_hash") pending.config_hash = val;
      }
      continue;
    }
    if (line[0] == '#') continue;
    if (!seen_header) {
      if (trim(line) != kReportHeader) throw IoError("report: unexpected header '" + line + "'");
      seen_header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 7) throw IoError("report: row needs 7 fields: '" + line + "'");
    pending.model = f[0];
    pending.scheme = f[1];
    pending.beta = parse_double(f[2]);
    pending.frechet = parse_opt(f[3]);
    pending.alignment = parse_opt(f[4]);
    pending.diversity = parse_opt(f[5]);
    pending.cost_saving = parse_double(f[6]);
    r.rows.push_back(pending);
    pending = MetricsReport{};
  }
  if (!seen_header) throw IoError("report: missing header line");
  return r;
}

ReportFile read_report(const std::string& path) { return parse_report(read_file(path)); }

void write_report(const std::string& path, const ReportFile& r) {
  write_file(path, format_report(r));
}

}  // namespace sage
