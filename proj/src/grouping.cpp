#include "sage/grouping.hpp"

#include <algorithm>
#include <sstream>

#include "sage/error.hpp"
#include "sage/model.hpp"
#include "sage/text.hpp"

namespace sage {

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw ContractViolation("cosine: undefined for a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

SimilarityGraph::SimilarityGraph(std::size_t n, double tau_min, double tau_max)
    : n_(n), tau_min_(tau_min), tau_max_(tau_max), adj_(n * n, 0) {
  require(tau_min < tau_max, "SimilarityGraph: need tau_min < tau_max");
}

void SimilarityGraph::connect(std::size_t i, std::size_t j) {
  require(i < n_ && j < n_ && i != j, "SimilarityGraph::connect: bad edge");
  adj_[i * n_ + j] = 1;
  adj_[j * n_ + i] = 1;
}

std::size_t SimilarityGraph::edge_count() const {
  return static_cast<std::size_t>(std::count(adj_.begin(), adj_.end(), 1)) / 2;
}

std::vector<std::size_t> SimilarityGraph::neighbours(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n_; ++j)
    if (adjacent(i, j)) out.push_back(j);
  return out;
}

SimilarityGraph build_graph(std::span<const Vector> embeddings, double tau_min, double tau_max) {
  SimilarityGraph g(embeddings.size(), tau_min, tau_max);
  std::vector<Vector> unit;
  unit.reserve(embeddings.size());
  for (const auto& e : embeddings) {
    const double n = norm(e);
    if (n == 0.0) throw ContractViolation("build_graph: zero embedding");
    unit.push_back(scaled(e, 1.0 / n));
  }
  for (std::size_t i = 0; i < unit.size(); ++i)
    for (std::size_t j = i + 1; j < unit.size(); ++j) {
      const double c = std::clamp(dot(unit[i], unit[j]), -1.0, 1.0);
      if (c > tau_min && c < tau_max) g.connect(i, j);
    }
  return g;
}

namespace {

struct CliqueWalker {
  const CliqueOptions& opts;
  const std::function<bool(const Clique&)>& visit;
  std::vector<std::vector<std::size_t>> later;  // neighbours with larger id
  std::size_t visited = 0;
  bool stopped = false;
  Clique current;

  // Pre-order DFS over increasing candidates visits cliques in lexicographic
  // order: a prefix comes before all of its extensions.
  bool extend(const std::vector<std::size_t>& candidates) {
    for (std::size_t v : candidates) {
      current.push_back(v);
      if (current.size() >= opts.min_size) {
        if (visited == opts.cap || !visit(current)) {
          stopped = true;
          return false;
        }
        ++visited;
      }
      if (current.size() < opts.max_size) {
        std::vector<std::size_t> next;
        std::set_intersection(candidates.begin(), candidates.end(), later[v].begin(),
                              later[v].end(), std::back_inserter(next));
        if (!next.empty() && !extend(next)) return false;
      }
      current.pop_back();
    }
    return true;
  }
};

}  // namespace

std::size_t visit_cliques(const SimilarityGraph& graph, const CliqueOptions& opts,
                          const std::function<bool(const Clique&)>& visit) {
  require(opts.min_size >= 1 && opts.min_size <= opts.max_size,
          "enumerate_cliques: need 1 <= min_size <= max_size");
  CliqueWalker w{opts, visit, {}, 0, false, {}};
  const std::size_t n = graph.size();
  w.later.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (graph.adjacent(i, j)) w.later[i].push_back(j);
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  w.extend(all);
  return w.visited;
}

CliqueList enumerate_cliques(const SimilarityGraph& graph, const CliqueOptions& opts) {
  CliqueList out;
  CliqueOptions unbounded = opts;
  unbounded.cap = static_cast<std::size_t>(-1);
  visit_cliques(graph, unbounded, [&](const Clique& c) {
    if (out.cliques.size() == opts.cap) {
      out.truncated = true;
      return false;
    }
    out.cliques.push_back(c);
    return true;
  });
  return out;
}

std::vector<PromptGroup> greedy_partition(std::size_t n,
                                          const std::function<double(std::size_t, std::size_t)>& sim,
                                          double threshold) {
  require(threshold > -1.0 && threshold < 1.0, "greedy_partition: threshold must be in (-1, 1)");
  std::vector<PromptGroup> groups;
  for (std::size_t i = 0; i < n; ++i) {
    auto fits = [&](const PromptGroup& g) {
      return std::all_of(g.members.begin(), g.members.end(),
                         [&](std::size_t j) { return sim(i, j) >= threshold; });
    };
    auto it = std::find_if(groups.begin(), groups.end(), fits);
    if (it == groups.end()) groups.push_back({{i}, {}, std::nullopt});
    else it->members.push_back(i);
  }
  return groups;
}

std::vector<PromptGroup> greedy_partition(std::span<const Vector> embeddings, double threshold) {
  auto groups = greedy_partition(
      embeddings.size(),
      [&](std::size_t i, std::size_t j) { return cosine(embeddings[i], embeddings[j]); },
      threshold);
  for (auto& g : groups) {
    std::vector<Vector> members;
    for (std::size_t j : g.members) members.push_back(embeddings[j]);
    g.centroid = centroid(members);
  }
  return groups;
}

std::string format_groups(const GroupsHeader& header,
                          std::span<const std::vector<std::size_t>> groups) {
  std::ostringstream out;
  out << "# tau_min=" << format_double(header.tau_min)
      << " tau_max=" << format_double(header.tau_max)
      << " threshold=" << format_double(header.threshold) << " data_hash=" << header.data_hash
      << '\n';
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.size(); ++i) out << (i ? "," : "") << g[i];
    out << '\n';
  }
  return out.str();
}

void write_groups(const std::string& path, const GroupsHeader& header,
                  std::span<const std::vector<std::size_t>> groups) {
  write_file(path, format_groups(header, groups));
}

std::vector<std::vector<std::size_t>> read_groups(const std::string& path, GroupsHeader* header) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::vector<std::size_t>> groups;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (seen_header) continue;
      seen_header = true;
      if (header) {
        for (const auto& tok : split(trim(line.substr(1)), ' ')) {
          const auto eq = tok.find('=');
          if (eq == std::string::npos) continue;
          const auto key = tok.substr(0, eq);
          const auto val = tok.substr(eq + 1);
          if (key == "tau_min") header->tau_min = parse_double(val);
          else if (key == "tau_max") header->tau_max = parse_double(val);
          else if (key == "threshold") header->threshold = parse_double(val);
          else if (key == "data_hash") header->data_hash = val;
        }
      }
      continue;
    }
    std::vector<std::size_t> g;
    for (const auto& tok : split(line, ','))
      g.push_back(static_cast<std::size_t>(parse_int(tok)));
    groups.push_back(std::move(g));
  }
  if (!seen_header) throw IoError("groups file '" + path + "' has no header line");
  return groups;
}

}  // namespace sage
