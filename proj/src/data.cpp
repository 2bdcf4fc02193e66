#include "sage/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sage/error.hpp"
#include "sage/grouping.hpp"
#include "sage/text.hpp"

namespace sage {

namespace {

constexpr std::uint64_t kWorldStream = 1;
constexpr std::uint64_t kRecordStream = 2;

Vector unit_gaussian(Rng& rng, std::size_t n) {
  for (;;) {
    auto v = gaussian(rng, n);
    const double len = norm(v);
    if (len > 1e-12) return scaled(v, 1.0 / len);
  }
}

// Gram-Schmidt on Gaussian draws; k <= n orthonormal vectors of length n.
std::vector<Vector> orthonormal_set(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<Vector> out;
  while (out.size() < k) {
    auto v = gaussian(rng, n);
    for (const auto& u : out) axpy(-dot(v, u), u, v);
    const double len = norm(v);
    if (len > 1e-8) out.push_back(scaled(v, 1.0 / len));
  }
  return out;
}

void validate(const WorldParams& p) {
  if (p.n_meta < 1 || p.children < 1) throw ConfigError("world: n_meta and children must be >= 1");
  if (p.data_dim < 1) throw ConfigError("world: data_dim must be >= 1");
  if (!(p.tau_min > -1.0 && p.tau_min < p.tau_max && p.tau_max <= 1.0))
    throw ConfigError("world: need -1 < tau_min < tau_max <= 1");
  if (p.spread < 0.0 || p.radius <= 0.0) throw ConfigError("world: bad spread or radius");
  if (!(p.location_weight > 0.0 && p.location_weight <= 1.0))
    throw ConfigError("world: location_weight must be in (0, 1]");
  if (p.children > p.perturb_dims)
    throw ConfigError("world: children exceed perturbation dimensions");
  if (p.embed_dim < p.noise_dims + p.perturb_dims + 2)
    throw ConfigError("world: embed_dim too small for the layout");
  const std::size_t loc = p.embed_dim - p.noise_dims - p.perturb_dims;
  if (loc % 2 != 0) throw ConfigError("world: location block must have even width");
  if (p.noise_dims == 0 && p.location_weight < 1.0)
    throw ConfigError("world: location_weight < 1 needs noise dimensions");
  if (p.max_retries < 1) throw ConfigError("world: max_retries must be >= 1");
}

// Child angle theta with cos^2(theta) at the window midpoint, floored at min_angle.
double child_angle(const WorldParams& p) {
  const double target = std::clamp(0.5 * (p.tau_min + p.tau_max), 0.0, 1.0);
  double lo = 0.0, hi = std::numbers::pi / 2;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double c = std::cos(mid);
    (c * c > target ? lo : hi) = mid;
  }
  return std::max(0.5 * (lo + hi), p.min_angle);
}

// Unit-norm location features: for n directions, cos and sin of freq * <pos, dir>.
Vector location_features(const Vector& pos, std::size_t dirs, double freq) {
  Vector f(2 * dirs, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dirs));
  for (std::size_t k = 0; k < dirs; ++k) {
    const double ang = std::numbers::pi * static_cast<double>(k) / static_cast<double>(dirs);
    double proj = pos[0] * std::cos(ang);
    if (pos.size() > 1) proj += pos[1] * std::sin(ang);
    f[k] = scale * std::cos(freq * proj);
    f[dirs + k] = scale * std::sin(freq * proj);
  }
  return f;
}

Vector point_in_disk(Rng& rng, std::size_t d, double radius) {
  for (;;) {
    Vector v(d);
    for (auto& x : v) x = radius * (2.0 * rng.uniform() - 1.0);
    if (norm(v) < radius) return v;
  }
}

WorldStats measure(const std::vector<Concept>& cs, const WorldParams& p) {
  std::size_t sib = 0, sib_in = 0, cross = 0, cross_below = 0;
  for (std::size_t i = 0; i < cs.size(); ++i)
    for (std::size_t j = i + 1; j < cs.size(); ++j) {
      const double c = dot(cs[i].embedding, cs[j].embedding);
      if (cs[i].meta == cs[j].meta) {
        ++sib;
        sib_in += (c > p.tau_min && c < p.tau_max);
      } else {
        ++cross;
        cross_below += (c < p.tau_min);
      }
    }
  WorldStats s;
  s.sibling_in_window = sib ? static_cast<double>(sib_in) / static_cast<double>(sib) : 1.0;
  s.cross_below_min = cross ? static_cast<double>(cross_below) / static_cast<double>(cross) : 1.0;
  return s;
}

std::vector<Concept> draw_concepts(Rng& rng, const WorldParams& p, double theta) {
  const std::size_t loc = p.embed_dim - p.noise_dims - p.perturb_dims;
  const std::size_t noise0 = loc, pert0 = loc + p.noise_dims;
  const double a = p.location_weight;
  std::vector<Concept> out;
  out.reserve(p.n_meta * p.children);
  for (std::size_t m = 0; m < p.n_meta; ++m) {
    const Vector pos = point_in_disk(rng, p.data_dim, p.radius);
    Vector meta(p.embed_dim, 0.0);
    const auto feat = location_features(pos, loc / 2, p.location_freq);
    for (std::size_t k = 0; k < loc; ++k) meta[k] = std::sqrt(a) * feat[k];
    if (p.noise_dims > 0) {
      const auto n = unit_gaussian(rng, p.noise_dims);
      for (std::size_t k = 0; k < p.noise_dims; ++k) meta[noise0 + k] = std::sqrt(1.0 - a) * n[k];
    }
    // Offset direction is the first data_dim perturbation coordinates of u,
    // normalized; sets where a child would have an ill-defined direction are redrawn.
    std::vector<Vector> dirs;
    for (;;) {
      dirs = orthonormal_set(rng, p.perturb_dims, p.children);
      const bool ok = std::all_of(dirs.begin(), dirs.end(), [&](const Vector& u) {
        return norm(std::span<const double>(u).first(std::min(p.data_dim, p.perturb_dims))) >= 0.35;
      });
      if (ok) break;
    }
    for (std::size_t c = 0; c < p.children; ++c) {
      Vector e = scaled(meta, std::cos(theta));
      for (std::size_t k = 0; k < p.perturb_dims; ++k) e[pert0 + k] = std::sin(theta) * dirs[c][k];
      e = scaled(e, 1.0 / norm(e));
      Vector dir(p.data_dim, 0.0);
      for (std::size_t k = 0; k < std::min(p.data_dim, p.perturb_dims); ++k) dir[k] = dirs[c][k];
      const double shift = p.offset_scale * norm(subtract(e, meta));
      Vector mean = pos;
      axpy(shift / norm(dir), dir, mean);
      out.push_back({m * p.children + c, m, std::move(e), std::move(mean), p.spread});
    }
  }
  return out;
}

std::string jnum(double v) { return format_double(v); }

std::string jvec(const Vector& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s + "]";
}

Vector to_vector(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

WorldParams params_from_json(const nlohmann::json& j) {
  WorldParams p;
  p.seed = j.at("seed").get<std::uint64_t>();
  p.n_meta = j.at("n_meta").get<std::size_t>();
  p.children = j.at("children").get<std::size_t>();
  p.embed_dim = j.at("embed_dim").get<std::size_t>();
  p.data_dim = j.at("data_dim").get<std::size_t>();
  p.tau_min = j.at("tau_min").get<double>();
  p.tau_max = j.at("tau_max").get<double>();
  p.spread = j.at("spread").get<double>();
  p.radius = j.at("radius").get<double>();
  p.location_weight = j.at("location_weight").get<double>();
  p.location_freq = j.at("location_freq").get<double>();
  p.noise_dims = j.at("noise_dims").get<std::size_t>();
  p.perturb_dims = j.at("perturb_dims").get<std::size_t>();
  p.offset_scale = j.at("offset_scale").get<double>();
  p.min_angle = j.at("min_angle").get<double>();
  p.max_retries = j.at("max_retries").get<std::size_t>();
  return p;
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(what + ": " + e.what());
  }
}

}  // namespace

OracleWorld make_world(const WorldParams& params) {
  Rng rng(params.seed, kWorldStream);
  return make_world(rng, params);
}

OracleWorld make_world(Rng& rng, const WorldParams& params) {
  validate(params);
  const double theta = child_angle(params);
  WorldStats best;
  for (std::size_t attempt = 1; attempt <= params.max_retries; ++attempt) {
    auto concepts = draw_concepts(rng, params, theta);
    auto stats = measure(concepts, params);
    stats.child_angle = theta;
    stats.attempts = attempt;
    if (stats.sibling_in_window >= 0.95 && stats.cross_below_min >= 0.95)
      return {params, std::move(concepts), stats};
    best = stats;
  }
  std::ostringstream msg;
  msg << "make_world: window (" << params.tau_min << ", " << params.tau_max
      << ") infeasible after " << params.max_retries << " attempts (siblings in window "
      << best.sibling_in_window << ", cross-meta below tau_min " << best.cross_below_min << ")";
  throw ConfigError(msg.str());
}

std::vector<Record> sample_records(Rng& rng, const OracleWorld& world, std::size_t per_concept) {
  require(per_concept >= 1, "sample_records: per_concept must be >= 1");
  std::vector<Record> out;
  out.reserve(world.concepts.size() * per_concept);
  for (const auto& c : world.concepts)
    for (std::size_t k = 0; k < per_concept; ++k) {
      Vector x = c.mean;
      axpy(c.spread, gaussian(rng, c.mean.size()), x);
      out.push_back({out.size(), c.id, c.embedding, std::move(x)});
    }
  return out;
}

namespace {

// Positions i * count / target for i < target (all of them if count <= target).
struct StridePicker {
  std::size_t count = 0;
  std::size_t target = 0;
  std::size_t seen = 0;
  std::size_t next = 0;  // index of the next pick among the `target`

  bool take() {
    const std::size_t idx = seen++;
    if (count <= target) return true;
    if (next < target && idx == next * count / target) {
      ++next;
      return true;
    }
    return false;
  }
};

}  // namespace

GroupedDataset build_grouped_dataset(const std::vector<Record>& records, double tau_min,
                                     double tau_max, std::size_t target_groups,
                                     const GroupingOptions& opts) {
  require(!records.empty(), "build_grouped_dataset: no records");
  std::vector<Vector> emb;
  emb.reserve(records.size());
  for (const auto& r : records) emb.push_back(r.embedding);
  const auto graph = build_graph(emb, tau_min, tau_max);
  CliqueOptions copts;
  copts.cap = opts.clique_cap;

  // Pass 1 counts per size, pass 2 strides over the canonical order.
  std::vector<std::size_t> per_size(copts.max_size + 1, 0);
  const std::size_t total = visit_cliques(graph, copts, [&](const Clique& c) {
    ++per_size[c.size()];
    return true;
  });

  std::vector<StridePicker> pickers(copts.max_size + 1);
  if (opts.size_weights.empty()) {
    for (auto& p : pickers) p = {total, target_groups};
  } else {
    require(opts.size_weights.size() == 4, "size_weights needs entries for sizes 2..5");
    const double wsum = std::accumulate(opts.size_weights.begin(), opts.size_weights.end(), 0.0);
    require(wsum > 0.0, "size_weights must not all be zero");
    for (std::size_t size = 2; size <= 5; ++size) {
      const auto quota = static_cast<std::size_t>(
          std::llround(static_cast<double>(target_groups) * opts.size_weights[size - 2] / wsum));
      pickers[size] = {per_size[size], quota};
    }
  }
  const bool shared = opts.size_weights.empty();

  GroupedDataset ds;
  ds.records = records;
  visit_cliques(graph, copts, [&](const Clique& c) {
    auto& p = shared ? pickers[0] : pickers[c.size()];
    if (p.take()) {
      std::vector<std::size_t> ids;
      for (std::size_t v : c) ids.push_back(records[v].id);
      ds.groups.push_back(std::move(ids));
    }
    return true;
  });
  ds.provenance.tau_min = tau_min;
  ds.provenance.tau_max = tau_max;
  ds.provenance.target_groups = target_groups;
  ds.provenance.available_cliques = total;
  ds.provenance.cliques_truncated = total == copts.cap;
  ds.provenance.fewer_than_target = ds.groups.size() < target_groups;
  return ds;
}

std::string world_params_text(const WorldParams& p) {
  std::ostringstream s;
  s << "seed=" << p.seed << " n_meta=" << p.n_meta << " children=" << p.children
    << " embed_dim=" << p.embed_dim << " data_dim=" << p.data_dim
    << " tau_min=" << format_double(p.tau_min) << " tau_max=" << format_double(p.tau_max)
    << " spread=" << format_double(p.spread) << " radius=" << format_double(p.radius)
    << " location_weight=" << format_double(p.location_weight)
    << " location_freq=" << format_double(p.location_freq) << " noise_dims=" << p.noise_dims
    << " perturb_dims=" << p.perturb_dims << " offset_scale=" << format_double(p.offset_scale)
    << " min_angle=" << format_double(p.min_angle) << " max_retries=" << p.max_retries;
  return s.str();
}

std::string data_fingerprint(const DatasetConfig& cfg) {
  std::ostringstream s;
  s << world_params_text(cfg.world) << " per_concept=" << cfg.per_concept
    << " target_groups=" << cfg.target_groups << " clique_cap=" << cfg.grouping.clique_cap
    << " size_weights=" << format_vector(cfg.grouping.size_weights);
  return fnv1a_hex(s.str());
}

GeneratedData generate_dataset(const DatasetConfig& cfg) {
  auto world = make_world(cfg.world);
  Rng rng(cfg.world.seed, kRecordStream);
  auto records = sample_records(rng, world, cfg.per_concept);
  auto ds = build_grouped_dataset(records, cfg.world.tau_min, cfg.world.tau_max,
                                  cfg.target_groups, cfg.grouping);
  ds.provenance.world = cfg.world;
  ds.provenance.per_concept = cfg.per_concept;
  ds.provenance.data_hash = data_fingerprint(cfg);
  return {std::move(world), std::move(ds)};
}

std::vector<std::size_t> group_size_histogram(const GroupedDataset& ds) {
  std::vector<std::size_t> h(6, 0);
  for (const auto& g : ds.groups) {
    if (g.size() >= h.size()) h.resize(g.size() + 1, 0);
    ++h[g.size()];
  }
  return h;
}

double embedding_mean_coupling(const OracleWorld& world) {
  const auto& cs = world.concepts;
  std::vector<double> sim, neg_dist;
  for (std::size_t i = 0; i < cs.size(); ++i)
    for (std::size_t j = i + 1; j < cs.size(); ++j) {
      sim.push_back(cosine(cs[i].embedding, cs[j].embedding));
      neg_dist.push_back(-std::sqrt(squared_distance(cs[i].mean, cs[j].mean)));
    }
  if (sim.size() < 2) return 0.0;
  // Average ranks over ties, then Pearson on ranks.
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(sim), rb = ranks(neg_dist);
  const double n = static_cast<double>(ra.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::string world_to_json(const OracleWorld& world, const DatasetProvenance& prov) {
  const auto& p = world.params;
  std::ostringstream s;
  s << "{\n  \"format\": \"sage-world-1\",\n  \"params\": {"
    << "\"seed\": " << p.seed << ", \"n_meta\": " << p.n_meta << ", \"children\": " << p.children
    << ", \"embed_dim\": " << p.embed_dim << ", \"data_dim\": " << p.data_dim
    << ", \"tau_min\": " << jnum(p.tau_min) << ", \"tau_max\": " << jnum(p.tau_max)
    << ", \"spread\": " << jnum(p.spread) << ", \"radius\": " << jnum(p.radius)
    << ", \"location_weight\": " << jnum(p.location_weight)
    << ", \"location_freq\": " << jnum(p.location_freq) << ", \"noise_dims\": " << p.noise_dims
    << ", \"perturb_dims\": " << p.perturb_dims << ", \"offset_scale\": " << jnum(p.offset_scale)
    << ", \"min_angle\": " << jnum(p.min_angle) << ", \"max_retries\": " << p.max_retries
    << "},\n  \"stats\": {\"sibling_in_window\": " << jnum(world.stats.sibling_in_window)
    << ", \"cross_below_min\": " << jnum(world.stats.cross_below_min)
    << ", \"child_angle\": " << jnum(world.stats.child_angle)
    << ", \"attempts\": " << world.stats.attempts << "},\n  \"dataset\": {"
    << "\"tau_min\": " << jnum(prov.tau_min) << ", \"tau_max\": " << jnum(prov.tau_max)
    << ", \"per_concept\": " << prov.per_concept << ", \"target_groups\": " << prov.target_groups
    << ", \"available_cliques\": " << prov.available_cliques
    << ", \"cliques_truncated\": " << (prov.cliques_truncated ? "true" : "false")
    << ", \"fewer_than_target\": " << (prov.fewer_than_target ? "true" : "false")
    << ", \"data_hash\": \"" << prov.data_hash << "\"},\n  \"concepts\": [\n";
  for (std::size_t i = 0; i < world.concepts.size(); ++i) {
    const auto& c = world.concepts[i];
    s << "    {\"id\": " << c.id << ", \"meta\": " << c.meta << ", \"spread\": " << jnum(c.spread)
      << ", \"mean\": " << jvec(c.mean) << ", \"embedding\": " << jvec(c.embedding) << "}"
      << (i + 1 < world.concepts.size() ? ",\n" : "\n");
  }
  s << "  ]\n}\n";
  return s.str();
}

std::string records_to_jsonl(const std::vector<Record>& records) {
  std::string out;
  for (const auto& r : records)
    out += "{\"id\": " + std::to_string(r.id) + ", \"concept\": " + std::to_string(r.concept_id) +
           ", \"x\": " + jvec(r.x) + ", \"embedding\": " + jvec(r.embedding) + "}\n";
  return out;
}

void write_dataset(const std::string& dir, const OracleWorld& world, const GroupedDataset& ds) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  write_file((d / "world.json").string(), world_to_json(world, ds.provenance));
  write_file((d / "records.jsonl").string(), records_to_jsonl(ds.records));
  GroupsHeader h{ds.provenance.tau_min, ds.provenance.tau_max, ds.provenance.tau_min,
                 ds.provenance.data_hash};
  write_groups((d / "groups.txt").string(), h, ds.groups);
}

namespace {

struct WorldFile {
  OracleWorld world;
  DatasetProvenance prov;
};

WorldFile parse_world_file(const std::string& path) {
  const auto j = parse_json(read_file(path), path);
  try {
    if (j.at("format") != "sage-world-1") throw IoError(path + ": unknown world format");
    WorldFile f;
    f.world.params = params_from_json(j.at("params"));
    const auto& st = j.at("stats");
    f.world.stats.sibling_in_window = st.at("sibling_in_window").get<double>();
    f.world.stats.cross_below_min = st.at("cross_below_min").get<double>();
    f.world.stats.child_angle = st.at("child_angle").get<double>();
    f.world.stats.attempts = st.at("attempts").get<std::size_t>();
    for (const auto& c : j.at("concepts"))
      f.world.concepts.push_back({c.at("id").get<std::size_t>(), c.at("meta").get<std::size_t>(),
                                  to_vector(c.at("embedding")), to_vector(c.at("mean")),
                                  c.at("spread").get<double>()});
    const auto& ds = j.at("dataset");
    f.prov.tau_min = ds.at("tau_min").get<double>();
    f.prov.tau_max = ds.at("tau_max").get<double>();
    f.prov.world = f.world.params;
    f.prov.per_concept = ds.at("per_concept").get<std::size_t>();
    f.prov.target_groups = ds.at("target_groups").get<std::size_t>();
    f.prov.available_cliques = ds.at("available_cliques").get<std::size_t>();
    f.prov.cliques_truncated = ds.at("cliques_truncated").get<bool>();
    f.prov.fewer_than_target = ds.at("fewer_than_target").get<bool>();
    f.prov.data_hash = ds.at("data_hash").get<std::string>();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace

OracleWorld read_world(const std::string& path) { return parse_world_file(path).world; }

GroupedDataset read_dataset(const std::string& dir) {
  const std::filesystem::path d(dir);
  auto wf = parse_world_file((d / "world.json").string());
  GroupedDataset ds;
  ds.provenance = wf.prov;
  const auto rpath = (d / "records.jsonl").string();
  std::istringstream in(read_file(rpath));
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = parse_json(line, rpath);
    try {
      ds.records.push_back({j.at("id").get<std::size_t>(), j.at("concept").get<std::size_t>(),
                            to_vector(j.at("embedding")), to_vector(j.at("x"))});
    } catch (const nlohmann::json::exception& e) {
      throw IoError(rpath + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    if (ds.records[i].id != i) throw IoError(rpath + ": record ids must be 0..n-1 in order");
  GroupsHeader h;
  ds.groups = read_groups((d / "groups.txt").string(), &h);
  if (h.data_hash != ds.provenance.data_hash)
    throw IoError(dir + ": groups.txt and world.json disagree on data_hash");
  for (const auto& g : ds.groups)
    for (std::size_t id : g)
      if (id >= ds.records.size()) throw IoError(dir + ": group refers to unknown record");
  return ds;
}

}  // namespace sage
