#include "sage/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sage/error.hpp"
#include "sage/text.hpp"

namespace sage {

ConceptEmbedding::ConceptEmbedding(Vector values) : values_(std::move(values)) {
  require(std::abs(norm(values_) - 1.0) <= 1e-9, "ConceptEmbedding: vector is not unit norm");
}

ConceptEmbedding ConceptEmbedding::normalized(std::span<const double> v) {
  const double n = norm(v);
  require(n > 0.0, "ConceptEmbedding: cannot normalize a zero vector");
  return ConceptEmbedding(scaled(v, 1.0 / n));
}

Vector time_features(int t, int t_train) {
  const double tau = static_cast<double>(t) / static_cast<double>(t_train);
  Vector f(2 * kTimeFrequencies);
  double w = std::numbers::pi / 2.0;
  for (std::size_t k = 0; k < kTimeFrequencies; ++k, w *= 2.0) {
    f[2 * k] = std::sin(w * tau);
    f[2 * k + 1] = std::cos(w * tau);
  }
  return f;
}

std::vector<std::size_t> DenoiserShape::widths() const {
  std::vector<std::size_t> w{input_width()};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(data_dim);
  return w;
}

Denoiser::Denoiser(DenoiserParams params, std::size_t data_dim, std::size_t embed_dim,
                   std::shared_ptr<const NoiseSchedule> schedule)
    : params_(std::move(params)),
      data_dim_(data_dim),
      embed_dim_(embed_dim),
      schedule_(std::move(schedule)) {
  require(schedule_ != nullptr, "Denoiser: schedule required");
  params_.validate();
  require(params_.output_width() == data_dim_, "Denoiser: output width must equal data dim");
  require(params_.input_width() == data_dim_ + 2 * kTimeFrequencies + embed_dim_,
          "Denoiser: input width must be data + time features + embedding");
}

Denoiser Denoiser::create(const DenoiserShape& shape,
                          std::shared_ptr<const NoiseSchedule> schedule, Rng& rng) {
  const auto widths = shape.widths();
  return Denoiser(DenoiserParams::init(widths, shape.activation, rng), shape.data_dim,
                  shape.embed_dim, std::move(schedule));
}

Vector Denoiser::build_input(std::span<const double> z_t, int t,
                             std::span<const double> condition) const {
  require(z_t.size() == data_dim_, "Denoiser: z_t has the wrong dimension");
  require(condition.size() == embed_dim_, "Denoiser: condition has the wrong dimension");
  require(t >= 0 && t <= schedule_->t_train, "Denoiser: timestep out of range");
  Vector in;
  in.reserve(params_.input_width());
  in.insert(in.end(), z_t.begin(), z_t.end());
  const Vector tf = time_features(t, schedule_->t_train);
  in.insert(in.end(), tf.begin(), tf.end());
  in.insert(in.end(), condition.begin(), condition.end());
  return in;
}

Vector Denoiser::predict(std::span<const double> z_t, int t,
                         std::span<const double> condition) const {
  return mlp_eval(params_, build_input(z_t, t, condition));
}

MlpForward Denoiser::predict_with_tape(std::span<const double> z_t, int t,
                                       std::span<const double> condition) const {
  return mlp_forward(params_, build_input(z_t, t, condition));
}

GuidanceSchedule GuidanceSchedule::piecewise(std::vector<std::pair<int, double>> table,
                                             double fallback) {
  GuidanceSchedule g(fallback);
  std::sort(table.begin(), table.end());
  g.table_ = std::move(table);
  return g;
}

double GuidanceSchedule::at(int t) const {
  double w = constant_;
  for (const auto& [t_min, omega] : table_)
    if (t >= t_min) w = omega;
  return w;
}

Vector predict_cfg(const NoisePredictor& model, std::span<const double> z_t, int t,
                   std::span<const double> condition, double omega) {
  require(omega >= 0.0, "predict_cfg: omega must be non-negative");
  const Vector null_c(model.embed_dim(), 0.0);
  if (omega == 1.0) return model.predict(z_t, t, condition);
  if (omega == 0.0) return model.predict(z_t, t, null_c);
  const Vector cond = model.predict(z_t, t, condition);
  Vector out = model.predict(z_t, t, null_c);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += omega * (cond[i] - out[i]);
  return out;
}

Vector centroid(std::span<const Vector> embeddings) {
  require(!embeddings.empty(), "centroid: empty group");
  return mean_of(embeddings);
}

GaussianOracle::GaussianOracle(Vector mean, double spread,
                               std::shared_ptr<const NoiseSchedule> schedule,
                               std::size_t embed_dim)
    : mean_(std::move(mean)), spread_(spread), schedule_(std::move(schedule)),
      embed_dim_(embed_dim) {
  require(schedule_ != nullptr, "GaussianOracle: schedule required");
  require(spread_ >= 0.0, "GaussianOracle: spread must be non-negative");
}

Vector GaussianOracle::predict(std::span<const double> z_t, int t,
                               std::span<const double> /*condition*/) const {
  require(z_t.size() == mean_.size(), "GaussianOracle: dimension mismatch");
  const double a = schedule_->alpha_at(t);
  const double s = schedule_->sigma_at(t);
  const double s2 = spread_ * spread_;
  const double denom = a * a * s2 + s * s;
  Vector eps(z_t.size(), 0.0);
  if (s == 0.0) return eps;
  for (std::size_t i = 0; i < z_t.size(); ++i) {
    const double posterior_mean = (a * s2 * z_t[i] + s * s * mean_[i]) / denom;
    eps[i] = (z_t[i] - a * posterior_mean) / s;
  }
  return eps;
}

void save_checkpoint(const std::string& path, const Denoiser& d, const CheckpointMeta& meta) {
  std::ostringstream out;
  const auto& p = d.params();
  out << kCheckpointMagic << '\n';
  out << "config_hash " << meta.config_hash << '\n';
  out << "data_hash " << meta.data_hash << '\n';
  out << "model " << meta.model_label << '\n';
  out << "steps " << meta.steps << '\n';
  out << "data_dim " << d.data_dim() << '\n';
  out << "embed_dim " << d.embed_dim() << '\n';
  out << "t_train " << d.schedule().t_train << '\n';
  out << "schedule " << to_string(d.schedule().kind) << '\n';
  out << "activation " << to_string(p.activation) << '\n';
  out << "layers " << p.layers.size() << '\n';
  for (const auto& l : p.layers) {
    out << "layer " << l.weight.rows() << ' ' << l.weight.cols() << '\n';
    for (std::size_t r = 0; r < l.weight.rows(); ++r) out << format_vector(l.weight.row(r)) << '\n';
    out << format_vector(l.bias) << '\n';
  }
  write_file(path, out.str());
}

namespace {

std::string expect_field(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("checkpoint truncated before '" + key + "'");
  const auto sp = line.find(' ');
  if (line.substr(0, sp) != key) throw IoError("checkpoint: expected '" + key + "'");
  return sp == std::string::npos ? std::string{} : line.substr(sp + 1);
}

Vector read_row(std::istream& in, std::size_t n) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("checkpoint truncated");
  Vector v;
  v.reserve(n);
  for (const auto& tok : split(trim(line), ' '))
    if (!tok.empty()) v.push_back(parse_double(tok));
  if (v.size() != n) throw IoError("checkpoint: row has the wrong length");
  return v;
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw IoError("'" + path + "' is not a " + kCheckpointMagic + " file");
  CheckpointMeta meta;
  meta.config_hash = expect_field(in, "config_hash");
  meta.data_hash = expect_field(in, "data_hash");
  meta.model_label = expect_field(in, "model");
  meta.steps = static_cast<std::size_t>(parse_int(expect_field(in, "steps")));
  const auto data_dim = static_cast<std::size_t>(parse_int(expect_field(in, "data_dim")));
  const auto embed_dim = static_cast<std::size_t>(parse_int(expect_field(in, "embed_dim")));
  const int t_train = static_cast<int>(parse_int(expect_field(in, "t_train")));
  const auto kind = parse_schedule_kind(expect_field(in, "schedule"));
  DenoiserParams params;
  params.activation = parse_activation(expect_field(in, "activation"));
  const auto n_layers = static_cast<std::size_t>(parse_int(expect_field(in, "layers")));
  for (std::size_t k = 0; k < n_layers; ++k) {
    const auto dims = split(expect_field(in, "layer"), ' ');
    if (dims.size() != 2) throw IoError("checkpoint: malformed layer header");
    const auto rows = static_cast<std::size_t>(parse_int(dims[0]));
    const auto cols = static_cast<std::size_t>(parse_int(dims[1]));
    DenseLayer layer{Matrix(rows, cols), {}};
    for (std::size_t r = 0; r < rows; ++r) {
      const Vector row = read_row(in, cols);
      std::copy(row.begin(), row.end(), layer.weight.row(r).begin());
    }
    layer.bias = read_row(in, rows);
    params.layers.push_back(std::move(layer));
  }
  auto schedule = std::make_shared<const NoiseSchedule>(build_schedule(t_train, kind));
  return {meta, Denoiser(std::move(params), data_dim, embed_dim, std::move(schedule))};
}

}  // namespace sage
