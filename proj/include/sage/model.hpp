#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sage/linalg.hpp"
#include "sage/mlp.hpp"
#include "sage/schedule.hpp"

namespace sage {

// Unit-norm prompt embedding.
class ConceptEmbedding {
 public:
  ConceptEmbedding() = default;
  // Throws ContractViolation unless |values| = 1 within 1e-9.
  explicit ConceptEmbedding(Vector values);
  static ConceptEmbedding normalized(std::span<const double> v);

  const Vector& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  operator std::span<const double>() const { return values_; }

 private:
  Vector values_;
};

// Anything that predicts the injected noise for (z_t, t, condition).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Vector predict(std::span<const double> z_t, int t,
                         std::span<const double> condition) const = 0;
  virtual std::size_t data_dim() const = 0;
  virtual std::size_t embed_dim() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;
};

inline constexpr std::size_t kTimeFrequencies = 8;

// Interleaved sin(w_k * t / T), cos(w_k * t / T) for w_k = (pi / 2) * 2^k, k = 0..7.
Vector time_features(int t, int t_train);

struct DenoiserShape {
  std::size_t data_dim = 2;
  std::size_t embed_dim = 16;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::silu;

  std::size_t input_width() const { return data_dim + 2 * kTimeFrequencies + embed_dim; }
  std::vector<std::size_t> widths() const;
};

// Conditional noise predictor over input [z_t ; time features ; c]. The null
// condition for guidance is the all-zeros vector.
class Denoiser : public NoisePredictor {
 public:
  Denoiser(DenoiserParams params, std::size_t data_dim, std::size_t embed_dim,
           std::shared_ptr<const NoiseSchedule> schedule);

  static Denoiser create(const DenoiserShape& shape, std::shared_ptr<const NoiseSchedule> schedule,
                         Rng& rng);

  Vector predict(std::span<const double> z_t, int t,
                 std::span<const double> condition) const override;
  MlpForward predict_with_tape(std::span<const double> z_t, int t,
                               std::span<const double> condition) const;
  Vector build_input(std::span<const double> z_t, int t, std::span<const double> condition) const;

  std::size_t data_dim() const override { return data_dim_; }
  std::size_t embed_dim() const override { return embed_dim_; }
  Vector null_condition() const { return Vector(embed_dim_, 0.0); }

  const DenoiserParams& params() const { return params_; }
  DenoiserParams& mutable_params() { return params_; }
  const NoiseSchedule& schedule() const override { return *schedule_; }
  std::shared_ptr<const NoiseSchedule> schedule_ptr() const { return schedule_; }

 private:
  DenoiserParams params_;
  std::size_t data_dim_;
  std::size_t embed_dim_;
  std::shared_ptr<const NoiseSchedule> schedule_;
};

// Guidance scale as a function of timestep. Constant by default; an optional
// piecewise-constant table of (t_min, omega) entries overrides it for t >= t_min
// (highest matching t_min wins).
class GuidanceSchedule {
 public:
  GuidanceSchedule(double omega = 7.5) : constant_(omega) {}  // NOLINT(implicit)
  static GuidanceSchedule piecewise(std::vector<std::pair<int, double>> table, double fallback);
  double at(int t) const;
  double constant() const { return constant_; }
  bool is_constant() const { return table_.empty(); }

 private:
  double constant_;
  std::vector<std::pair<int, double>> table_;
};

// null + omega * (cond - null); omega = 1 and omega = 0 return the single
// prediction unchanged.
Vector predict_cfg(const NoisePredictor& model, std::span<const double> z_t, int t,
                   std::span<const double> condition, double omega);

// Plain arithmetic mean, not re-normalized.
Vector centroid(std::span<const Vector> embeddings);

// Closed-form optimal noise predictor for data ~ N(mean, spread^2 I); the
// condition is ignored.
class GaussianOracle : public NoisePredictor {
 public:
  GaussianOracle(Vector mean, double spread, std::shared_ptr<const NoiseSchedule> schedule,
                 std::size_t embed_dim = 0);
  Vector predict(std::span<const double> z_t, int t,
                 std::span<const double> condition) const override;
  std::size_t data_dim() const override { return mean_.size(); }
  std::size_t embed_dim() const override { return embed_dim_; }
  const NoiseSchedule& schedule() const override { return *schedule_; }

 private:
  Vector mean_;
  double spread_;
  std::shared_ptr<const NoiseSchedule> schedule_;
  std::size_t embed_dim_;
};

// Checkpoint text format, versioned by the magic first line.
inline constexpr const char* kCheckpointMagic = "SAGE-CKPT-1";

struct CheckpointMeta {
  std::string config_hash;
  std::string data_hash;
  std::string model_label;
  std::size_t steps = 0;
};

struct Checkpoint {
  CheckpointMeta meta;
  Denoiser denoiser;
};

void save_checkpoint(const std::string& path, const Denoiser& d, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sage
