#include <cmath>
#include <filesystem>
#include <memory>

#include "doctest.h"
#include "sage/error.hpp"
#include "sage/model.hpp"
#include "sage/rng.hpp"

using namespace sage;

namespace {

std::shared_ptr<const NoiseSchedule> linear_schedule() {
  return std::make_shared<const NoiseSchedule>(build_schedule(1000, ScheduleKind::linear));
}

Denoiser random_denoiser(std::uint64_t seed, std::vector<std::size_t> hidden = {8, 8}) {
  Rng rng(seed);
  DenoiserShape shape;
  shape.hidden = std::move(hidden);
  auto d = Denoiser::create(shape, linear_schedule(), rng);
  for (auto& l : d.mutable_params().layers)
    for (double& b : l.bias) b = 0.2 * (rng.uniform() - 0.5);
  return d;
}

Vector unit_embedding(Rng& rng, std::size_t m) {
  auto v = gaussian(rng, m);
  return scaled(v, 1.0 / norm(v));
}

double frobenius(const Matrix& w) {
  double s = 0.0;
  for (double v : w.values()) s += v * v;
  return std::sqrt(s);
}

// Scripted predictor: fixed outputs for the null and non-null condition.
struct Scripted : NoisePredictor {
  Vector cond, null;
  Vector predict(std::span<const double>, int, std::span<const double> c) const override {
    return norm(c) == 0.0 ? null : cond;
  }
  std::size_t data_dim() const override { return cond.size(); }
  std::size_t embed_dim() const override { return 2; }
  const NoiseSchedule& schedule() const override { return sched; }
  NoiseSchedule sched = build_schedule(10, ScheduleKind::linear);
};

}  // namespace

TEST_CASE("ConceptEmbedding enforces unit norm") {
  CHECK_NOTHROW(ConceptEmbedding(Vector{0.6, 0.8}));
  CHECK_THROWS_AS(ConceptEmbedding(Vector{0.6, 0.81}), ContractViolation);
  auto e = ConceptEmbedding::normalized(Vector{3, 4});
  CHECK(std::abs(norm(e.values()) - 1.0) <= 1e-12);
}

TEST_CASE("time features") {
  auto f = time_features(0, 1000);
  REQUIRE(f.size() == 2 * kTimeFrequencies);
  for (std::size_t k = 0; k < kTimeFrequencies; ++k) {
    CHECK(f[2 * k] == 0.0);
    CHECK(f[2 * k + 1] == 1.0);
  }
  auto g = time_features(1000, 1000);
  CHECK(g[0] == doctest::Approx(1.0));  // sin(pi / 2)
}

TEST_CASE("predict: zero network, determinism, shape errors") {
  Rng rng(3);
  DenoiserShape shape;
  Denoiser zero(DenoiserParams::zeros(shape.widths(), Activation::silu), 2, 16, linear_schedule());
  auto c = unit_embedding(rng, 16);
  CHECK(zero.predict(Vector{1.0, -2.0}, 500, c) == Vector{0.0, 0.0});

  auto d = random_denoiser(9);
  auto a = d.predict(Vector{0.3, 0.2}, 250, c);
  auto b = d.predict(Vector{0.3, 0.2}, 250, c);
  CHECK(a == b);
  CHECK(a.size() == 2);
  CHECK_THROWS_AS(d.predict(Vector{0.3}, 250, c), ContractViolation);
  CHECK_THROWS_AS(d.predict(Vector{0.3, 0.2}, 250, Vector(15, 0.0)), ContractViolation);
}

TEST_CASE("predict: output bounded by weight norms") {
  // |silu(x)| <= |x| and tanh likewise, so |h_{k+1}| <= ||W_k||_F |h_k| + |b_k|.
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    auto d = random_denoiser(100 + trial);
    auto z = scaled(gaussian(rng, 2), 3.0);
    auto c = unit_embedding(rng, 16);
    const int t = static_cast<int>(rng.uniform_int(0, 1000));
    double bound = std::sqrt(squared_norm(z) + kTimeFrequencies + 1.0);
    for (const auto& l : d.params().layers) bound = frobenius(l.weight) * bound + norm(l.bias);
    auto out = d.predict(z, t, c);
    CHECK(all_finite(out));
    CHECK(norm(out) <= bound);
  }
}

TEST_CASE("predict_cfg: collapse, arithmetic, linearity") {
  Scripted s;
  s.cond = {1.0, 0.0};
  s.null = {0.0, 0.0};
  CHECK(predict_cfg(s, Vector{0, 0}, 10, Vector{1, 0}, 2.0) == Vector{2.0, 0.0});

  auto d = random_denoiser(4);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto z = gaussian(rng, 2);
    auto c = unit_embedding(rng, 16);
    const int t = static_cast<int>(rng.uniform_int(1, 1000));
    CHECK(predict_cfg(d, z, t, c, 1.0) == d.predict(z, t, c));
    CHECK(predict_cfg(d, z, t, c, 0.0) == d.predict(z, t, d.null_condition()));
    auto p0 = predict_cfg(d, z, t, c, 0.5);
    auto p1 = predict_cfg(d, z, t, c, 2.5);
    auto p2 = predict_cfg(d, z, t, c, 7.5);
    // Three collinear points: (p1 - p0) / 2 == (p2 - p1) / 5.
    for (int i = 0; i < 2; ++i)
      CHECK((p1[i] - p0[i]) / 2.0 == doctest::Approx((p2[i] - p1[i]) / 5.0).epsilon(1e-10));
  }
}

TEST_CASE("GuidanceSchedule") {
  GuidanceSchedule constant(7.5);
  CHECK(constant.at(1) == 7.5);
  CHECK(constant.at(1000) == 7.5);
  auto pw = GuidanceSchedule::piecewise({{500, 3.0}, {800, 5.0}}, 1.0);
  CHECK(pw.at(100) == 1.0);
  CHECK(pw.at(500) == 3.0);
  CHECK(pw.at(799) == 3.0);
  CHECK(pw.at(1000) == 5.0);
}

TEST_CASE("centroid examples") {
  Vector e{0.6, 0.8, 0.0};
  std::vector<Vector> one{e};
  CHECK(centroid(one) == e);
  std::vector<Vector> opposite{{1, 0}, {-1, 0}};
  CHECK(centroid(opposite) == Vector{0, 0});
  std::vector<Vector> axes{{1, 0, 0}, {0, 1, 0}};
  CHECK(centroid(axes) == Vector{0.5, 0.5, 0.0});
  std::vector<Vector> copies(7, e);
  auto c = centroid(copies);
  for (int i = 0; i < 3; ++i) CHECK(c[i] == doctest::Approx(e[i]).epsilon(1e-15));
  CHECK_THROWS_AS(centroid(std::vector<Vector>{}), ContractViolation);
}

TEST_CASE("GaussianOracle matches the closed-form posterior mean") {
  auto s = linear_schedule();
  GaussianOracle oracle(Vector{1.0, -2.0}, 0.3, s);
  const int t = 400;
  const double a = s->alpha_at(t), sg = s->sigma_at(t), v = 0.09;
  Vector z{0.5, 0.25};
  auto eps = oracle.predict(z, t, Vector{});
  for (int i = 0; i < 2; ++i) {
    const double mu = i == 0 ? 1.0 : -2.0;
    const double post = (a * v * z[i] + sg * sg * mu) / (a * a * v + sg * sg);
    CHECK(eps[i] == doctest::Approx((z[i] - a * post) / sg).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip") {
  auto d = random_denoiser(77, {5, 3});
  const auto path = (std::filesystem::temp_directory_path() / "sage_ckpt_test.txt").string();
  save_checkpoint(path, d, {"cafebabe00000000", "0000000000000001", "sage", 42});
  auto back = load_checkpoint(path);
  CHECK(back.meta.config_hash == "cafebabe00000000");
  CHECK(back.meta.data_hash == "0000000000000001");
  CHECK(back.meta.model_label == "sage");
  CHECK(back.meta.steps == 42);
  REQUIRE(back.denoiser.params().layers.size() == d.params().layers.size());
  for (std::size_t k = 0; k < d.params().layers.size(); ++k) {
    CHECK(back.denoiser.params().layers[k].weight == d.params().layers[k].weight);
    CHECK(back.denoiser.params().layers[k].bias == d.params().layers[k].bias);
  }
  CHECK(back.denoiser.schedule().alpha == d.schedule().alpha);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
