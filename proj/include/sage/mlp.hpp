#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sage/linalg.hpp"
#include "sage/rng.hpp"

namespace sage {

enum class Activation { silu, tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

// weight: out x in
struct DenseLayer {
  Matrix weight;
  Vector bias;

  bool operator==(const DenseLayer&) const = default;
};

// Weights and biases of the fully connected noise-prediction network. The
// activation is applied after every layer except the last.
struct DenoiserParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::silu;

  // widths = {input, hidden..., output}; weights ~ N(0, 1/fan_in), zero biases.
  static DenoiserParams init(std::span<const std::size_t> widths, Activation act, Rng& rng);
  static DenoiserParams zeros(std::span<const std::size_t> widths, Activation act);

  std::size_t input_width() const;
  std::size_t output_width() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
  // Throws ContractViolation when adjacent layer shapes do not compose.
  void validate() const;

  bool operator==(const DenoiserParams&) const = default;
};

// Gradients share the layer layout of the parameters they belong to.
struct ParamGrads {
  std::vector<DenseLayer> layers;

  static ParamGrads zeros_like(const DenoiserParams& params);
  void add(const ParamGrads& other, double scale = 1.0);
  void scale(double s);
  bool all_finite() const;
  double max_abs() const;
};

// Flat views: parameter index i walks layer by layer, weights row-major then bias.
std::size_t flat_size(const std::vector<DenseLayer>& layers);
double& flat_at(std::vector<DenseLayer>& layers, std::size_t i);
double flat_at(const std::vector<DenseLayer>& layers, std::size_t i);
Vector flatten(const std::vector<DenseLayer>& layers);

struct MlpTape {
  std::vector<Vector> layer_inputs;  // input seen by each layer
  std::vector<Vector> preactivations;  // pre-activation of each hidden layer
};

struct MlpForward {
  Vector output;
  MlpTape tape;
};

MlpForward mlp_forward(const DenoiserParams& params, std::span<const double> input);
// Output only, no tape.
Vector mlp_eval(const DenoiserParams& params, std::span<const double> input);

// Reverse-mode pass: accumulates d(scalar)/d(params) into grads given
// d(scalar)/d(output).
void mlp_backward(const DenoiserParams& params, const MlpTape& tape,
                  std::span<const double> output_grad, ParamGrads& grads);
ParamGrads mlp_backward(const DenoiserParams& params, const MlpTape& tape,
                        std::span<const double> output_grad);

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

}  // namespace sage
