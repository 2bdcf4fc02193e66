#include "sage/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "sage/error.hpp"

namespace sage {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::silu: return "silu";
    case Activation::tanh: return "tanh";
  }
  return "silu";
}

Activation parse_activation(const std::string& name) {
  if (name == "silu") return Activation::silu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::silu: return x / (1.0 + std::exp(-x));
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::silu: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

DenoiserParams DenoiserParams::init(std::span<const std::size_t> widths, Activation act,
                                    Rng& rng) {
  DenoiserParams p = zeros(widths, act);
  for (auto& layer : p.layers) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    const Vector draws = gaussian(rng, layer.weight.size());
    auto w = layer.weight.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = scale * draws[i];
  }
  return p;
}

DenoiserParams DenoiserParams::zeros(std::span<const std::size_t> widths, Activation act) {
  require(widths.size() >= 2, "DenoiserParams: need at least input and output widths");
  DenoiserParams p;
  p.activation = act;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    require(widths[i] > 0 && widths[i + 1] > 0, "DenoiserParams: zero width");
    p.layers.push_back({Matrix(widths[i + 1], widths[i]), Vector(widths[i + 1], 0.0)});
  }
  return p;
}

std::size_t DenoiserParams::input_width() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

std::size_t DenoiserParams::output_width() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

std::size_t DenoiserParams::parameter_count() const { return flat_size(layers); }

bool DenoiserParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return sage::all_finite(l.weight.values()) && sage::all_finite(l.bias);
  });
}

void DenoiserParams::validate() const {
  require(!layers.empty(), "DenoiserParams: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    require(layers[i].bias.size() == layers[i].weight.rows(),
            "DenoiserParams: bias length does not match layer output");
    if (i + 1 < layers.size())
      require(layers[i + 1].weight.cols() == layers[i].weight.rows(),
              "DenoiserParams: adjacent layer shapes do not compose");
  }
}

ParamGrads ParamGrads::zeros_like(const DenoiserParams& params) {
  ParamGrads g;
  g.layers.reserve(params.layers.size());
  for (const auto& l : params.layers)
    g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), Vector(l.bias.size(), 0.0)});
  return g;
}

void ParamGrads::add(const ParamGrads& other, double s) {
  require(other.layers.size() == layers.size(), "ParamGrads::add: layout mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    axpy(s, other.layers[i].weight.values(), layers[i].weight.values());
    axpy(s, other.layers[i].bias, layers[i].bias);
  }
}

void ParamGrads::scale(double s) {
  for (auto& l : layers) {
    for (double& v : l.weight.values()) v *= s;
    for (double& v : l.bias) v *= s;
  }
}

bool ParamGrads::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return sage::all_finite(l.weight.values()) && sage::all_finite(l.bias);
  });
}

double ParamGrads::max_abs() const {
  double m = 0.0;
  for (const auto& l : layers) {
    for (double v : l.weight.values()) m = std::max(m, std::abs(v));
    for (double v : l.bias) m = std::max(m, std::abs(v));
  }
  return m;
}

std::size_t flat_size(const std::vector<DenseLayer>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

double& flat_at(std::vector<DenseLayer>& layers, std::size_t i) {
  for (auto& l : layers) {
    if (i < l.weight.size()) return l.weight.values()[i];
    i -= l.weight.size();
    if (i < l.bias.size()) return l.bias[i];
    i -= l.bias.size();
  }
  throw ContractViolation("flat_at: index out of range");
}

double flat_at(const std::vector<DenseLayer>& layers, std::size_t i) {
  return flat_at(const_cast<std::vector<DenseLayer>&>(layers), i);
}

Vector flatten(const std::vector<DenseLayer>& layers) {
  Vector out;
  out.reserve(flat_size(layers));
  for (const auto& l : layers) {
    const auto w = l.weight.values();
    out.insert(out.end(), w.begin(), w.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

MlpForward mlp_forward(const DenoiserParams& params, std::span<const double> input) {
  require(input.size() == params.input_width(), "mlp_forward: input width mismatch");
  MlpForward fwd;
  const std::size_t n = params.layers.size();
  fwd.tape.layer_inputs.reserve(n);
  fwd.tape.preactivations.reserve(n - 1);
  Vector h(input.begin(), input.end());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& layer = params.layers[i];
    Vector a = matvec(layer.weight, h);
    for (std::size_t j = 0; j < a.size(); ++j) a[j] += layer.bias[j];
    fwd.tape.layer_inputs.push_back(std::move(h));
    if (i + 1 == n) {
      fwd.output = std::move(a);
      break;
    }
    h.resize(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) h[j] = activate(params.activation, a[j]);
    fwd.tape.preactivations.push_back(std::move(a));
  }
  return fwd;
}

Vector mlp_eval(const DenoiserParams& params, std::span<const double> input) {
  require(input.size() == params.input_width(), "mlp_eval: input width mismatch");
  Vector h(input.begin(), input.end());
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& layer = params.layers[i];
    Vector a = matvec(layer.weight, h);
    for (std::size_t j = 0; j < a.size(); ++j) a[j] += layer.bias[j];
    if (i + 1 < params.layers.size())
      for (double& v : a) v = activate(params.activation, v);
    h = std::move(a);
  }
  return h;
}

void mlp_backward(const DenoiserParams& params, const MlpTape& tape,
                  std::span<const double> output_grad, ParamGrads& grads) {
  const std::size_t n = params.layers.size();
  require(tape.layer_inputs.size() == n, "mlp_backward: tape does not match params");
  require(output_grad.size() == params.output_width(), "mlp_backward: output grad width");
  require(grads.layers.size() == n, "mlp_backward: grads layout mismatch");

  Vector delta(output_grad.begin(), output_grad.end());
  for (std::size_t k = n; k-- > 0;) {
    const auto& layer = params.layers[k];
    const Vector& x = tape.layer_inputs[k];
    auto& g = grads.layers[k];
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      auto grow = g.weight.row(r);
      for (std::size_t c = 0; c < x.size(); ++c) grow[c] += d * x[c];
      g.bias[r] += d;
    }
    if (k == 0) break;
    Vector upstream = matvec_transposed(layer.weight, delta);
    const Vector& pre = tape.preactivations[k - 1];
    for (std::size_t j = 0; j < upstream.size(); ++j)
      upstream[j] *= activate_derivative(params.activation, pre[j]);
    delta = std::move(upstream);
  }
}

ParamGrads mlp_backward(const DenoiserParams& params, const MlpTape& tape,
                        std::span<const double> output_grad) {
  ParamGrads grads = ParamGrads::zeros_like(params);
  mlp_backward(params, tape, output_grad, grads);
  return grads;
}

}  // namespace sage
