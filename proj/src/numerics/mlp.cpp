#include "hydo/numerics/mlp.hpp"

#include <cmath>

#include "hydo/numerics/errors.hpp"

namespace hydo {

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t MlpParams::input_width() const { return layers.empty() ? 0 : layers.front().weight.rows(); }

std::size_t MlpParams::output_width() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

std::size_t MlpParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers) total += layer.weight.size() + layer.bias.size();
  return total;
}

MlpParams make_mlp(std::span<const std::size_t> widths, Activation hidden, Activation output,
                   RngStream& rng) {
  if (widths.size() < 2) throw ConfigError("make_mlp needs at least input and output widths");
  MlpParams params;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t fan_in = widths[i];
    const std::size_t fan_out = widths[i + 1];
    if (fan_in == 0 || fan_out == 0) throw ConfigError("make_mlp: zero layer width");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.weight = DenseArray(fan_in, fan_out);
    for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
    layer.bias = DenseArray(1, fan_out, 0.0);
    layer.activation = (i + 2 == widths.size()) ? output : hidden;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace {

BoundMlp bind(Graph& graph, const MlpParams& params, bool trainable) {
  BoundMlp bound;
  for (const auto& layer : params.layers) {
    bound.weights.push_back(trainable ? graph.parameter(layer.weight) : graph.constant(layer.weight));
    bound.biases.push_back(trainable ? graph.parameter(layer.bias) : graph.constant(layer.bias));
  }
  return bound;
}

}  // namespace

Var activate(Graph& graph, Var x, Activation activation) {
  switch (activation) {
    case Activation::identity: return x;
    case Activation::tanh: return graph.tanh(x);
    case Activation::relu: return graph.relu(x);
  }
  return x;
}

BoundMlp bind_parameters(Graph& graph, const MlpParams& params) { return bind(graph, params, true); }

BoundMlp bind_constants(Graph& graph, const MlpParams& params) { return bind(graph, params, false); }

Var mlp_forward(Graph& graph, const MlpParams& params, const BoundMlp& bound, Var input) {
  if (params.layers.empty()) throw ConfigError("mlp_forward: network has no layers");
  if (graph.value(input).cols() != params.input_width()) {
    throw ConfigError("mlp_forward: input width " + std::to_string(graph.value(input).cols()) +
                      " does not match network input " + std::to_string(params.input_width()));
  }
  Var h = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = activate(graph, graph.add(graph.matmul(h, bound.weights[i]), bound.biases[i]),
                 params.layers[i].activation);
  }
  return h;
}

Var mlp_forward(const MlpParams& params, Var input, Graph& graph) {
  return mlp_forward(graph, params, bind_parameters(graph, params), input);
}

MlpParams gradients_of(const Gradients& grads, const BoundMlp& bound, const MlpParams& params) {
  MlpParams out = params;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    out.layers[i].weight = grads.wrt(bound.weights[i]);
    out.layers[i].bias = grads.wrt(bound.biases[i]);
  }
  return out;
}

std::vector<DenseArray*> parameter_arrays(MlpParams& params) {
  std::vector<DenseArray*> out;
  for (auto& layer : params.layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const DenseArray*> parameter_arrays(const MlpParams& params) {
  std::vector<const DenseArray*> out;
  for (const auto& layer : params.layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

}  // namespace hydo
