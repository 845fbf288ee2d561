#pragma once

#include <span>
#include <string>
#include <vector>

#include "hydo/numerics/dense_array.hpp"
#include "hydo/numerics/graph.hpp"
#include "hydo/numerics/rng.hpp"

namespace hydo {

enum class Activation { identity, tanh, relu };

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  DenseArray weight;  // in x out
  DenseArray bias;    // 1 x out
  Activation activation = Activation::identity;

  bool operator==(const DenseLayer&) const = default;
};

/// Feedforward network parameters. Plain value type: copying a MlpParams
/// snapshots the network.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_width() const;
  std::size_t output_width() const;
  std::size_t parameter_count() const;

  bool operator==(const MlpParams&) const = default;
};

/// Layer widths `widths[0] -> ... -> widths.back()`, `hidden` activation on
/// all but the last layer. Weights are Glorot-uniform, biases zero.
MlpParams make_mlp(std::span<const std::size_t> widths, Activation hidden, Activation output,
                   RngStream& rng);

/// Graph leaves for one network's weights and biases.
struct BoundMlp {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

// Trainable leaves (gradients collected) vs frozen leaves (treated as data).
BoundMlp bind_parameters(Graph& graph, const MlpParams& params);
BoundMlp bind_constants(Graph& graph, const MlpParams& params);

Var activate(Graph& graph, Var x, Activation activation);
Var mlp_forward(Graph& graph, const MlpParams& params, const BoundMlp& bound, Var input);
// Binds `params` as trainable leaves and runs the forward pass.
Var mlp_forward(const MlpParams& params, Var input, Graph& graph);

// Gradient arrays laid out like `params` (same layer structure).
MlpParams gradients_of(const Gradients& grads, const BoundMlp& bound, const MlpParams& params);

// Flat views used by optimizers and target-network updates.
std::vector<DenseArray*> parameter_arrays(MlpParams& params);
std::vector<const DenseArray*> parameter_arrays(const MlpParams& params);

}  // namespace hydo
