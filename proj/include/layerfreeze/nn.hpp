// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic dense-network engine with manual backpropagation.
//
// A Model is a stack of dense layers (the freezable units) followed by a linear
// classifier head. Depth d means "the first d layers have been applied", so the
// activation at depth d is the input of layer d. Forward passes can resume from
// a cached activation at any depth and backward passes stop at a frozen
// boundary; both keep per-element arithmetic identical to the plain full pass.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "layerfreeze/matrix.hpp"

namespace lf::nn {

enum class Activation { Identity, ReLU, Tanh };

const char* to_string(Activation a);
Activation parse_activation(const std::string& name);

struct Layer {
  Matrix weights;             // out_dim x in_dim
  std::vector<double> bias;   // out_dim
  Activation activation = Activation::Identity;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }
};

struct Model {
  std::vector<Layer> layers;
  Layer head;  // identity activation, produces class logits

  std::size_t depth() const { return layers.size(); }
  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t num_classes() const { return head.out_dim(); }
  /// Width of the activation at depth d (d = 0 is the input).
  std::size_t width_at(std::size_t d) const;
  /// Widths at every depth 0..depth().
  std::vector<std::size_t> widths() const;

  /// Throws ShapeError naming the first layer whose dimensions do not chain.
  void validate() const;
};

bool bit_equal(const Model& a, const Model& b);
bool bit_equal(const Layer& a, const Layer& b);

struct ModelSpec {
  std::size_t input_dim = 16;
  std::vector<std::size_t> widths;  // one entry per layer
  std::size_t num_classes = 4;
  Activation activation = Activation::Tanh;
};

/// Glorot-uniform weights, zero biases.
Model make_model(const ModelSpec& spec, std::mt19937_64& rng);

struct ForwardTrace {
  Matrix inputs;                 // activation at start_depth
  std::vector<Matrix> outputs;   // layers start_depth..depth()-1, then logits
  std::size_t start_depth = 0;

  const Matrix& logits() const { return outputs.back(); }
  /// Activation entering layer j (j >= start_depth; j == depth() is the head).
  const Matrix& input_of(std::size_t j) const;
};

/// Runs layers start_depth..depth()-1 and the head. `input` must be the
/// activation at depth start_depth.
ForwardTrace forward(const Model& model, Matrix input, std::size_t start_depth = 0);

/// Applies layers [from, to) without recording intermediate outputs; used to
/// advance cached activations up to the frozen boundary.
Matrix forward_range(const Model& model, Matrix input, std::size_t from, std::size_t to);

struct LossResult {
  double loss = 0.0;  // mean softmax cross-entropy over the batch
  Matrix dlogits;     // gradient of the mean loss
};

LossResult loss_grad(const Matrix& logits, std::span<const std::size_t> labels);

struct LayerGrad {
  Matrix weights;
  std::vector<double> bias;
};

/// Gradients for layers first_layer..depth()-1 plus the head.
struct GradientSet {
  std::size_t first_layer = 0;
  std::vector<LayerGrad> layers;
  LayerGrad head;

  bool has_layer(std::size_t j) const {
    return j >= first_layer && j < first_layer + layers.size();
  }
  const LayerGrad& layer(std::size_t j) const { return layers.at(j - first_layer); }
};

/// Backpropagates dlogits down to (and including) layer frozen_boundary.
/// Requires trace.start_depth <= frozen_boundary <= depth().
GradientSet backward(const Model& model, const ForwardTrace& trace, const Matrix& dlogits,
                     std::size_t frozen_boundary);

/// w <- w - lr * g for every layer present in grads. lr must be finite and >= 0.
void apply_sgd(Model& model, const GradientSet& grads, double lr);
Model sgd_step(Model model, const GradientSet& grads, double lr);

/// FLOP accounting: 2 FLOPs per multiply-accumulate. A dense layer's forward
/// costs 2*B*in*out; its backward costs twice that (weight and input
/// gradients). Forward covers layers start_depth.. and the head; backward
/// covers layers frozen_boundary.. and the head.
struct FlopCount {
  std::uint64_t forward = 0;
  std::uint64_t backward = 0;

  std::uint64_t total() const { return forward + backward; }
  FlopCount& operator+=(const FlopCount& o) {
    forward += o.forward;
    backward += o.backward;
    return *this;
  }
};

FlopCount flop_count(const Model& model, std::size_t batch, std::size_t frozen_boundary,
                     std::size_t start_depth);

/// Forward FLOPs of layer j (j == depth() is the head) for one sample.
std::uint64_t layer_forward_flops(const Model& model, std::size_t j);

std::vector<std::size_t> argmax_rows(const Matrix& logits);
double accuracy(const Model& model, const Matrix& x, std::span<const std::size_t> labels);

}  // namespace lf::nn
