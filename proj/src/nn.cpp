// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "layerfreeze/kernels.hpp"

namespace lf::nn {

namespace {

void activate(Matrix& m, Activation a) {
  switch (a) {
    case Activation::Identity:
      return;
    case Activation::ReLU:
      for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::Tanh:
      for (double& v : m.values()) v = std::tanh(v);
      return;
  }
}

// Multiplies g in place by the activation derivative expressed through the
// layer output y.
void scale_by_derivative(Matrix& g, const Matrix& y, Activation a) {
  auto gv = g.values();
  auto yv = y.values();
  switch (a) {
    case Activation::Identity:
      return;
    case Activation::ReLU:
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = yv[i] > 0.0 ? gv[i] : 0.0;
      return;
    case Activation::Tanh:
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= 1.0 - yv[i] * yv[i];
      return;
  }
}

Matrix apply_layer(const Layer& layer, const Matrix& x, std::size_t index) {
  if (x.cols() != layer.in_dim()) {
    throw ShapeError("layer " + std::to_string(index) + ": expected input width " +
                     std::to_string(layer.in_dim()) + ", got " + std::to_string(x.cols()));
  }
  Matrix y = kernels::parallel::dense_forward(x, layer.weights, layer.bias);
  activate(y, layer.activation);
  return y;
}

void subtract_scaled(std::span<double> w, std::span<const double> g, double lr) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::size_t Model::width_at(std::size_t d) const {
  if (d > layers.size()) throw std::out_of_range("depth " + std::to_string(d) + " out of range");
  return d == 0 ? input_dim() : layers[d - 1].out_dim();
}

std::vector<std::size_t> Model::widths() const {
  std::vector<std::size_t> w;
  w.reserve(depth() + 1);
  for (std::size_t d = 0; d <= depth(); ++d) w.push_back(width_at(d));
  return w;
}

void Model::validate() const {
  if (layers.size() < 2) throw ShapeError("model needs at least 2 layers");
  for (std::size_t j = 0; j <= layers.size(); ++j) {
    const Layer& l = j < layers.size() ? layers[j] : head;
    if (l.bias.size() != l.out_dim()) {
      throw ShapeError("layer " + std::to_string(j) + ": bias length " +
                       std::to_string(l.bias.size()) + " != " + std::to_string(l.out_dim()));
    }
    if (j > 0 && l.in_dim() != layers[j - 1].out_dim()) {
      throw ShapeError("layer " + std::to_string(j) + ": input width " +
                       std::to_string(l.in_dim()) + " != previous output width " +
                       std::to_string(layers[j - 1].out_dim()));
    }
  }
  if (head.activation != Activation::Identity) throw ShapeError("head must be linear");
}

bool bit_equal(const Layer& a, const Layer& b) {
  return a.activation == b.activation && lf::bit_equal(a.weights, b.weights) &&
         lf::bit_equal(std::span<const double>(a.bias), std::span<const double>(b.bias));
}

bool bit_equal(const Model& a, const Model& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t j = 0; j < a.layers.size(); ++j) {
    if (!bit_equal(a.layers[j], b.layers[j])) return false;
  }
  return bit_equal(a.head, b.head);
}

Model make_model(const ModelSpec& spec, std::mt19937_64& rng) {
  Model m;
  std::size_t in = spec.input_dim;
  auto make = [&](std::size_t fan_in, std::size_t fan_out, Activation act) {
    Layer l;
    l.weights = Matrix(fan_out, fan_in);
    l.bias.assign(fan_out, 0.0);
    l.activation = act;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : l.weights.values()) w = dist(rng);
    return l;
  };
  for (std::size_t w : spec.widths) {
    m.layers.push_back(make(in, w, spec.activation));
    in = w;
  }
  m.head = make(in, spec.num_classes, Activation::Identity);
  m.validate();
  return m;
}

const Matrix& ForwardTrace::input_of(std::size_t j) const {
  if (j < start_depth || j > start_depth + outputs.size() - 1) {
    throw std::out_of_range("trace has no input for layer " + std::to_string(j));
  }
  return j == start_depth ? inputs : outputs[j - start_depth - 1];
}

ForwardTrace forward(const Model& model, Matrix input, std::size_t start_depth) {
  const std::size_t depth = model.depth();
  if (start_depth > depth) {
    throw std::invalid_argument("forward: start depth " + std::to_string(start_depth) +
                                " exceeds model depth " + std::to_string(depth));
  }
  ForwardTrace trace;
  trace.start_depth = start_depth;
  trace.inputs = std::move(input);
  trace.outputs.reserve(depth - start_depth + 1);
  for (std::size_t j = start_depth; j <= depth; ++j) {
    const Matrix& x = j == start_depth ? trace.inputs : trace.outputs.back();
    const Layer& layer = j < depth ? model.layers[j] : model.head;
    trace.outputs.push_back(apply_layer(layer, x, j));
  }
  return trace;
}

Matrix forward_range(const Model& model, Matrix input, std::size_t from, std::size_t to) {
  if (from > to || to > model.depth()) {
    throw std::invalid_argument("forward_range: bad layer range [" + std::to_string(from) + ", " +
                                std::to_string(to) + ")");
  }
  for (std::size_t j = from; j < to; ++j) input = apply_layer(model.layers[j], input, j);
  return input;
}

LossResult loss_grad(const Matrix& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("loss_grad: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.rows()) + " rows");
  }
  const std::size_t batch = logits.rows(), classes = logits.cols();
  LossResult r;
  r.dlogits = Matrix(batch, classes);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw std::out_of_range("label " + std::to_string(labels[b]) + " out of range for " +
                              std::to_string(classes) + " classes");
    }
    auto z = logits.row(b);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    total += lse - z[labels[b]];
    auto d = r.dlogits.row(b);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(z[c] - m) / s;
      d[c] = (p - (c == labels[b] ? 1.0 : 0.0)) * inv_batch;
    }
  }
  r.loss = total * inv_batch;
  return r;
}

GradientSet backward(const Model& model, const ForwardTrace& trace, const Matrix& dlogits,
                     std::size_t frozen_boundary) {
  const std::size_t depth = model.depth();
  if (frozen_boundary > depth) {
    throw std::invalid_argument("backward: frozen boundary " + std::to_string(frozen_boundary) +
                                " exceeds model depth " + std::to_string(depth));
  }
  if (frozen_boundary < trace.start_depth) {
    throw std::invalid_argument("backward: frozen boundary " + std::to_string(frozen_boundary) +
                                " lies below the trace start depth " +
                                std::to_string(trace.start_depth));
  }
  if (dlogits.rows() != trace.logits().rows() || dlogits.cols() != trace.logits().cols()) {
    throw ShapeError("backward: dlogits shape does not match logits");
  }

  GradientSet g;
  g.first_layer = frozen_boundary;
  g.layers.resize(depth - frozen_boundary);

  const Matrix& head_in = trace.input_of(depth);
  g.head.weights = kernels::parallel::weight_grad(dlogits, head_in);
  g.head.bias = kernels::parallel::bias_grad(dlogits);
  if (frozen_boundary == depth) return g;

  Matrix upstream = kernels::parallel::input_grad(dlogits, model.head.weights);
  for (std::size_t j = depth; j-- > frozen_boundary;) {
    const Layer& layer = model.layers[j];
    const Matrix& out = trace.outputs[j - trace.start_depth];
    scale_by_derivative(upstream, out, layer.activation);
    const Matrix& in = trace.input_of(j);
    LayerGrad& lg = g.layers[j - frozen_boundary];
    lg.weights = kernels::parallel::weight_grad(upstream, in);
    lg.bias = kernels::parallel::bias_grad(upstream);
    if (j > frozen_boundary) upstream = kernels::parallel::input_grad(upstream, layer.weights);
  }
  return g;
}

void apply_sgd(Model& model, const GradientSet& grads, double lr) {
  if (!std::isfinite(lr) || lr < 0.0) throw std::invalid_argument("learning rate must be >= 0");
  if (grads.first_layer + grads.layers.size() != model.depth()) {
    throw ShapeError("apply_sgd: gradient set does not end at the last layer");
  }
  for (std::size_t j = grads.first_layer; j < model.depth(); ++j) {
    const LayerGrad& lg = grads.layer(j);
    Layer& layer = model.layers[j];
    if (lg.weights.rows() != layer.weights.rows() || lg.weights.cols() != layer.weights.cols()) {
      throw ShapeError("apply_sgd: gradient shape mismatch at layer " + std::to_string(j));
    }
    subtract_scaled(layer.weights.values(), lg.weights.values(), lr);
    subtract_scaled(layer.bias, lg.bias, lr);
  }
  subtract_scaled(model.head.weights.values(), grads.head.weights.values(), lr);
  subtract_scaled(model.head.bias, grads.head.bias, lr);
}

Model sgd_step(Model model, const GradientSet& grads, double lr) {
  apply_sgd(model, grads, lr);
  return model;
}

std::uint64_t layer_forward_flops(const Model& model, std::size_t j) {
  const Layer& l = j < model.depth() ? model.layers.at(j) : model.head;
  return 2ULL * l.in_dim() * l.out_dim();
}

FlopCount flop_count(const Model& model, std::size_t batch, std::size_t frozen_boundary,
                     std::size_t start_depth) {
  if (start_depth > frozen_boundary || frozen_boundary > model.depth()) {
    throw std::invalid_argument("flop_count: need start_depth <= frozen_boundary <= depth");
  }
  FlopCount f;
  for (std::size_t j = start_depth; j <= model.depth(); ++j) {
    f.forward += batch * layer_forward_flops(model, j);
  }
  for (std::size_t j = frozen_boundary; j <= model.depth(); ++j) {
    f.backward += 2 * batch * layer_forward_flops(model, j);
  }
  return f;
}

std::vector<std::size_t> argmax_rows(const Matrix& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    auto r = logits.row(b);
    out[b] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

double accuracy(const Model& model, const Matrix& x, std::span<const std::size_t> labels) {
  const auto trace = forward(model, x, 0);
  const auto pred = argmax_rows(trace.logits());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace lf::nn
