// SPDX-License-Identifier: Apache-2.0
#pragma once
// Generators and independent oracles shared by the test suites.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "layerfreeze/distsim.hpp"
#include "layerfreeze/matrix.hpp"
#include "layerfreeze/nn.hpp"

namespace lf::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return Matrix(r, c, std::move(v));
}

inline Matrix gaussian_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = n01(rng);
  return Matrix(r, c, std::move(v));
}

inline std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

/// Random model with every dimension in [1, max_dim] and random activations.
inline nn::Model random_model(std::mt19937_64& rng, std::size_t layers, std::size_t max_dim,
                              bool allow_relu = true) {
  nn::Model m;
  std::size_t in = uniform_size(rng, 1, max_dim);
  const nn::Activation acts[] = {nn::Activation::Tanh, nn::Activation::Identity,
                                 nn::Activation::ReLU};
  for (std::size_t j = 0; j < layers; ++j) {
    const std::size_t out = uniform_size(rng, 1, max_dim);
    nn::Layer l;
    l.weights = random_matrix(out, in, rng);
    l.bias = random_matrix(1, out, rng).storage();
    l.activation = acts[uniform_size(rng, 0, allow_relu ? 2 : 1)];
    m.layers.push_back(std::move(l));
    in = out;
  }
  m.head.weights = random_matrix(uniform_size(rng, 2, std::max<std::size_t>(max_dim, 2)), in, rng);
  m.head.bias = random_matrix(1, m.head.weights.rows(), rng).storage();
  return m;
}

/// Straight-line evaluator: one sample at a time, same left-to-right sums.
inline std::vector<double> plain_layer(const nn::Layer& l, const std::vector<double>& x,
                                       std::vector<double>* pre = nullptr) {
  std::vector<double> y(l.out_dim());
  for (std::size_t i = 0; i < l.out_dim(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < l.in_dim(); ++k) acc += x[k] * l.weights(i, k);
    const double z = acc + l.bias[i];
    if (pre) pre->push_back(z);
    switch (l.activation) {
      case nn::Activation::Identity: y[i] = z; break;
      case nn::Activation::ReLU: y[i] = z > 0.0 ? z : 0.0; break;
      case nn::Activation::Tanh: y[i] = std::tanh(z); break;
    }
  }
  return y;
}

inline Matrix plain_logits(const nn::Model& m, const Matrix& x,
                           std::vector<double>* relu_pre = nullptr) {
  std::vector<double> out;
  for (std::size_t b = 0; b < x.rows(); ++b) {
    auto r = x.row(b);
    std::vector<double> h(r.begin(), r.end());
    for (const auto& l : m.layers) {
      std::vector<double> pre;
      h = plain_layer(l, h, &pre);
      if (relu_pre && l.activation == nn::Activation::ReLU) {
        relu_pre->insert(relu_pre->end(), pre.begin(), pre.end());
      }
    }
    h = plain_layer(m.head, h);
    out.insert(out.end(), h.begin(), h.end());
  }
  return Matrix(x.rows(), m.num_classes(), std::move(out));
}

/// Mean softmax cross-entropy, computed without the engine.
inline double plain_loss(const nn::Model& m, const Matrix& x, const std::vector<std::size_t>& y) {
  const Matrix z = plain_logits(m, x);
  double total = 0.0;
  for (std::size_t b = 0; b < z.rows(); ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : z.row(b)) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : z.row(b)) s += std::exp(v - mx);
    total += mx + std::log(s) - z(b, y[b]);
  }
  return total / static_cast<double>(z.rows());
}

/// |a - n| / max(|a|, |n|, floor); the floor keeps entries that are zero up to
/// rounding from dominating.
inline double rel_err(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// SVCCA through covariance eigendecompositions and explicit whitening.
inline double whitening_svcca(const Matrix& a, const Matrix& b, double keep) {
  auto reduce = [keep](const Matrix& m) {
    Eigen::MatrixXd x(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) x(r, c) = m(r, c);
    x.rowwise() -= x.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.transpose() * x);
    Eigen::VectorXd lambda = es.eigenvalues().reverse();
    Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
    const double top = std::sqrt(std::max(lambda(0), 0.0));
    Eigen::Index rank = 0;
    while (rank < lambda.size() && std::sqrt(std::max(lambda(rank), 0.0)) >= 1e-10 * top) ++rank;
    const double total = lambda.head(rank).sum();
    Eigen::Index k = 0;
    double cum = 0.0;
    while (k < rank) {
      cum += lambda(k++);
      if (cum >= keep * total * (1.0 - 1e-12)) break;
    }
    return Eigen::MatrixXd(x * vecs.leftCols(k));
  };
  auto inv_sqrt = [](const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    return Eigen::MatrixXd(es.eigenvectors() *
                           es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                           es.eigenvectors().transpose());
  };
  const Eigen::MatrixXd ra = reduce(a), rb = reduce(b);
  const Eigen::MatrixXd w = inv_sqrt(ra.transpose() * ra) * (ra.transpose() * rb) *
                            inv_sqrt(rb.transpose() * rb);
  // Canonical correlations: square roots of the eigenvalues of w^T w (or w w^T).
  const Eigen::MatrixXd g = w.cols() <= w.rows() ? Eigen::MatrixXd(w.transpose() * w)
                                                 : Eigen::MatrixXd(w * w.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    sum += std::min(1.0, std::sqrt(std::max(es.eigenvalues()(i), 0.0)));
  }
  return sum / static_cast<double>(es.eigenvalues().size());
}

/// Epoch time and cost of a (workers, total batch) configuration, from the
/// textbook formulas rather than the planner's code.
struct OracleCost {
  bool feasible = false;
  double epoch_time = 0.0;
  double cost = 0.0;
  std::uint64_t iterations = 0;
};

inline OracleCost oracle_cost(const dist::PlanInputs& in, std::size_t boundary,
                              std::size_t workers, std::uint64_t total_batch) {
  const auto& pr = in.profile;
  const auto& cl = in.cluster;
  const std::size_t active = pr.num_layers - boundary;
  const std::uint64_t busiest = (total_batch + workers - 1) / workers;
  const double mem = static_cast<double>(pr.weight_bytes) +
                     static_cast<double>(active) * static_cast<double>(pr.grad_bytes_per_layer) +
                     static_cast<double>(pr.head_grad_bytes) +
                     static_cast<double>(busiest) *
                         (static_cast<double>(active) * static_cast<double>(pr.act_bytes_per_sample_layer) +
                          static_cast<double>(pr.head_act_bytes_per_sample));
  OracleCost o;
  o.feasible = mem <= static_cast<double>(cl.memory_budget);
  const double bytes = static_cast<double>(active * pr.grad_bytes_per_layer + pr.head_grad_bytes);
  const double k = std::ceil(bytes / static_cast<double>(pr.bucket_bytes));
  const double p = static_cast<double>(workers);
  const double comm =
      k * (cl.latency * (p - 1) + 2.0 * static_cast<double>(pr.bucket_bytes) * (p - 1) / (p * cl.bandwidth));
  const double load = static_cast<double>(total_batch) / p;
  const double comp = pr.compute.fixed +
                      load * (static_cast<double>(pr.num_layers) * pr.compute.forward_per_sample_layer +
                              static_cast<double>(active) * pr.compute.backward_per_sample_layer +
                              pr.compute.head_per_sample);
  o.iterations = (in.dataset_size + total_batch - 1) / total_batch;
  o.epoch_time = static_cast<double>(o.iterations) * std::max(comp, comm);
  o.cost = o.epoch_time * p * cl.cost_rate;
  return o;
}

/// Random feasible scenario; the initial per-worker batch is the largest that
/// fits with every layer trainable.
inline dist::PlanInputs random_scenario(std::mt19937_64& rng) {
  dist::PlanInputs in;
  auto& pr = in.profile;
  auto& cl = in.cluster;
  pr.num_layers = uniform_size(rng, 2, 24);
  pr.bucket_bytes = static_cast<std::uint64_t>(log_uniform(rng, 1e6, 1e8));
  pr.grad_bytes_per_layer = static_cast<std::uint64_t>(log_uniform(rng, 1e6, 5e8));
  pr.head_grad_bytes = static_cast<std::uint64_t>(log_uniform(rng, 1e4, 1e7));
  pr.weight_bytes = static_cast<std::uint64_t>(log_uniform(rng, 1e8, 2e9));
  pr.act_bytes_per_sample_layer = static_cast<std::uint64_t>(log_uniform(rng, 1e5, 2e8));
  pr.head_act_bytes_per_sample = static_cast<std::uint64_t>(log_uniform(rng, 1e5, 1e8));
  pr.compute.fixed = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
  pr.compute.forward_per_sample_layer = log_uniform(rng, 1e-5, 1e-2);
  pr.compute.backward_per_sample_layer =
      pr.compute.forward_per_sample_layer * std::uniform_real_distribution<double>(1.0, 3.0)(rng);
  pr.compute.head_per_sample = log_uniform(rng, 1e-6, 1e-3);
  cl.workers = uniform_size(rng, 2, 64);
  cl.bandwidth = log_uniform(rng, 1e9, 1e11);
  cl.latency = log_uniform(rng, 1e-6, 1e-2);
  cl.cost_rate = std::uniform_real_distribution<double>(0.5, 3.0)(rng);
  in.initial_per_worker = uniform_size(rng, 1, 32);
  const std::uint64_t per_sample =
      pr.num_layers * pr.act_bytes_per_sample_layer + pr.head_act_bytes_per_sample;
  cl.memory_budget = dist::memory_required(pr.num_layers, in.initial_per_worker, pr) +
                     uniform_size(rng, 0, per_sample - 1);
  in.dataset_size = uniform_size(rng, 1000, 200000);
  return in;
}

/// Cheapest feasible worker count at the initial total batch, by exhaustive
/// search. Returns the oracle cost (infinity if nothing fits).
inline double brute_efficiency_cost(const dist::PlanInputs& in, std::size_t boundary) {
  double best = std::numeric_limits<double>::infinity();
  const std::uint64_t total = in.initial_total();
  for (std::size_t w = 1; w <= in.cluster.workers; ++w) {
    const auto o = oracle_cost(in, boundary, w, total);
    if (o.feasible) best = std::min(best, o.cost);
  }
  return best;
}

/// Fastest per-worker batch on all workers, by exhaustive search over
/// [b0, cap]. Past ceil(N / p) the epoch is a single iteration whose compute
/// only grows, so the grid stops there.
inline double brute_performance_time(const dist::PlanInputs& in, std::size_t boundary,
                                     std::optional<std::uint64_t> max_total = std::nullopt) {
  const std::size_t p = in.cluster.workers;
  std::uint64_t hi = (in.dataset_size + p - 1) / p;
  if (max_total) hi = std::min<std::uint64_t>(hi, *max_total / p);
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t b = in.initial_per_worker; b <= std::max(hi, in.initial_per_worker); ++b) {
    const auto o = oracle_cost(in, boundary, p, b * p);
    if (!o.feasible) break;
    best = std::min(best, o.epoch_time);
  }
  return best;
}

}  // namespace lf::testing
