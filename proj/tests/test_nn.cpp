// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "layerfreeze/nn.hpp"
#include "support.hpp"

using namespace lf;
using namespace lf::testing;

namespace {

nn::Layer identity_layer(std::size_t n) {
  nn::Layer l;
  l.weights = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) l.weights(i, i) = 1.0;
  l.bias.assign(n, 0.0);
  return l;
}

nn::Model uniform_model(std::size_t layers, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ModelSpec spec{width, std::vector<std::size_t>(layers, width), 3, nn::Activation::Tanh};
  return nn::make_model(spec, rng);
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = uniform_size(rng, 0, classes - 1);
  return y;
}

}  // namespace

TEST_SUITE("nncore") {

TEST_CASE("identity network passes its input through") {
  nn::Model m;
  m.layers = {identity_layer(3), identity_layer(3)};
  m.head = identity_layer(3);
  Matrix x(2, 3, std::vector<double>{1, -2, 3, 0.5, 0, -1});
  CHECK(bit_equal(nn::forward(m, x, 0).logits(), x));
}

TEST_CASE("resuming from any recorded depth reproduces the logits") {
  std::mt19937_64 rng(3);
  nn::Model m = random_model(rng, 5, 6);
  Matrix x = random_matrix(4, m.input_dim(), rng);
  auto full = nn::forward(m, x, 0);
  REQUIRE(full.outputs.size() == m.depth() + 1);
  for (std::size_t j = 0; j < m.depth(); ++j) {
    auto resumed = nn::forward(m, full.outputs[j], j + 1);
    CHECK(resumed.outputs.size() == m.depth() - j);
    CHECK(bit_equal(resumed.logits(), full.logits()));
    CHECK(bit_equal(nn::forward_range(m, x, 0, j + 1), full.outputs[j]));
  }
}

TEST_CASE("forward agrees with a straight-line evaluator to the last bit") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    nn::Model m = random_model(rng, 4, 8);
    for (auto& l : m.layers) l.activation = nn::Activation::ReLU;
    Matrix x = random_matrix(uniform_size(rng, 1, 6), m.input_dim(), rng);
    CHECK(bit_equal(nn::forward(m, x, 0).logits(), plain_logits(m, x)));
  }
}

TEST_CASE("forward names the layer whose shape does not chain") {
  std::mt19937_64 rng(5);
  nn::Model m = uniform_model(3, 4, 1);
  Matrix bad = random_matrix(2, 5, rng);
  try {
    (void)nn::forward(m, bad, 0);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
  try {
    (void)nn::forward(m, random_matrix(2, 4, rng), 0);
    (void)nn::forward(m, bad, 2);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
  }
  m.layers[1].weights = Matrix(4, 3);
  CHECK_THROWS_AS(m.validate(), ShapeError);
}

TEST_CASE("uniform logits give ln 2 per sample") {
  Matrix z(3, 2, 0.7);
  const std::vector<std::size_t> y = {0, 1, 1};
  auto r = nn::loss_grad(z, y);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("loss vanishes as the correct margin grows") {
  double prev = 1e9;
  for (double margin : {1.0, 5.0, 20.0, 60.0}) {
    Matrix z(1, 3, std::vector<double>{margin, 0, 0});
    const double loss = nn::loss_grad(z, std::vector<std::size_t>{0}).loss;
    CHECK(loss >= 0.0);
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-20);
}

TEST_CASE("dlogits rows sum to zero and match finite differences") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const std::size_t b = uniform_size(rng, 1, 5), c = uniform_size(rng, 2, 6);
    Matrix z = random_matrix(b, c, rng, -3, 3);
    auto y = random_labels(b, c, rng);
    auto r = nn::loss_grad(z, y);
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0;
      for (double v : r.dlogits.row(i)) s += v;
      CHECK(std::abs(s) < 1e-15);
      for (std::size_t k = 0; k < c; ++k) {
        const double h = 1e-5;
        Matrix zp = z, zm = z;
        zp(i, k) += h;
        zm(i, k) -= h;
        const double fd = (nn::loss_grad(zp, y).loss - nn::loss_grad(zm, y).loss) / (2 * h);
        CHECK(rel_err(r.dlogits(i, k), fd) < 1e-6);
      }
    }
  }
}

TEST_CASE("out-of-range labels are rejected") {
  CHECK_THROWS_AS(nn::loss_grad(Matrix(1, 3), std::vector<std::size_t>{3}), std::out_of_range);
}

TEST_CASE("backward at the last boundary yields head gradients only") {
  nn::Model m = uniform_model(4, 5, 2);
  std::mt19937_64 rng(7);
  Matrix x = random_matrix(3, 5, rng);
  auto trace = nn::forward(m, x, 0);
  auto lg = nn::loss_grad(trace.logits(), random_labels(3, 3, rng));
  auto g = nn::backward(m, trace, lg.dlogits, m.depth());
  CHECK(g.layers.empty());
  CHECK(g.first_layer == m.depth());
  CHECK(g.head.weights.rows() == 3);
  for (std::size_t j = 0; j < m.depth(); ++j) CHECK_FALSE(g.has_layer(j));
}

TEST_CASE("backward validates its boundary") {
  nn::Model m = uniform_model(4, 5, 2);
  std::mt19937_64 rng(8);
  auto full = nn::forward(m, random_matrix(2, 5, rng), 0);
  auto lg = nn::loss_grad(full.logits(), std::vector<std::size_t>{0, 1});
  CHECK_THROWS(nn::backward(m, full, lg.dlogits, 5));
  auto resumed = nn::forward(m, full.outputs[1], 2);
  CHECK_THROWS(nn::backward(m, resumed, lg.dlogits, 1));
  CHECK_NOTHROW(nn::backward(m, resumed, lg.dlogits, 2));
}

TEST_CASE("gradients above the boundary do not depend on it") {
  nn::Model m = uniform_model(6, 5, 3);
  std::mt19937_64 rng(9);
  Matrix x = random_matrix(4, 5, rng);
  auto trace = nn::forward(m, x, 0);
  auto lg = nn::loss_grad(trace.logits(), random_labels(4, 3, rng));
  auto g0 = nn::backward(m, trace, lg.dlogits, 0);
  for (std::size_t f = 1; f <= m.depth(); ++f) {
    auto gf = nn::backward(m, trace, lg.dlogits, f);
    for (std::size_t j = f; j < m.depth(); ++j) {
      CHECK(bit_equal(gf.layer(j).weights, g0.layer(j).weights));
      CHECK(bit_equal(gf.layer(j).bias, g0.layer(j).bias));
    }
    CHECK(bit_equal(gf.head.weights, g0.head.weights));
  }
  // Resuming the forward pass from the boundary gives the same gradients.
  auto resumed = nn::forward(m, trace.outputs[2], 3);
  auto g3 = nn::backward(m, resumed, lg.dlogits, 3);
  for (std::size_t j = 3; j < m.depth(); ++j) {
    CHECK(bit_equal(g3.layer(j).weights, g0.layer(j).weights));
  }
}

TEST_CASE("weight gradients match central finite differences") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 10; ++t) {
    nn::Model m = random_model(rng, uniform_size(rng, 2, 5), 8, false);
    const std::size_t b = uniform_size(rng, 1, 4);
    Matrix x = random_matrix(b, m.input_dim(), rng);
    auto y = random_labels(b, m.num_classes(), rng);
    auto trace = nn::forward(m, x, 0);
    auto g = nn::backward(m, trace, nn::loss_grad(trace.logits(), y).dlogits, 0);
    const double h = 1e-5;
    for (std::size_t j = 0; j < m.depth(); ++j) {
      auto& w = m.layers[j].weights;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double keep = w.storage()[i];
        w.storage()[i] = keep + h;
        const double up = plain_loss(m, x, y);
        w.storage()[i] = keep - h;
        const double down = plain_loss(m, x, y);
        w.storage()[i] = keep;
        CHECK(rel_err(g.layer(j).weights.storage()[i], (up - down) / (2 * h)) < 1e-5);
      }
    }
  }
}

TEST_CASE("sgd leaves layers without gradients untouched") {
  nn::Model m = uniform_model(6, 4, 5);
  const nn::Model before = m;
  std::mt19937_64 rng(11);
  for (int step = 0; step < 20; ++step) {
    Matrix x = random_matrix(3, 4, rng);
    auto trace = nn::forward(m, x, 0);
    auto lg = nn::loss_grad(trace.logits(), random_labels(3, 3, rng));
    m = nn::sgd_step(m, nn::backward(m, trace, lg.dlogits, 3), 0.1);
  }
  for (std::size_t j = 0; j < 3; ++j) CHECK(nn::bit_equal(m.layers[j], before.layers[j]));
  CHECK_FALSE(nn::bit_equal(m.layers[3], before.layers[3]));
}

TEST_CASE("zero learning rate leaves the model unchanged") {
  nn::Model m = uniform_model(3, 4, 6);
  std::mt19937_64 rng(12);
  auto trace = nn::forward(m, random_matrix(2, 4, rng), 0);
  auto lg = nn::loss_grad(trace.logits(), std::vector<std::size_t>{0, 2});
  CHECK(nn::bit_equal(nn::sgd_step(m, nn::backward(m, trace, lg.dlogits, 0), 0.0), m));
  CHECK_THROWS(nn::sgd_step(m, nn::backward(m, trace, lg.dlogits, 0), -1.0));
}

TEST_CASE("one scalar update") {
  nn::Model m;
  m.layers = {identity_layer(1), identity_layer(1)};
  m.head = identity_layer(1);
  nn::GradientSet g;
  g.first_layer = 1;
  g.layers.push_back({Matrix(1, 1, 0.5), {0.0}});
  g.head = {Matrix(1, 1, 0.0), {0.0}};
  auto out = nn::sgd_step(m, g, 0.1);
  CHECK(out.layers[1].weights(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(out.layers[0].weights(0, 0) == 1.0);
}

TEST_CASE("flop accounting") {
  nn::Model m = uniform_model(8, 10, 7);
  const std::size_t B = 16;
  auto full = nn::flop_count(m, B, 0, 0);
  const std::uint64_t dense = 2ULL * B * 10 * 10, head = 2ULL * B * 10 * 3;
  CHECK(full.forward == 8 * dense + head);
  CHECK(full.backward == 2 * (8 * dense + head));

  // Per-layer summation oracle at half depth.
  auto half = nn::flop_count(m, B, 4, 0);
  std::uint64_t oracle = 0;
  for (std::size_t j = 4; j <= 8; ++j) oracle += 2 * B * nn::layer_forward_flops(m, j);
  CHECK(half.backward == oracle);
  CHECK(half.backward - 2 * head == (full.backward - 2 * head) / 2);

  auto top = nn::flop_count(m, B, 8, 8);
  CHECK(top.forward == head);
  CHECK(top.backward == 2 * head);

  for (std::size_t f = 1; f <= 8; ++f) {
    CHECK(nn::flop_count(m, B, f, 0).backward < nn::flop_count(m, B, f - 1, 0).backward);
    CHECK(nn::flop_count(m, B, f, f).forward < nn::flop_count(m, B, f, f - 1).forward);
  }
  CHECK_THROWS(nn::flop_count(m, B, 2, 3));
  CHECK_THROWS(nn::flop_count(m, B, 9, 0));
}

TEST_CASE("training trajectories are deterministic") {
  auto run = [] {
    nn::Model m = uniform_model(4, 6, 8);
    std::mt19937_64 rng(13);
    for (int s = 0; s < 25; ++s) {
      auto trace = nn::forward(m, random_matrix(5, 6, rng), 0);
      auto lg = nn::loss_grad(trace.logits(), random_labels(5, 3, rng));
      nn::apply_sgd(m, nn::backward(m, trace, lg.dlogits, s / 10), 0.05);
    }
    return m;
  };
  CHECK(nn::bit_equal(run(), run()));
}

}
