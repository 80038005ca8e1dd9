// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "layerfreeze/freezer.hpp"
#include "support.hpp"

using namespace lf;
using namespace lf::freeze;
using lf::testing::uniform_size;

namespace {

/// Gradient set whose layer j has a single weight entry equal to values[j].
nn::GradientSet scalar_grads(std::size_t first, const std::vector<double>& values) {
  nn::GradientSet g;
  g.first_layer = first;
  for (double v : values) g.layers.push_back({Matrix(1, 1, v), {0.0}});
  g.head = {Matrix(1, 1, 0.0), {0.0}};
  return g;
}

std::vector<double> random_etas(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  // Ties are common in practice once gradients plateau.
  if (n > 2 && rng() % 4 == 0) v[1] = v[0];
  return v;
}

}  // namespace

TEST_SUITE("freezer") {

TEST_CASE("gradient-norm change") {
  CHECK(eta(10, 10) == 0.0);
  CHECK(eta(10, 5) == 0.5);
  CHECK(eta(4, 7) == 0.75);
  CHECK(eta(0, 3) == 0.0);
  CHECK(eta(0, 0) == 0.0);
  CHECK_THROWS_AS(eta(-1, 1), std::invalid_argument);
}

TEST_CASE("percentile methods") {
  const std::vector<double> v = {0.4, 0.1, 0.3, 0.2};
  CHECK(percentile(v, 50, PercentileMethod::Linear) == doctest::Approx(0.25));
  CHECK(percentile(v, 50, PercentileMethod::NearestRank) == 0.2);
  CHECK(percentile(v, 75, PercentileMethod::Linear) == doctest::Approx(0.325));
  CHECK(percentile(std::vector<double>{7.0}, 30, PercentileMethod::Linear) == 7.0);
  CHECK_THROWS(percentile(std::vector<double>{}, 50, PercentileMethod::Linear));
  CHECK_THROWS(percentile(v, 0, PercentileMethod::Linear));
  CHECK_THROWS(percentile(v, 100, PercentileMethod::Linear));
}

TEST_CASE("decision examples") {
  auto s = make_state(4, 50);
  CHECK(decide(s, std::vector<double>{0.1, 0.2, 0.3, 0.4}).frozen_boundary == 2);
  CHECK(decide(s, std::vector<double>{0.9, 0.1, 0.1, 0.1}).frozen_boundary == 0);
  CHECK(decide(s, std::vector<double>{0.3, 0.3, 0.3, 0.3}).frozen_boundary == 0);
  CHECK_THROWS_AS(decide(s, std::vector<double>{0.1, 0.2}), std::invalid_argument);

  auto one = make_state(4, 50);
  one.frozen_boundary = 3;
  CHECK(decide(one, std::vector<double>{0.0}).frozen_boundary == 3);

  // A very high percentile never freezes the last active layer.
  CHECK(freeze_count(std::vector<double>{0.1, 0.2, 0.3}, 99, PercentileMethod::Linear) == 2);
  CHECK(freeze_count(std::vector<double>{0.4, 0.5}, 99, PercentileMethod::Linear) == 1);
}

TEST_CASE("decisions only extend a prefix and never undo it") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t layers = uniform_size(rng, 1, 16);
    auto s = make_state(layers, uniform_size(rng, 1, 99),
                        rng() % 2 ? PercentileMethod::Linear : PercentileMethod::NearestRank);
    s.frozen_boundary = uniform_size(rng, 0, layers - 1);
    const auto etas = random_etas(rng, s.active_count());
    const auto next = decide(s, etas);
    CHECK(next.frozen_boundary >= s.frozen_boundary);
    CHECK(next.frozen_boundary <= std::max(s.frozen_boundary, layers - 1));
    const std::size_t added = next.frozen_boundary - s.frozen_boundary;
    const double thr = percentile(etas, s.percentile, s.method);
    for (std::size_t i = 0; i < added; ++i) CHECK(etas[i] < thr);
    if (s.active_count() >= 2 && added + 1 < s.active_count()) CHECK_FALSE(etas[added] < thr);
  }
}

TEST_CASE("a higher percentile never freezes fewer layers") {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 1000; ++t) {
    const auto etas = random_etas(rng, uniform_size(rng, 1, 12));
    const double lo = std::uniform_real_distribution<double>(1, 98)(rng);
    const double hi = std::uniform_real_distribution<double>(lo, 99)(rng);
    for (auto m : {PercentileMethod::Linear, PercentileMethod::NearestRank}) {
      CHECK(freeze_count(etas, lo, m) <= freeze_count(etas, hi, m));
    }
  }
}

TEST_CASE("decisions do not depend on the scale of the etas") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 500; ++t) {
    auto etas = random_etas(rng, uniform_size(rng, 2, 12));
    auto scaled = etas;
    for (auto& v : scaled) v *= 8.0;
    CHECK(freeze_count(etas, 50, PercentileMethod::Linear) ==
          freeze_count(scaled, 50, PercentileMethod::Linear));
  }
}

TEST_CASE("accumulation sums gradients elementwise") {
  std::mt19937_64 rng(24);
  auto w = make_window(3, 0);
  std::vector<nn::GradientSet> stream;
  std::vector<std::vector<double>> brute(3);
  for (int s = 0; s < 7; ++s) {
    nn::GradientSet g;
    for (std::size_t j = 0; j < 3; ++j) {
      nn::LayerGrad lg{lf::testing::random_matrix(2, 3, rng), lf::testing::random_matrix(1, 2, rng).storage()};
      if (brute[j].empty()) brute[j].assign(8, 0.0);
      for (std::size_t k = 0; k < 6; ++k) brute[j][k] += lg.weights.storage()[k];
      for (std::size_t k = 0; k < 2; ++k) brute[j][6 + k] += lg.bias[k];
      g.layers.push_back(std::move(lg));
    }
    w = accumulate(std::move(w), g);
  }
  CHECK(w.samples == 7);
  const auto norms = current_norms(w);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (double v : brute[j]) s += v * v;
    CHECK(norms[j] == doctest::Approx(std::sqrt(s)).epsilon(1e-14));
  }
}

TEST_CASE("opposite gradients cancel") {
  auto w = make_window(2, 0);
  w = accumulate(std::move(w), scalar_grads(0, {3.0, -2.0}));
  w = accumulate(std::move(w), scalar_grads(0, {-3.0, 2.0}));
  for (double n : current_norms(w)) CHECK(n == 0.0);
}

TEST_CASE("bias terms can be left out of the norm") {
  nn::GradientSet g;
  g.layers.push_back({Matrix(1, 1, 3.0), {4.0}});
  CHECK(current_norms(accumulate(make_window(1, 0, true), g))[0] == 5.0);
  CHECK(current_norms(accumulate(make_window(1, 0, false), g))[0] == 3.0);
}

TEST_CASE("gradients must cover exactly the active layers") {
  auto w = make_window(4, 1);
  CHECK_THROWS_AS(accumulate(w, scalar_grads(0, {1, 1, 1, 1})), std::invalid_argument);
  CHECK_THROWS_AS(accumulate(w, scalar_grads(1, {1, 1})), std::invalid_argument);
  CHECK_NOTHROW(accumulate(w, scalar_grads(1, {1, 1, 1})));
  CHECK_THROWS(interval_tick(make_state(4, 50), w));
}

TEST_CASE("the first interval only records norms") {
  auto r = interval_tick(make_state(4, 50), make_window(4, 0),
                         std::vector<nn::GradientSet>{scalar_grads(0, {1e-9, 1, 1, 1})});
  CHECK_FALSE(r.decided);
  CHECK(r.etas.empty());
  CHECK(r.state.frozen_boundary == 0);
  CHECK(r.window.has_previous);
  CHECK(r.window.previous_norms[0] == 1e-9);
}

TEST_CASE("a layer whose gradient settles first freezes first") {
  auto state = make_state(4, 50);
  auto window = make_window(4, 0);
  // Interval 1 records norms; in interval 2 layer 0 stays put while the others
  // keep changing, so only layer 0 freezes.
  auto r = interval_tick(state, window, std::vector{scalar_grads(0, {1.0, 1.0, 1.0, 1.0})});
  r = interval_tick(r.state, r.window, std::vector{scalar_grads(0, {1.0, 0.2, 0.5, 0.4})});
  REQUIRE(r.decided);
  REQUIRE(r.etas.size() == 4);
  CHECK(r.etas[0] == 0.0);
  CHECK(r.etas[1] == doctest::Approx(0.8));
  CHECK(r.etas[2] == doctest::Approx(0.5));
  CHECK(r.etas[3] == doctest::Approx(0.6));
  CHECK(r.state.frozen_boundary == 1);
  CHECK(r.window.first_active == 1);
  CHECK(r.window.accumulated.size() == 3);
  REQUIRE(r.state.history.size() == 1);
  CHECK(r.state.history[0].interval == 2);
  CHECK(r.state.history[0].boundary == 1);

  r = interval_tick(r.state, r.window, std::vector{scalar_grads(1, {0.2, 0.1, 0.05})});
  CHECK(r.etas.size() == 3);
  CHECK(r.state.frozen_boundary == 2);
}

TEST_CASE("a gradient that keeps shrinking counts as changing") {
  // Layer 0 shrinks 10x every interval while the others stay put: its eta is
  // 0.9 each time, the largest in the pool, so it is never frozen.
  auto state = make_state(4, 50);
  auto window = make_window(4, 0);
  double g0 = 1.0;
  for (int i = 0; i < 5; ++i) {
    auto r = interval_tick(state, window, std::vector{scalar_grads(0, {g0, 1.0, 1.0, 1.0})});
    if (r.decided) CHECK(r.etas[0] == doctest::Approx(0.9));
    state = r.state;
    window = r.window;
    g0 /= 10.0;
  }
  CHECK(state.frozen_boundary == 0);
}

TEST_CASE("identical gradient streams never freeze") {
  auto state = make_state(6, 50);
  auto window = make_window(6, 0);
  for (int i = 0; i < 10; ++i) {
    auto r = interval_tick(state, window,
                           std::vector{scalar_grads(0, {0.3, 1.0, 2.0, 0.1, 5.0, 0.7})});
    state = r.state;
    window = r.window;
  }
  CHECK(state.frozen_boundary == 0);
  CHECK(state.history.size() == 9);
}

TEST_CASE("repeated ticks keep the frozen prefix growing monotonically") {
  std::mt19937_64 rng(25);
  for (int t = 0; t < 100; ++t) {
    const std::size_t layers = uniform_size(rng, 2, 10);
    auto state = make_state(layers, 50);
    auto window = make_window(layers, 0);
    std::size_t last = 0;
    for (int i = 0; i < 12; ++i) {
      std::vector<double> v(layers - state.frozen_boundary);
      for (auto& x : v) x = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
      auto r = interval_tick(state, window, std::vector{scalar_grads(state.frozen_boundary, v)});
      state = r.state;
      window = r.window;
      CHECK(state.frozen_boundary >= last);
      CHECK(state.frozen_boundary < layers);
      last = state.frozen_boundary;
    }
  }
}

}
