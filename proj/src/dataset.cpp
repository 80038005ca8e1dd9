// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/dataset.hpp"

#include <cmath>
#include <random>

namespace lf::harness {

namespace {

std::vector<double> random_direction(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& e : v) {
      e = n01(rng);
      norm += e * e;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& e : v) e /= norm;
  return v;
}

Dataset sample(const std::vector<std::vector<double>>& centres, std::size_t n, double noise,
               std::mt19937_64& rng) {
  const std::size_t dim = centres.front().size();
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, centres.size() - 1);
  std::vector<double> xs(n * dim);
  Dataset d;
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = pick(rng);
    d.y[i] = c;
    for (std::size_t k = 0; k < dim; ++k) xs[i * dim + k] = centres[c][k] + noise * n01(rng);
  }
  d.x = Matrix(n, dim, std::move(xs));
  return d;
}

}  // namespace

Task make_task(const DataConfig& data, std::uint64_t seed, std::size_t probe_size) {
  std::mt19937_64 rng(seed ^ 0x5eedda7aULL);
  std::vector<std::vector<double>> base(data.n_classes), shifted(data.n_classes);
  for (std::size_t c = 0; c < data.n_classes; ++c) {
    base[c] = random_direction(data.n_features, rng);
    for (auto& e : base[c]) e *= data.separation;
  }
  for (std::size_t c = 0; c < data.n_classes; ++c) {
    auto drift = random_direction(data.n_features, rng);
    shifted[c] = base[c];
    for (std::size_t k = 0; k < data.n_features; ++k) {
      shifted[c][k] += data.shift * data.separation * drift[k];
    }
  }
  Task t;
  if (data.pretrain_epochs > 0) t.pretrain = sample(base, data.pretrain_samples, data.noise, rng);
  t.train = sample(shifted, data.n_train, data.noise, rng);
  t.test = sample(shifted, data.n_test, data.noise, rng);
  t.probe = sample(shifted, probe_size, data.noise, rng);
  return t;
}

}  // namespace lf::harness
