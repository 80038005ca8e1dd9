// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic Gaussian-blob classification with a pre-training variant.
//
// Class centres sit on a sphere of radius `separation`. The pre-training set
// draws from those centres; the fine-tuning sets draw from centres displaced
// by `shift` along fixed random directions, so a pre-trained network starts
// close to, but not at, a solution.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "layerfreeze/config.hpp"
#include "layerfreeze/matrix.hpp"

namespace lf::harness {

struct Dataset {
  Matrix x;
  std::vector<std::size_t> y;

  std::size_t size() const { return y.size(); }
};

struct Task {
  Dataset pretrain;  // empty when pre-training is disabled
  Dataset train;
  Dataset test;
  Dataset probe;     // fixed inputs for checkpoint activations
};

Task make_task(const DataConfig& data, std::uint64_t seed, std::size_t probe_size);

}  // namespace lf::harness
