// SPDX-License-Identifier: Apache-2.0
#pragma once

// Online freezing decisions from accumulated gradients.
//
// Gradients of every active (unfrozen) layer are summed over an evaluation
// interval. At the end of each interval the L2 norm of each layer's sum is
// compared with the previous interval's norm through the gradient-norm change
//
//   eta_l = | ||D_{T-1,l}|| - ||D_{T,l}|| | / ||D_{T-1,l}||
//
// and the active layers are scanned in order: a layer freezes while its eta is
// strictly below the N-th percentile of the active etas, and the scan stops at
// the first layer that fails. Freezing therefore only ever extends a prefix.

#include <cstddef>
#include <span>
#include <vector>

#include "layerfreeze/nn.hpp"

namespace lf::freeze {

enum class PercentileMethod {
  Linear,       // interpolate between order statistics (numpy's default)
  NearestRank,  // smallest value with at least N% of samples at or below it
};

/// N-th percentile (0 < N < 100) of a non-empty sample.
double percentile(std::span<const double> values, double n, PercentileMethod method);

/// Gradient-norm change. A zero previous norm yields 0: the layer is treated as
/// converged.
double eta(double norm_prev, double norm_cur);

struct Decision {
  std::size_t interval = 0;
  std::size_t boundary = 0;
};

struct FreezeState {
  std::size_t num_layers = 0;      // freezable layers (the head is never frozen)
  std::size_t frozen_boundary = 0; // layers [0, frozen_boundary) are frozen
  double percentile = 50.0;
  PercentileMethod method = PercentileMethod::Linear;
  std::vector<Decision> history;

  std::size_t active_count() const { return num_layers - frozen_boundary; }
};

FreezeState make_state(std::size_t num_layers, double percentile,
                       PercentileMethod method = PercentileMethod::Linear);

/// One freezing decision. `etas` lists the active layers in order. With fewer
/// than two active layers the state is returned unchanged, and the last layer
/// is never frozen by this test.
FreezeState decide(FreezeState state, std::span<const double> etas);

/// Number of leading layers one decide() call would freeze.
std::size_t freeze_count(std::span<const double> etas, double percentile,
                         PercentileMethod method);

struct GradWindow {
  std::size_t interval = 0;      // completed intervals
  std::size_t num_layers = 0;
  std::size_t first_active = 0;
  bool include_bias = true;
  std::size_t samples = 0;       // gradient sets accumulated in this interval
  std::vector<std::vector<double>> accumulated;  // one flattened sum per active layer
  std::vector<double> previous_norms;            // indexed by layer; valid if has_previous
  bool has_previous = false;
};

GradWindow make_window(std::size_t num_layers, std::size_t first_active, bool include_bias = true);

/// Adds one gradient set (which must cover exactly the active layers).
GradWindow accumulate(GradWindow window, const nn::GradientSet& grads);

/// L2 norms of the accumulated sums, one per active layer.
std::vector<double> current_norms(const GradWindow& window);

struct TickResult {
  FreezeState state;
  GradWindow window;
  std::vector<double> etas;  // empty on the first interval
  bool decided = false;
};

/// Closes an evaluation interval: the first interval only records norms; later
/// intervals compute etas, decide, then roll the window so the current norms
/// become the previous ones and accumulation restarts for the active layers.
TickResult interval_tick(FreezeState state, GradWindow window);
TickResult interval_tick(FreezeState state, GradWindow window,
                         std::span<const nn::GradientSet> stream);

}  // namespace lf::freeze
