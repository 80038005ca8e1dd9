// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/freezer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lf::freeze {

double percentile(std::span<const double> values, double n, PercentileMethod method) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(n > 0.0 && n < 100.0)) throw std::invalid_argument("percentile must lie in (0, 100)");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  if (method == PercentileMethod::NearestRank) {
    const auto rank = static_cast<std::size_t>(std::ceil(n / 100.0 * static_cast<double>(v.size())));
    return v[std::max<std::size_t>(rank, 1) - 1];
  }
  const double pos = n / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

double eta(double norm_prev, double norm_cur) {
  if (norm_prev < 0.0 || norm_cur < 0.0) throw std::invalid_argument("norms must be >= 0");
  if (norm_prev == 0.0) return 0.0;
  return std::abs(norm_prev - norm_cur) / norm_prev;
}

FreezeState make_state(std::size_t num_layers, double pct, PercentileMethod method) {
  if (!(pct > 0.0 && pct < 100.0)) throw std::invalid_argument("percentile must lie in (0, 100)");
  FreezeState s;
  s.num_layers = num_layers;
  s.percentile = pct;
  s.method = method;
  return s;
}

std::size_t freeze_count(std::span<const double> etas, double pct, PercentileMethod method) {
  if (etas.empty()) throw std::invalid_argument("decide: no active layers");
  if (etas.size() < 2) return 0;
  const double threshold = percentile(etas, pct, method);
  std::size_t frozen = 0;
  // The last active layer always stays trainable.
  while (frozen + 1 < etas.size() && etas[frozen] < threshold) ++frozen;
  return frozen;
}

FreezeState decide(FreezeState state, std::span<const double> etas) {
  if (etas.size() != state.active_count()) {
    throw std::invalid_argument("decide: got " + std::to_string(etas.size()) + " etas for " +
                                std::to_string(state.active_count()) + " active layers");
  }
  state.frozen_boundary += freeze_count(etas, state.percentile, state.method);
  return state;
}

GradWindow make_window(std::size_t num_layers, std::size_t first_active, bool include_bias) {
  if (first_active > num_layers) throw std::invalid_argument("first active layer out of range");
  GradWindow w;
  w.num_layers = num_layers;
  w.first_active = first_active;
  w.include_bias = include_bias;
  w.accumulated.resize(num_layers - first_active);
  w.previous_norms.assign(num_layers, 0.0);
  return w;
}

GradWindow accumulate(GradWindow window, const nn::GradientSet& grads) {
  if (grads.first_layer != window.first_active ||
      grads.first_layer + grads.layers.size() != window.num_layers) {
    throw std::invalid_argument("accumulate: gradient layers [" +
                                std::to_string(grads.first_layer) + ", " +
                                std::to_string(grads.first_layer + grads.layers.size()) +
                                ") do not match active layers [" +
                                std::to_string(window.first_active) + ", " +
                                std::to_string(window.num_layers) + ")");
  }
  for (std::size_t i = 0; i < grads.layers.size(); ++i) {
    const nn::LayerGrad& lg = grads.layers[i];
    const std::size_t n = lg.weights.size() + (window.include_bias ? lg.bias.size() : 0);
    std::vector<double>& acc = window.accumulated[i];
    if (acc.empty()) {
      acc.assign(n, 0.0);
    } else if (acc.size() != n) {
      throw std::invalid_argument("accumulate: layer " +
                                  std::to_string(window.first_active + i) + " changed size");
    }
    auto w = lg.weights.values();
    for (std::size_t k = 0; k < w.size(); ++k) acc[k] += w[k];
    if (window.include_bias) {
      for (std::size_t k = 0; k < lg.bias.size(); ++k) acc[w.size() + k] += lg.bias[k];
    }
  }
  ++window.samples;
  return window;
}

std::vector<double> current_norms(const GradWindow& window) {
  std::vector<double> norms;
  norms.reserve(window.accumulated.size());
  for (const auto& acc : window.accumulated) {
    double s = 0.0;
    for (double v : acc) s += v * v;
    norms.push_back(std::sqrt(s));
  }
  return norms;
}

TickResult interval_tick(FreezeState state, GradWindow window) {
  if (window.first_active != state.frozen_boundary || window.num_layers != state.num_layers) {
    throw std::invalid_argument("interval_tick: window and state disagree on active layers");
  }
  const std::vector<double> norms = current_norms(window);
  TickResult r;
  ++window.interval;
  if (window.has_previous) {
    r.etas.reserve(norms.size());
    for (std::size_t i = 0; i < norms.size(); ++i) {
      r.etas.push_back(eta(window.previous_norms[window.first_active + i], norms[i]));
    }
    state = decide(std::move(state), r.etas);
    state.history.push_back({window.interval, state.frozen_boundary});
    r.decided = true;
  }
  for (std::size_t i = 0; i < norms.size(); ++i) {
    window.previous_norms[window.first_active + i] = norms[i];
  }
  window.has_previous = true;
  window.first_active = state.frozen_boundary;
  window.accumulated.assign(window.num_layers - window.first_active, {});
  window.samples = 0;
  r.state = std::move(state);
  r.window = std::move(window);
  return r;
}

TickResult interval_tick(FreezeState state, GradWindow window,
                         std::span<const nn::GradientSet> stream) {
  for (const auto& g : stream) window = accumulate(std::move(window), g);
  return interval_tick(std::move(state), std::move(window));
}

}  // namespace lf::freeze
