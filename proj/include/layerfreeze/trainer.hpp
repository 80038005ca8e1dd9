// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fine-tuning loop with online freezing and activation caching.
//
// Every iteration: fetch cached activations for the batch (when caching is
// active), advance each row from its cached depth to the frozen boundary, run
// the active layers and the head, backpropagate down to the boundary,
// accumulate gradients for the freezing test and take an SGD step. Every
// evaluation interval the freezing test may move the boundary. Every epoch the
// shuffle is registered with the storage manager and the caching trade-off is
// re-evaluated.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "layerfreeze/config.hpp"
#include "layerfreeze/dataset.hpp"
#include "layerfreeze/nn.hpp"

namespace lf::harness {

/// Learning rate at `iteration` of `total_iterations`. Stepped schedules
/// multiply by `decay_factor` once per decay point already passed.
double lr_at(LrSchedule schedule, std::size_t iteration, std::size_t total_iterations,
             double base_lr, double decay_factor = 0.1,
             const std::vector<double>& decay_points = {0.3, 0.6});
double lr_at(const TrainConfig& train, std::size_t iteration, std::size_t total_iterations);

struct IntervalRow {
  std::size_t interval = 0;         // 1-based, counted across epochs
  std::size_t epoch = 0;            // 1-based
  std::size_t frozen_boundary = 0;  // in force during the interval
  std::size_t next_boundary = 0;    // after the interval's freezing test
  std::size_t iterations = 0;
  std::size_t samples = 0;
  double train_loss = 0.0;          // mean batch loss
  double eval_accuracy = 0.0;       // test accuracy at the end of the interval
  std::uint64_t forward_flops = 0;
  std::uint64_t backward_flops = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_writes = 0;
  double simulated_time = 0.0;      // seconds
  bool caching = false;
};

struct RunSummary {
  double best_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::size_t final_boundary = 0;
  std::uint64_t forward_flops = 0;
  std::uint64_t backward_flops = 0;
  std::uint64_t full_forward_flops = 0;   // same iterations without freezing or caching
  std::uint64_t full_backward_flops = 0;
  double simulated_time = 0.0;
  double full_simulated_time = 0.0;
  double flop_speedup = 1.0;              // full total / this total
  double backward_reduction = 1.0;        // full backward / this backward
  double time_speedup = 1.0;              // full simulated time / this
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t cache_writes = 0;
  std::uint64_t cache_dropped = 0;
  std::uint64_t cache_evictions = 0;
};

struct RunReport {
  RunConfig config;
  std::vector<IntervalRow> rows;
  RunSummary summary;
  nn::Model model;
  /// Probe activations of every layer at the end of each interval
  /// ([interval][layer], probe_size x width); filled when requested.
  std::vector<std::vector<Matrix>> checkpoints;
};

struct TrainOptions {
  bool collect_checkpoints = false;
  std::filesystem::path out;  // default parent of the cache directory
};

/// Outputs of layers 0..L-1 on `probe`.
std::vector<Matrix> probe_activations(const nn::Model& model, const Matrix& probe);

/// The network fine-tuning starts from: trained on the pre-training set when
/// there is one, always with a freshly initialised head.
nn::Model initial_model(const RunConfig& cfg, const Task& task);

RunReport train(const RunConfig& cfg, const Task& task, const TrainOptions& opts = {});
RunReport train(const RunConfig& cfg, const TrainOptions& opts = {});

}  // namespace lf::harness
