// SPDX-License-Identifier: Apache-2.0
#pragma once

// Analytic model of data-parallel fine-tuning with a frozen prefix.
//
// Per iteration, gradient communication of k buckets of b bytes over p workers
// costs  k * (alpha * (p - 1) + 2 * b * (p - 1) / (p * BW))  and overlaps with
// computation, so an iteration takes max(T_comp, T_comm) and an epoch of N
// samples at total batch BS takes ceil(N / BS) iterations.
//
// Freezing shrinks the gradient payload, the compute time and the per-sample
// memory footprint. Two planners turn the freed memory into either fewer
// workers at the same total batch (Efficiency, cheapest) or a larger per-worker
// batch on the same workers (Performance, fastest).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

namespace lf::dist {

struct ClusterConfig {
  std::size_t workers = 1;           // p
  double bandwidth = 1e9;            // BW, bytes/s
  double latency = 0.0;              // alpha, seconds per message
  double cost_rate = 1.0;            // c, currency per worker-second
  std::uint64_t memory_budget = 0;   // bytes per worker

  void validate() const;
};

/// T_comp(active, B) = fixed + B * (layers * forward + active * backward + head)
struct ComputeModel {
  double fixed = 0.0;
  double forward_per_sample_layer = 0.0;
  double backward_per_sample_layer = 0.0;
  double head_per_sample = 0.0;
};

struct ModelProfile {
  std::size_t num_layers = 12;
  std::uint64_t bucket_bytes = 25ULL << 20;     // b
  std::uint64_t grad_bytes_per_layer = 0;
  std::uint64_t head_grad_bytes = 0;
  std::uint64_t weight_bytes = 0;
  std::uint64_t act_bytes_per_sample_layer = 0;
  std::uint64_t head_act_bytes_per_sample = 0;
  ComputeModel compute;
  /// Charge the last bucket at its real size b_hat instead of b.
  bool refined_last_bucket = false;

  void validate() const;
  std::size_t active_layers(std::size_t boundary) const;
  /// Compute time for one iteration at a (possibly fractional) mean
  /// per-worker load.
  double t_comp(std::size_t active, double per_worker_batch) const;
};

/// Communication time of one iteration; zero for a single worker.
double t_comm(std::size_t k, double bucket_bytes, std::size_t workers, double bandwidth,
              double latency);
/// Variant where the last of the k buckets has b_hat bytes.
double t_comm_refined(std::size_t k, double bucket_bytes, double last_bucket_bytes,
                      std::size_t workers, double bandwidth, double latency);

struct Buckets {
  std::size_t k = 0;
  std::uint64_t b = 0;
  std::uint64_t b_hat = 0;
  std::uint64_t total = 0;
};

/// Gradient buckets left once layers [0, boundary) stop producing gradients.
/// Frozen bytes come off the tail bucket first: k = ceil(total / b) and the
/// last bucket holds the remainder.
Buckets buckets_at(const ModelProfile& profile, std::size_t boundary);

struct EpochTime {
  std::uint64_t iterations = 0;
  double seconds = 0.0;
};

EpochTime epoch_time(std::uint64_t dataset_size, std::uint64_t total_batch, double t_comp,
                     double t_comm);

double epoch_cost(double epoch_seconds, std::size_t workers, double cost_rate);

/// weights + active * grad + head_grad + B * (active * act + head_act)
std::uint64_t memory_required(std::size_t active_layers, std::uint64_t per_worker_batch,
                              const ModelProfile& profile);

/// Largest per-worker batch that fits the budget (0 if none does).
std::uint64_t max_batch(std::size_t active_layers, const ModelProfile& profile,
                        std::uint64_t budget);

enum class Mode { Full, Efficiency, Performance };
const char* to_string(Mode m);

struct PackingPlan {
  Mode mode = Mode::Full;
  std::size_t boundary = 0;
  std::size_t workers = 0;
  std::uint64_t per_worker_batch = 0;  // busiest worker
  std::uint64_t total_batch = 0;
  std::uint64_t iterations = 0;
  std::uint64_t comm_bytes = 0;        // gradient bytes per iteration per worker
  double t_comp = 0.0;
  double t_comm = 0.0;
  double t_iter = 0.0;
  double epoch_time = 0.0;
  double cost = 0.0;
  bool measured = false;               // t_iter came from a measurement
};

struct PlanInputs {
  std::uint64_t dataset_size = 0;      // N
  ClusterConfig cluster;
  ModelProfile profile;
  std::uint64_t initial_per_worker = 1;  // b_0

  std::uint64_t initial_total() const { return initial_per_worker * cluster.workers; }
  void validate() const;
};

class InfeasiblePlan : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Costs a concrete configuration. Compute time uses the mean per-worker load
/// total/workers; memory is checked against the busiest worker.
PackingPlan evaluate(Mode mode, const PlanInputs& in, std::size_t boundary, std::size_t workers,
                     std::uint64_t total_batch);
bool fits(const PlanInputs& in, std::size_t boundary, std::size_t workers,
          std::uint64_t total_batch);

PackingPlan plan_full(const PlanInputs& in, std::size_t boundary);

/// Fewest workers that hold the initial total batch once the per-worker batch
/// may grow to b_l, the memory limit at this boundary: p' = ceil(b / b_l).
PackingPlan plan_efficiency(const PlanInputs& in, std::size_t boundary);

/// Keeps all p workers and picks the per-worker batch in
/// [b_0, min(b_l, floor(cap / p))] with the shortest epoch. Candidates are the
/// smallest batches reaching each possible iteration count; ties go to fewer
/// iterations. Without rounding effects this is the largest batch that fits.
PackingPlan plan_performance(const PlanInputs& in, std::size_t boundary,
                             std::optional<std::uint64_t> max_total_batch = std::nullopt);

struct Comparison {
  std::size_t fastest = 0;     // index into the compared plans
  std::size_t cheapest = 0;
  double time_ratio = 1.0;     // slowest epoch time / fastest
  double cost_ratio = 1.0;     // most expensive / cheapest
};

Comparison compare(std::span<const PackingPlan> plans);

}  // namespace lf::dist
