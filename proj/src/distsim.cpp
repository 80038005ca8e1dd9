// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/distsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lf::dist {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace

void ClusterConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("cluster needs at least one worker");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  if (!(latency >= 0.0)) throw std::invalid_argument("latency must be >= 0");
  if (!(cost_rate >= 0.0)) throw std::invalid_argument("cost rate must be >= 0");
}

void ModelProfile::validate() const {
  if (num_layers < 1) throw std::invalid_argument("profile needs at least one layer");
  if (bucket_bytes == 0) throw std::invalid_argument("bucket size must be positive");
  if (grad_bytes_per_layer * num_layers + head_grad_bytes == 0) {
    throw std::invalid_argument("profile has no gradient bytes");
  }
}

std::size_t ModelProfile::active_layers(std::size_t boundary) const {
  if (boundary > num_layers) {
    throw std::invalid_argument("boundary " + std::to_string(boundary) + " exceeds " +
                                std::to_string(num_layers) + " layers");
  }
  return num_layers - boundary;
}

double ModelProfile::t_comp(std::size_t active, double per_worker_batch) const {
  const double per_sample = static_cast<double>(num_layers) * compute.forward_per_sample_layer +
                            static_cast<double>(active) * compute.backward_per_sample_layer +
                            compute.head_per_sample;
  return compute.fixed + per_worker_batch * per_sample;
}

double t_comm(std::size_t k, double bucket_bytes, std::size_t workers, double bandwidth,
              double latency) {
  if (workers < 1) throw std::invalid_argument("t_comm: need at least one worker");
  const double p = static_cast<double>(workers);
  return static_cast<double>(k) *
         (latency * (p - 1.0) + 2.0 * bucket_bytes * (p - 1.0) / (p * bandwidth));
}

double t_comm_refined(std::size_t k, double bucket_bytes, double last_bucket_bytes,
                      std::size_t workers, double bandwidth, double latency) {
  if (k == 0) return 0.0;
  return t_comm(k - 1, bucket_bytes, workers, bandwidth, latency) +
         t_comm(1, last_bucket_bytes, workers, bandwidth, latency);
}

Buckets buckets_at(const ModelProfile& profile, std::size_t boundary) {
  Buckets out;
  out.b = profile.bucket_bytes;
  out.total = profile.active_layers(boundary) * profile.grad_bytes_per_layer +
              profile.head_grad_bytes;
  if (out.total == 0) return out;
  out.k = static_cast<std::size_t>(ceil_div(out.total, out.b));
  out.b_hat = out.total - (out.k - 1) * out.b;
  return out;
}

EpochTime epoch_time(std::uint64_t dataset_size, std::uint64_t total_batch, double t_comp,
                     double t_comm_s) {
  if (total_batch < 1) throw std::invalid_argument("epoch_time: batch size must be >= 1");
  EpochTime e;
  e.iterations = ceil_div(dataset_size, total_batch);
  e.seconds = static_cast<double>(e.iterations) * std::max(t_comp, t_comm_s);
  return e;
}

double epoch_cost(double epoch_seconds, std::size_t workers, double cost_rate) {
  return epoch_seconds * static_cast<double>(workers) * cost_rate;
}

std::uint64_t memory_required(std::size_t active_layers, std::uint64_t per_worker_batch,
                              const ModelProfile& profile) {
  return profile.weight_bytes + active_layers * profile.grad_bytes_per_layer +
         profile.head_grad_bytes +
         per_worker_batch * (active_layers * profile.act_bytes_per_sample_layer +
                             profile.head_act_bytes_per_sample);
}

std::uint64_t max_batch(std::size_t active_layers, const ModelProfile& profile,
                        std::uint64_t budget) {
  const std::uint64_t fixed = memory_required(active_layers, 0, profile);
  if (fixed > budget) return 0;
  const std::uint64_t per_sample =
      active_layers * profile.act_bytes_per_sample_layer + profile.head_act_bytes_per_sample;
  if (per_sample == 0) return std::numeric_limits<std::uint32_t>::max();
  return (budget - fixed) / per_sample;
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Full: return "full";
    case Mode::Efficiency: return "efficiency";
    case Mode::Performance: return "performance";
  }
  return "?";
}

void PlanInputs::validate() const {
  cluster.validate();
  profile.validate();
  if (dataset_size == 0) throw std::invalid_argument("dataset size must be positive");
  if (initial_per_worker == 0) throw std::invalid_argument("initial batch must be positive");
  if (max_batch(profile.num_layers, profile, cluster.memory_budget) < initial_per_worker) {
    throw InfeasiblePlan("initial per-worker batch " + std::to_string(initial_per_worker) +
                         " does not fit the memory budget");
  }
}

bool fits(const PlanInputs& in, std::size_t boundary, std::size_t workers,
          std::uint64_t total_batch) {
  const std::uint64_t busiest = ceil_div(total_batch, workers);
  return memory_required(in.profile.active_layers(boundary), busiest, in.profile) <=
         in.cluster.memory_budget;
}

PackingPlan evaluate(Mode mode, const PlanInputs& in, std::size_t boundary, std::size_t workers,
                     std::uint64_t total_batch) {
  if (workers < 1 || total_batch < workers) {
    throw std::invalid_argument("evaluate: need 1 <= workers <= total batch");
  }
  PackingPlan plan;
  plan.mode = mode;
  plan.boundary = boundary;
  plan.workers = workers;
  plan.total_batch = total_batch;
  plan.per_worker_batch = ceil_div(total_batch, workers);

  const std::size_t active = in.profile.active_layers(boundary);
  const Buckets bk = buckets_at(in.profile, boundary);
  plan.comm_bytes = bk.total;
  plan.t_comp = in.profile.t_comp(
      active, static_cast<double>(total_batch) / static_cast<double>(workers));
  plan.t_comm = in.profile.refined_last_bucket
                    ? t_comm_refined(bk.k, static_cast<double>(bk.b),
                                     static_cast<double>(bk.b_hat), workers,
                                     in.cluster.bandwidth, in.cluster.latency)
                    : t_comm(bk.k, static_cast<double>(bk.b), workers, in.cluster.bandwidth,
                             in.cluster.latency);
  plan.t_iter = std::max(plan.t_comp, plan.t_comm);
  const EpochTime e = epoch_time(in.dataset_size, total_batch, plan.t_comp, plan.t_comm);
  plan.iterations = e.iterations;
  plan.epoch_time = e.seconds;
  plan.cost = epoch_cost(plan.epoch_time, workers, in.cluster.cost_rate);
  return plan;
}

PackingPlan plan_full(const PlanInputs& in, std::size_t boundary) {
  return evaluate(Mode::Full, in, boundary, in.cluster.workers, in.initial_total());
}

PackingPlan plan_efficiency(const PlanInputs& in, std::size_t boundary) {
  const std::uint64_t b = in.initial_total();
  const std::uint64_t b_l =
      max_batch(in.profile.active_layers(boundary), in.profile, in.cluster.memory_budget);
  if (b_l < 1) {
    throw InfeasiblePlan("no per-worker batch fits memory at boundary " + std::to_string(boundary));
  }
  const auto workers = static_cast<std::size_t>(
      std::min<std::uint64_t>(ceil_div(b, b_l), in.cluster.workers));
  return evaluate(Mode::Efficiency, in, boundary, workers, b);
}

PackingPlan plan_performance(const PlanInputs& in, std::size_t boundary,
                             std::optional<std::uint64_t> max_total_batch) {
  const std::size_t p = in.cluster.workers;
  const std::uint64_t b0 = in.initial_per_worker;
  std::uint64_t hi =
      max_batch(in.profile.active_layers(boundary), in.profile, in.cluster.memory_budget);
  if (max_total_batch) {
    if (*max_total_batch < in.initial_total()) {
      throw std::invalid_argument("batch cap below the initial total batch");
    }
    hi = std::min<std::uint64_t>(hi, *max_total_batch / p);
  }
  hi = std::max(hi, b0);

  // For a fixed iteration count the epoch time only grows with the batch, so
  // only the smallest batch reaching each count needs to be costed.
  const std::uint64_t n = in.dataset_size;
  const std::uint64_t fewest = ceil_div(n, hi * p);
  const std::uint64_t most = ceil_div(n, b0 * p);
  std::optional<PackingPlan> best;
  for (std::uint64_t iters = fewest; iters <= most; ++iters) {
    const std::uint64_t batch = std::max(b0, ceil_div(n, iters * p));
    if (batch > hi || ceil_div(n, batch * p) != iters) continue;
    PackingPlan cand = evaluate(Mode::Performance, in, boundary, p, batch * p);
    if (!best || cand.epoch_time < best->epoch_time) best = cand;
  }
  return *best;
}

Comparison compare(std::span<const PackingPlan> plans) {
  if (plans.empty()) throw std::invalid_argument("compare: no plans");
  Comparison c;
  std::size_t slowest = 0, priciest = 0;
  for (std::size_t i = 1; i < plans.size(); ++i) {
    if (plans[i].epoch_time < plans[c.fastest].epoch_time) c.fastest = i;
    if (plans[i].epoch_time > plans[slowest].epoch_time) slowest = i;
    if (plans[i].cost < plans[c.cheapest].cost) c.cheapest = i;
    if (plans[i].cost > plans[priciest].cost) priciest = i;
  }
  c.time_ratio = plans[c.fastest].epoch_time > 0.0
                     ? plans[slowest].epoch_time / plans[c.fastest].epoch_time
                     : 1.0;
  c.cost_ratio = plans[c.cheapest].cost > 0.0 ? plans[priciest].cost / plans[c.cheapest].cost : 1.0;
  return c;
}

}  // namespace lf::dist
