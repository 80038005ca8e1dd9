// SPDX-License-Identifier: Apache-2.0
#pragma once

// Distributed fine-tuning scenarios: a cluster, a model profile and the frozen
// boundary of every epoch, planned under each requested packing mode.
//
// Format: `key = value` lines, `#` comments.
//   name, dataset_size, workers, bandwidth, latency, cost_rate, memory_budget,
//   initial_per_worker, max_total_batch, layers, bucket_bytes,
//   grad_bytes_per_layer, head_grad_bytes, weight_bytes,
//   act_bytes_per_sample_layer, head_act_bytes_per_sample, compute.fixed,
//   compute.forward, compute.backward, compute.head, refined_last_bucket,
//   boundaries (comma list, one per epoch), modes (comma list),
//   measured.<mode>.<boundary> (iteration seconds replacing the estimate).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "layerfreeze/distsim.hpp"

namespace lf::harness {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Scenario {
  std::string name;
  dist::PlanInputs inputs;
  std::optional<std::uint64_t> max_total_batch;
  std::vector<std::size_t> boundaries;
  std::vector<dist::Mode> modes;
  std::map<std::pair<dist::Mode, std::size_t>, double> measured;
};

Scenario parse_scenario(const std::string& text, const std::string& source = "scenario");
/// Loads a bundled scenario by name, or a scenario file by path.
Scenario load_scenario(const std::string& name_or_path);
std::vector<std::string> bundled_scenarios();
std::string bundled_scenario_text(const std::string& name);

/// Replaces the estimated iteration time with a measured one and re-costs.
dist::PackingPlan with_measured(dist::PackingPlan plan, double t_iter, double cost_rate);

struct ScenarioRow {
  std::size_t epoch = 0;  // 1-based
  dist::PackingPlan plan;
};

struct ModeTotal {
  dist::Mode mode = dist::Mode::Full;
  double time = 0.0;
  double cost = 0.0;
};

struct ScenarioReport {
  std::string name;
  std::vector<ScenarioRow> rows;
  std::vector<ModeTotal> totals;  // one per mode, in scenario order
};

ScenarioReport run_scenario(const Scenario& scenario);
dist::PackingPlan plan_for(dist::Mode mode, const Scenario& scenario, std::size_t boundary);

inline constexpr const char* kScenarioHeader =
    "epoch,mode,boundary,p,batch,per_worker,iters,t_comp,t_comm,t_iter,t_epoch,cost,measured";
std::string scenario_csv(const ScenarioReport& report);

}  // namespace lf::harness
