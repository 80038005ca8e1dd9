// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run directory layout:
//
//   run.json                         raw run data (config, interval rows, summary)
//   intervals.csv                    one row per evaluation interval
//   summary.json                     final summary
//   svcca_vs_online.csv              ideal vs online frozen counts per interval
//   checkpoints/ckpt_<i>_layer_<j>.bin   probe activations of layer j after interval i
//   reference/checkpoints/...        same, for the full fine-tuning reference run
//
// Checkpoint files hold one cache record per probe sample (original_index is
// the probe row, depth is j + 1).

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "layerfreeze/svcca.hpp"
#include "layerfreeze/trainer.hpp"

namespace lf::harness {

inline constexpr const char* kIntervalsHeader =
    "interval,epoch,frozen_boundary,next_boundary,iterations,train_loss,eval_accuracy,"
    "forward_flops,backward_flops,cache_hits,cache_writes,simulated_time,caching";
inline constexpr const char* kOracleHeader =
    "interval,ideal_frozen,online_frozen,abs_diff,within_one";

struct OracleRow {
  std::size_t interval = 0;
  std::size_t ideal = 0;
  std::size_t online = 0;
};

/// Pairs the online boundary after each interval with the ideal count.
std::vector<OracleRow> compare_to_ideal(const std::vector<IntervalRow>& rows,
                                        const svcca::IdealSchedule& ideal);
/// Fraction of rows where online and ideal differ by at most `tolerance`.
double tracking_fraction(const std::vector<OracleRow>& rows, std::size_t tolerance = 1);

/// Ideal schedule of a run that collected checkpoints: every checkpoint is
/// scored against the last one.
svcca::IdealSchedule ideal_from_checkpoints(const std::vector<std::vector<Matrix>>& checkpoints,
                                            double threshold, double variance_keep);

std::string intervals_csv(const std::vector<IntervalRow>& rows);
std::string oracle_csv(const std::vector<OracleRow>& rows);
std::string summary_json(const RunConfig& cfg, const RunSummary& summary);

void write_checkpoints(const std::filesystem::path& dir,
                       const std::vector<std::vector<Matrix>>& checkpoints);
/// Loads checkpoint dumps, ordered by interval then layer.
std::vector<std::vector<Matrix>> read_checkpoints(const std::filesystem::path& dir);

/// Writes run.json and the checkpoint dumps, then renders the reports.
void write_run(const std::filesystem::path& dir, const RunReport& run,
               const RunReport* reference = nullptr);
/// Regenerates intervals.csv, summary.json and svcca_vs_online.csv from the
/// raw data in `dir`. Throws std::runtime_error when run.json is missing.
void render_reports(const std::filesystem::path& dir);
/// Recomputes svcca_vs_online.csv from the checkpoint dumps only.
std::vector<OracleRow> render_oracle(const std::filesystem::path& dir);

}  // namespace lf::harness
