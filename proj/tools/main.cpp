// SPDX-License-Identifier: Apache-2.0
// layerfreeze: command-line front end.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "layerfreeze/config.hpp"
#include "layerfreeze/kernels.hpp"
#include "layerfreeze/report.hpp"
#include "layerfreeze/scenario.hpp"
#include "layerfreeze/trainer.hpp"

namespace {

using namespace lf;
using namespace lf::harness;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config file (key = value lines)");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&c](std::uint64_t s) { c.seed = s; c.seed_set = true; }, "Master seed");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--set", c.sets, "Override a config key (KEY=VALUE, repeatable)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& s : c.sets) apply_override(cfg, s);
  if (c.seed_set) cfg.seed = c.seed;
  cfg.validate();
  return cfg;
}

int cmd_train(const Common& c) {
  const RunConfig cfg = resolve(c);
  const auto t0 = std::chrono::steady_clock::now();
  const Task task = make_task(cfg.data, cfg.seed, cfg.svcca.probe_size);
  TrainOptions opts;
  opts.out = c.out;
  opts.collect_checkpoints = cfg.svcca.dump;
  RunReport run = train(cfg, task, opts);
  std::optional<RunReport> ref;
  if (cfg.svcca.reference) {
    RunConfig rc = cfg;
    rc.freeze.mode = FreezeMode::Off;
    rc.cache.enabled = false;
    TrainOptions ro;
    ro.collect_checkpoints = true;
    ref = train(rc, task, ro);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!c.out.empty()) write_run(c.out, run, ref ? &*ref : nullptr);
  const auto& s = run.summary;
  std::printf("final_accuracy=%.4f best_accuracy=%.4f final_boundary=%zu backward_reduction=%.3f "
              "speedup_vs_full=%.3f\n",
              s.final_accuracy, s.best_accuracy, s.final_boundary, s.backward_reduction,
              s.time_speedup);
  if (ref) {
    std::printf("reference_final_accuracy=%.4f\n", ref->summary.final_accuracy);
    if (!c.out.empty()) {
      std::printf("svcca_tracking=%.3f\n", tracking_fraction(render_oracle(c.out)));
    }
  }
  std::fprintf(stderr, "wall_seconds=%.3f\n", wall);
  return 0;
}

int cmd_simulate(const Common& c, const std::string& scenario_arg) {
  std::string name = scenario_arg;
  if (name.empty()) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    for (const auto& s : c.sets) apply_override(cfg, s);
    name = cfg.scenario.empty() ? "ag_news_64gpu" : cfg.scenario;
  }
  const Scenario sc = load_scenario(name);
  const ScenarioReport rep = run_scenario(sc);
  const std::string csv = scenario_csv(rep);
  std::cout << csv;
  for (const auto& t : rep.totals) {
    std::printf("total %s time=%.4f cost=%.4f\n", dist::to_string(t.mode), t.time, t.cost);
  }
  if (!c.out.empty()) {
    std::filesystem::create_directories(c.out);
    std::FILE* f = std::fopen((std::filesystem::path(c.out) / "plans.csv").c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write plans.csv in " + c.out);
    std::fputs(csv.c_str(), f);
    std::fclose(f);
  }
  return 0;
}

int cmd_svcca(const Common& c, bool print_scores) {
  if (c.out.empty()) throw CLI::ValidationError("--out", "svcca needs the run directory");
  const auto rows = render_oracle(c.out);
  if (print_scores) {
    const RunConfig cfg = resolve(c);
    const auto ref = std::filesystem::path(c.out) / "reference" / "checkpoints";
    const auto dir = std::filesystem::is_directory(ref)
                         ? ref
                         : std::filesystem::path(c.out) / "checkpoints";
    const auto ideal = ideal_from_checkpoints(read_checkpoints(dir), cfg.svcca.threshold,
                                              cfg.svcca.variance_keep);
    for (std::size_t i = 0; i < ideal.scores.size(); ++i) {
      std::printf("%zu", i + 1);
      for (double v : ideal.scores[i]) std::printf(",%.4f", v);
      std::printf(",%zu\n", ideal.frozen_counts[i]);
    }
  }
  std::printf("intervals=%zu within_one=%.3f\n", rows.size(), tracking_fraction(rows));
  return 0;
}

int cmd_report(const Common& c) {
  if (c.out.empty()) throw CLI::ValidationError("--out", "report needs the run directory");
  render_reports(c.out);
  std::printf("wrote intervals.csv, summary.json, svcca_vs_online.csv in %s\n", c.out.c_str());
  return 0;
}

Matrix random_matrix(std::size_t r, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(r * cols);
  for (auto& x : v) x = u(rng);
  return Matrix(r, cols, std::move(v));
}

int cmd_bench(std::size_t size, std::size_t reps) {
  std::mt19937_64 rng(7);
  const Matrix x = random_matrix(size, size, rng), w = random_matrix(size, size, rng);
  const std::vector<double> bias(size, 0.1);
  auto time = [&](auto&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < reps; ++i) f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
           static_cast<double>(reps);
  };
  const double ts = time([&] { return kernels::serial::dense_forward(x, w, bias); });
  const double tp = time([&] { return kernels::parallel::dense_forward(x, w, bias); });
  const bool same = bit_equal(kernels::serial::dense_forward(x, w, bias),
                              kernels::parallel::dense_forward(x, w, bias));
  std::printf("kernel,size,threads,serial_s,parallel_s,speedup,bit_equal\n");
  std::printf("dense_forward,%zu,%d,%.6g,%.6g,%.3f,%d\n", size, kernels::max_threads(), ts, tp,
              ts / tp, same ? 1 : 0);
  const double gs = time([&] { return kernels::serial::weight_grad(x, w); });
  const double gp = time([&] { return kernels::parallel::weight_grad(x, w); });
  std::printf("weight_grad,%zu,%d,%.6g,%.6g,%.3f,%d\n", size, kernels::max_threads(), gs, gp,
              gs / gp,
              bit_equal(kernels::serial::weight_grad(x, w), kernels::parallel::weight_grad(x, w)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layerfreeze: adaptive layer freezing, activation caching and packing simulation"};
  app.require_subcommand(1);
  Common common;
  std::string scenario;
  std::size_t bench_size = 256, bench_reps = 5;

  auto* train = app.add_subcommand("train", "Fine-tune with freezing and caching");
  add_common(train, common);
  auto* simulate = app.add_subcommand("simulate", "Plan a distributed scenario");
  add_common(simulate, common);
  simulate->add_option("--scenario", scenario, "Scenario file or bundled name");
  auto* svcca = app.add_subcommand("svcca", "Score checkpoints against the final model");
  add_common(svcca, common);
  bool print_scores = false;
  svcca->add_flag("--scores", print_scores, "Print per-layer scores for every checkpoint");
  auto* report = app.add_subcommand("report", "Render reports from a run directory");
  add_common(report, common);
  auto* bench = app.add_subcommand("bench", "Time serial against parallel kernels");
  add_common(bench, common);
  bench->add_option("--size", bench_size, "Square matrix size");
  bench->add_option("--reps", bench_reps, "Repetitions");
  auto* keys = app.add_subcommand("keys", "List config keys with defaults");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(common);
    if (*simulate) return cmd_simulate(common, scenario);
    if (*svcca) return cmd_svcca(common, print_scores);
    if (*report) return cmd_report(common);
    if (*bench) return cmd_bench(bench_size, bench_reps);
    if (*keys) {
      std::printf("| Key | Default | Meaning |\n|---|---|---|\n");
      for (const auto& k : config_keys()) {
        std::printf("| `%s` | `%s` | %s |\n", k.key.c_str(), k.default_value.c_str(),
                    k.description.c_str());
      }
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
