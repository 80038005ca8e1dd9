// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/report.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "layerfreeze/cache.hpp"

namespace lf::harness {

namespace {

using nlohmann::json;

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing run data: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json row_json(const IntervalRow& r) {
  return json{{"interval", r.interval},
              {"epoch", r.epoch},
              {"frozen_boundary", r.frozen_boundary},
              {"next_boundary", r.next_boundary},
              {"iterations", r.iterations},
              {"samples", r.samples},
              {"train_loss", r.train_loss},
              {"eval_accuracy", r.eval_accuracy},
              {"forward_flops", r.forward_flops},
              {"backward_flops", r.backward_flops},
              {"cache_hits", r.cache_hits},
              {"cache_writes", r.cache_writes},
              {"simulated_time", r.simulated_time},
              {"caching", r.caching}};
}

IntervalRow row_from(const json& j) {
  IntervalRow r;
  r.interval = j.at("interval");
  r.epoch = j.at("epoch");
  r.frozen_boundary = j.at("frozen_boundary");
  r.next_boundary = j.at("next_boundary");
  r.iterations = j.at("iterations");
  r.samples = j.at("samples");
  r.train_loss = j.at("train_loss");
  r.eval_accuracy = j.at("eval_accuracy");
  r.forward_flops = j.at("forward_flops");
  r.backward_flops = j.at("backward_flops");
  r.cache_hits = j.at("cache_hits");
  r.cache_writes = j.at("cache_writes");
  r.simulated_time = j.at("simulated_time");
  r.caching = j.at("caching");
  return r;
}

json summary_obj(const RunSummary& s) {
  return json{{"best_accuracy", s.best_accuracy},
              {"final_accuracy", s.final_accuracy},
              {"final_boundary", s.final_boundary},
              {"forward_flops", s.forward_flops},
              {"backward_flops", s.backward_flops},
              {"total_flops", s.forward_flops + s.backward_flops},
              {"full_forward_flops", s.full_forward_flops},
              {"full_backward_flops", s.full_backward_flops},
              {"simulated_time", s.simulated_time},
              {"full_simulated_time", s.full_simulated_time},
              {"flop_speedup", s.flop_speedup},
              {"backward_reduction", s.backward_reduction},
              {"speedup_vs_full", s.time_speedup},
              {"cache_hits", s.cache_hits},
              {"cache_misses", s.cache_misses},
              {"cache_writes", s.cache_writes},
              {"cache_dropped", s.cache_dropped},
              {"cache_evictions", s.cache_evictions}};
}

RunSummary summary_from(const json& j) {
  RunSummary s;
  s.best_accuracy = j.at("best_accuracy");
  s.final_accuracy = j.at("final_accuracy");
  s.final_boundary = j.at("final_boundary");
  s.forward_flops = j.at("forward_flops");
  s.backward_flops = j.at("backward_flops");
  s.full_forward_flops = j.at("full_forward_flops");
  s.full_backward_flops = j.at("full_backward_flops");
  s.simulated_time = j.at("simulated_time");
  s.full_simulated_time = j.at("full_simulated_time");
  s.flop_speedup = j.at("flop_speedup");
  s.backward_reduction = j.at("backward_reduction");
  s.time_speedup = j.at("speedup_vs_full");
  s.cache_hits = j.at("cache_hits");
  s.cache_misses = j.at("cache_misses");
  s.cache_writes = j.at("cache_writes");
  s.cache_dropped = j.at("cache_dropped");
  s.cache_evictions = j.at("cache_evictions");
  return s;
}

}  // namespace

std::vector<OracleRow> compare_to_ideal(const std::vector<IntervalRow>& rows,
                                        const svcca::IdealSchedule& ideal) {
  if (rows.size() != ideal.frozen_counts.size()) {
    throw std::invalid_argument("ideal schedule has " + std::to_string(ideal.frozen_counts.size()) +
                                " checkpoints for " + std::to_string(rows.size()) + " intervals");
  }
  std::vector<OracleRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({rows[i].interval, ideal.frozen_counts[i], rows[i].next_boundary});
  }
  return out;
}

double tracking_fraction(const std::vector<OracleRow>& rows, std::size_t tolerance) {
  if (rows.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& r : rows) {
    const std::size_t d = r.ideal > r.online ? r.ideal - r.online : r.online - r.ideal;
    ok += d <= tolerance;
  }
  return static_cast<double>(ok) / static_cast<double>(rows.size());
}

svcca::IdealSchedule ideal_from_checkpoints(const std::vector<std::vector<Matrix>>& checkpoints,
                                            double threshold, double variance_keep) {
  if (checkpoints.empty()) throw std::invalid_argument("no checkpoints to score");
  return svcca::ideal_schedule(checkpoints, checkpoints.back(), threshold, variance_keep);
}

std::string intervals_csv(const std::vector<IntervalRow>& rows) {
  std::string out = std::string(kIntervalsHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.interval) + ',' + std::to_string(r.epoch) + ',' +
           std::to_string(r.frozen_boundary) + ',' + std::to_string(r.next_boundary) + ',' +
           std::to_string(r.iterations) + ',' + num(r.train_loss) + ',' + num(r.eval_accuracy) +
           ',' + std::to_string(r.forward_flops) + ',' + std::to_string(r.backward_flops) + ',' +
           std::to_string(r.cache_hits) + ',' + std::to_string(r.cache_writes) + ',' +
           num(r.simulated_time) + ',' + (r.caching ? "1" : "0") + "\n";
  }
  return out;
}

std::string oracle_csv(const std::vector<OracleRow>& rows) {
  std::string out = std::string(kOracleHeader) + "\n";
  for (const auto& r : rows) {
    const std::size_t d = r.ideal > r.online ? r.ideal - r.online : r.online - r.ideal;
    out += std::to_string(r.interval) + ',' + std::to_string(r.ideal) + ',' +
           std::to_string(r.online) + ',' + std::to_string(d) + ',' + (d <= 1 ? "1" : "0") + "\n";
  }
  return out;
}

std::string summary_json(const RunConfig& cfg, const RunSummary& summary) {
  json j = summary_obj(summary);
  j["seed"] = cfg.seed;
  j["freeze_mode"] = to_string(cfg.freeze.mode);
  j["cache_enabled"] = cfg.cache.enabled;
  return j.dump(2) + "\n";
}

void write_checkpoints(const std::filesystem::path& dir,
                       const std::vector<std::vector<Matrix>>& checkpoints) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    for (std::size_t j = 0; j < checkpoints[i].size(); ++j) {
      const Matrix& m = checkpoints[i][j];
      std::vector<cache::CacheRecord> recs(m.rows());
      for (std::size_t r = 0; r < m.rows(); ++r) {
        recs[r].original_index = r;
        recs[r].depth = static_cast<std::uint16_t>(j + 1);
        auto row = m.row(r);
        recs[r].payload.assign(row.begin(), row.end());
      }
      cache::write_records_file(
          dir / ("ckpt_" + std::to_string(i + 1) + "_layer_" + std::to_string(j) + ".bin"), recs);
    }
  }
}

std::vector<std::vector<Matrix>> read_checkpoints(const std::filesystem::path& dir) {
  std::map<std::size_t, std::map<std::size_t, std::filesystem::path>> files;
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("no checkpoint directory " + dir.string());
  }
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    std::size_t i = 0, j = 0;
    if (std::sscanf(name.c_str(), "ckpt_%zu_layer_%zu.bin", &i, &j) == 2) files[i][j] = e.path();
  }
  std::vector<std::vector<Matrix>> out;
  std::size_t expect = 1;
  for (const auto& [i, layers] : files) {
    if (i != expect++) throw std::runtime_error("checkpoint " + std::to_string(expect - 1) + " missing");
    std::vector<Matrix> ms;
    std::size_t expect_layer = 0;
    for (const auto& [j, path] : layers) {
      if (j != expect_layer++) {
        throw std::runtime_error("checkpoint " + std::to_string(i) + " lacks layer " +
                                 std::to_string(expect_layer - 1));
      }
      auto recs = cache::read_records_file(path);
      if (recs.empty()) throw std::runtime_error("empty checkpoint file " + path.string());
      const std::size_t dim = recs.front().payload.size();
      std::vector<double> vals;
      for (const auto& r : recs) {
        if (r.payload.size() != dim) throw std::runtime_error("ragged checkpoint " + path.string());
        vals.insert(vals.end(), r.payload.begin(), r.payload.end());
      }
      ms.emplace_back(recs.size(), dim, std::move(vals));
    }
    out.push_back(std::move(ms));
  }
  return out;
}

void write_run(const std::filesystem::path& dir, const RunReport& run, const RunReport* reference) {
  std::filesystem::create_directories(dir);
  json rows = json::array();
  for (const auto& r : run.rows) rows.push_back(row_json(r));
  json j{{"config", dump_config(run.config)}, {"rows", rows}, {"summary", summary_obj(run.summary)}};
  write_text(dir / "run.json", j.dump(1) + "\n");
  if (!run.checkpoints.empty()) write_checkpoints(dir / "checkpoints", run.checkpoints);
  if (reference) write_checkpoints(dir / "reference" / "checkpoints", reference->checkpoints);
  render_reports(dir);
}

std::vector<OracleRow> render_oracle(const std::filesystem::path& dir) {
  const json j = json::parse(read_text(dir / "run.json"));
  RunConfig cfg;
  parse_config(cfg, j.at("config").get<std::string>(), (dir / "run.json").string());
  std::vector<IntervalRow> rows;
  for (const auto& r : j.at("rows")) rows.push_back(row_from(r));
  std::vector<OracleRow> oracle;
  const auto ref = dir / "reference" / "checkpoints";
  if (!rows.empty() && std::filesystem::is_directory(ref)) {
    auto ideal = ideal_from_checkpoints(read_checkpoints(ref), cfg.svcca.threshold,
                                        cfg.svcca.variance_keep);
    oracle = compare_to_ideal(rows, ideal);
  }
  write_text(dir / "svcca_vs_online.csv", oracle_csv(oracle));
  return oracle;
}

void render_reports(const std::filesystem::path& dir) {
  const json j = json::parse(read_text(dir / "run.json"));
  RunConfig cfg;
  parse_config(cfg, j.at("config").get<std::string>(), (dir / "run.json").string());
  std::vector<IntervalRow> rows;
  for (const auto& r : j.at("rows")) rows.push_back(row_from(r));
  write_text(dir / "intervals.csv", intervals_csv(rows));
  write_text(dir / "summary.json", summary_json(cfg, summary_from(j.at("summary"))));
  render_oracle(dir);
}

}  // namespace lf::harness
