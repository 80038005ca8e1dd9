// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/scenario.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "layerfreeze/bundled_scenarios.hpp"

namespace lf::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
  double out = 0.0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ScenarioError("expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  const double d = to_double(v);
  if (d < 0.0 || d != static_cast<double>(static_cast<std::uint64_t>(d))) {
    throw ScenarioError("expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::uint64_t>(d);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

dist::Mode parse_mode(const std::string& v) {
  if (v == "full") return dist::Mode::Full;
  if (v == "efficiency") return dist::Mode::Efficiency;
  if (v == "performance") return dist::Mode::Performance;
  throw ScenarioError("unknown mode '" + v + "'");
}

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void apply(Scenario& s, const std::string& key, const std::string& v) {
  static const std::map<std::string, std::function<void(Scenario&, const std::string&)>> setters = {
      {"name", [](Scenario& s, const std::string& v) { s.name = v; }},
      {"dataset_size", [](Scenario& s, const std::string& v) { s.inputs.dataset_size = to_u64(v); }},
      {"workers", [](Scenario& s, const std::string& v) { s.inputs.cluster.workers = to_u64(v); }},
      {"bandwidth", [](Scenario& s, const std::string& v) { s.inputs.cluster.bandwidth = to_double(v); }},
      {"latency", [](Scenario& s, const std::string& v) { s.inputs.cluster.latency = to_double(v); }},
      {"cost_rate", [](Scenario& s, const std::string& v) { s.inputs.cluster.cost_rate = to_double(v); }},
      {"memory_budget", [](Scenario& s, const std::string& v) { s.inputs.cluster.memory_budget = to_u64(v); }},
      {"initial_per_worker", [](Scenario& s, const std::string& v) { s.inputs.initial_per_worker = to_u64(v); }},
      {"max_total_batch", [](Scenario& s, const std::string& v) { s.max_total_batch = to_u64(v); }},
      {"layers", [](Scenario& s, const std::string& v) { s.inputs.profile.num_layers = to_u64(v); }},
      {"bucket_bytes", [](Scenario& s, const std::string& v) { s.inputs.profile.bucket_bytes = to_u64(v); }},
      {"grad_bytes_per_layer", [](Scenario& s, const std::string& v) { s.inputs.profile.grad_bytes_per_layer = to_u64(v); }},
      {"head_grad_bytes", [](Scenario& s, const std::string& v) { s.inputs.profile.head_grad_bytes = to_u64(v); }},
      {"weight_bytes", [](Scenario& s, const std::string& v) { s.inputs.profile.weight_bytes = to_u64(v); }},
      {"act_bytes_per_sample_layer", [](Scenario& s, const std::string& v) { s.inputs.profile.act_bytes_per_sample_layer = to_u64(v); }},
      {"head_act_bytes_per_sample", [](Scenario& s, const std::string& v) { s.inputs.profile.head_act_bytes_per_sample = to_u64(v); }},
      {"compute.fixed", [](Scenario& s, const std::string& v) { s.inputs.profile.compute.fixed = to_double(v); }},
      {"compute.forward", [](Scenario& s, const std::string& v) { s.inputs.profile.compute.forward_per_sample_layer = to_double(v); }},
      {"compute.backward", [](Scenario& s, const std::string& v) { s.inputs.profile.compute.backward_per_sample_layer = to_double(v); }},
      {"compute.head", [](Scenario& s, const std::string& v) { s.inputs.profile.compute.head_per_sample = to_double(v); }},
      {"refined_last_bucket", [](Scenario& s, const std::string& v) {
         if (v != "true" && v != "false") throw ScenarioError("expected true/false, got '" + v + "'");
         s.inputs.profile.refined_last_bucket = v == "true";
       }},
      {"boundaries", [](Scenario& s, const std::string& v) {
         s.boundaries.clear();
         for (const auto& b : split_list(v)) s.boundaries.push_back(to_u64(b));
       }},
      {"modes", [](Scenario& s, const std::string& v) {
         s.modes.clear();
         for (const auto& m : split_list(v)) s.modes.push_back(parse_mode(m));
       }},
  };
  if (key.starts_with("measured.")) {
    const auto rest = key.substr(9);
    const auto dot = rest.find('.');
    if (dot == std::string::npos) throw ScenarioError("expected measured.<mode>.<boundary>");
    s.measured[{parse_mode(rest.substr(0, dot)), to_u64(rest.substr(dot + 1))}] = to_double(v);
    return;
  }
  auto it = setters.find(key);
  if (it == setters.end()) throw ScenarioError("unknown scenario key '" + key + "'");
  it->second(s, v);
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source) {
  Scenario s;
  s.modes = {dist::Mode::Full, dist::Mode::Efficiency, dist::Mode::Performance};
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ScenarioError(source + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    try {
      apply(s, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const ScenarioError& e) {
      fail(e.what());
    }
  }
  lineno = 0;
  try {
    s.inputs.validate();
    if (s.boundaries.empty()) throw ScenarioError("scenario lists no boundaries");
    if (s.modes.empty()) throw ScenarioError("scenario lists no modes");
    for (auto b : s.boundaries) (void)s.inputs.profile.active_layers(b);
  } catch (const std::exception& e) {
    throw ScenarioError(source + ": " + e.what());
  }
  return s;
}

std::vector<std::string> bundled_scenarios() {
  std::vector<std::string> out;
  for (const auto& b : kBundledScenarios) out.emplace_back(b.name);
  return out;
}

std::string bundled_scenario_text(const std::string& name) {
  for (const auto& b : kBundledScenarios) {
    if (name == b.name) return b.text;
  }
  throw ScenarioError("no bundled scenario '" + name + "'");
}

Scenario load_scenario(const std::string& name_or_path) {
  for (const auto& b : kBundledScenarios) {
    if (name_or_path == b.name) return parse_scenario(b.text, b.name);
  }
  std::ifstream in(name_or_path);
  if (!in) throw ScenarioError("cannot open scenario " + name_or_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), name_or_path);
}

dist::PackingPlan with_measured(dist::PackingPlan plan, double t_iter, double cost_rate) {
  plan.t_iter = t_iter;
  plan.epoch_time = static_cast<double>(plan.iterations) * t_iter;
  plan.cost = dist::epoch_cost(plan.epoch_time, plan.workers, cost_rate);
  plan.measured = true;
  return plan;
}

dist::PackingPlan plan_for(dist::Mode mode, const Scenario& s, std::size_t boundary) {
  dist::PackingPlan plan;
  switch (mode) {
    case dist::Mode::Full: plan = dist::plan_full(s.inputs, boundary); break;
    case dist::Mode::Efficiency: plan = dist::plan_efficiency(s.inputs, boundary); break;
    case dist::Mode::Performance:
      plan = dist::plan_performance(s.inputs, boundary, s.max_total_batch);
      break;
  }
  auto it = s.measured.find({mode, boundary});
  if (it != s.measured.end()) plan = with_measured(plan, it->second, s.inputs.cluster.cost_rate);
  return plan;
}

ScenarioReport run_scenario(const Scenario& s) {
  ScenarioReport r;
  r.name = s.name;
  for (auto m : s.modes) r.totals.push_back({m, 0.0, 0.0});
  for (std::size_t e = 0; e < s.boundaries.size(); ++e) {
    for (std::size_t i = 0; i < s.modes.size(); ++i) {
      auto plan = plan_for(s.modes[i], s, s.boundaries[e]);
      r.totals[i].time += plan.epoch_time;
      r.totals[i].cost += plan.cost;
      r.rows.push_back({e + 1, plan});
    }
  }
  return r;
}

std::string scenario_csv(const ScenarioReport& report) {
  std::string out = std::string(kScenarioHeader) + "\n";
  for (const auto& row : report.rows) {
    const auto& p = row.plan;
    out += std::to_string(row.epoch) + ',' + dist::to_string(p.mode) + ',' +
           std::to_string(p.boundary) + ',' + std::to_string(p.workers) + ',' +
           std::to_string(p.total_batch) + ',' + std::to_string(p.per_worker_batch) + ',' +
           std::to_string(p.iterations) + ',' + num(p.t_comp) + ',' + num(p.t_comm) + ',' +
           num(p.t_iter) + ',' + num(p.epoch_time) + ',' + num(p.cost) + ',' +
           (p.measured ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace lf::harness
