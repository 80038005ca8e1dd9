// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace lf::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& v) {
  double out = 0.0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += f(xs[i]);
  }
  return out;
}

struct Entry {
  KeyDoc doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LF_SIZE(key, field, desc)                                                   \
  Entry{{key, "", desc},                                                            \
        [](RunConfig& c, const std::string& v) { c.field = to_size(v); },           \
        [](const RunConfig& c) { return std::to_string(c.field); }}
#define LF_REAL(key, field, desc)                                                   \
  Entry{{key, "", desc},                                                            \
        [](RunConfig& c, const std::string& v) { c.field = to_double(v); },         \
        [](const RunConfig& c) { return fmt(c.field); }}
#define LF_BOOL(key, field, desc)                                                   \
  Entry{{key, "", desc},                                                            \
        [](RunConfig& c, const std::string& v) { c.field = to_bool(v); },           \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{{"seed", "", "Master seed for data, initialisation and shuffling"},
            [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      LF_SIZE("data.n_train", data.n_train, "Fine-tuning training samples"),
      LF_SIZE("data.n_test", data.n_test, "Held-out evaluation samples"),
      LF_SIZE("data.n_features", data.n_features, "Input dimension"),
      LF_SIZE("data.n_classes", data.n_classes, "Fine-tuning classes"),
      LF_REAL("data.noise", data.noise, "Standard deviation of each blob"),
      LF_REAL("data.separation", data.separation, "Distance of class centres from the origin"),
      LF_REAL("data.shift", data.shift, "Input drift between pre-training and fine-tuning"),
      LF_SIZE("data.pretrain_samples", data.pretrain_samples, "Pre-training samples"),
      LF_SIZE("data.pretrain_epochs", data.pretrain_epochs, "Pre-training epochs (0 skips it)"),
      LF_REAL("data.pretrain_lr", data.pretrain_lr, "Pre-training learning rate"),
      LF_SIZE("model.layers", model.layers, "Freezable dense layers"),
      LF_SIZE("model.width", model.width, "Width of every dense layer"),
      Entry{{"model.activation", "", "identity, relu or tanh"},
            [](RunConfig& c, const std::string& v) {
              try {
                c.model.activation = nn::parse_activation(v);
              } catch (const std::exception& e) {
                throw ConfigError(e.what());
              }
            },
            [](const RunConfig& c) { return std::string(nn::to_string(c.model.activation)); }},
      LF_SIZE("train.epochs", train.epochs, "Fine-tuning epochs"),
      LF_SIZE("train.batch_size", train.batch_size, "Mini-batch size"),
      LF_REAL("train.lr", train.lr, "Base learning rate"),
      Entry{{"train.lr_schedule", "", "constant or stepped"},
            [](RunConfig& c, const std::string& v) {
              if (v == "constant") c.train.schedule = LrSchedule::Constant;
              else if (v == "stepped") c.train.schedule = LrSchedule::Stepped;
              else throw ConfigError("unknown lr schedule '" + v + "'");
            },
            [](const RunConfig& c) { return std::string(to_string(c.train.schedule)); }},
      LF_REAL("train.lr_decay_factor", train.decay_factor, "Stepped schedule decay factor"),
      Entry{{"train.lr_decay_points", "", "Fractions of total iterations where the rate decays"},
            [](RunConfig& c, const std::string& v) {
              c.train.decay_points.clear();
              for (const auto& s : split_list(v)) c.train.decay_points.push_back(to_double(s));
            },
            [](const RunConfig& c) { return join(c.train.decay_points, fmt); }},
      Entry{{"freeze.mode", "", "auto, static, off or forced"},
            [](RunConfig& c, const std::string& v) {
              if (v == "auto") c.freeze.mode = FreezeMode::Auto;
              else if (v == "static") c.freeze.mode = FreezeMode::Static;
              else if (v == "off") c.freeze.mode = FreezeMode::Off;
              else if (v == "forced") c.freeze.mode = FreezeMode::Forced;
              else throw ConfigError("unknown freeze mode '" + v + "'");
            },
            [](const RunConfig& c) { return std::string(to_string(c.freeze.mode)); }},
      LF_SIZE("freeze.static_prefix", freeze.static_prefix, "Frozen layers in static mode"),
      Entry{{"freeze.schedule", "", "Forced mode: boundary per interval, last value repeats"},
            [](RunConfig& c, const std::string& v) {
              c.freeze.schedule.clear();
              for (const auto& s : split_list(v)) c.freeze.schedule.push_back(to_size(s));
            },
            [](const RunConfig& c) {
              return join(c.freeze.schedule, [](std::size_t x) { return std::to_string(x); });
            }},
      LF_REAL("freeze.percentile", freeze.percentile, "Percentile N of the freezing test"),
      Entry{{"freeze.percentile_method", "", "linear or nearest_rank"},
            [](RunConfig& c, const std::string& v) {
              if (v == "linear") c.freeze.method = freeze::PercentileMethod::Linear;
              else if (v == "nearest_rank") c.freeze.method = freeze::PercentileMethod::NearestRank;
              else throw ConfigError("unknown percentile method '" + v + "'");
            },
            [](const RunConfig& c) {
              return std::string(c.freeze.method == freeze::PercentileMethod::Linear
                                     ? "linear"
                                     : "nearest_rank");
            }},
      LF_BOOL("freeze.include_bias", freeze.include_bias, "Include bias gradients in the norms"),
      LF_SIZE("freeze.intervals_per_epoch", freeze.intervals_per_epoch,
              "Evaluation intervals per epoch"),
      LF_BOOL("cache.enabled", cache.enabled, "Cache frozen-prefix activations"),
      LF_REAL("cache.memory_mb", cache.memory_mb, "Memory tier capacity in MiB"),
      LF_REAL("cache.disk_mb", cache.disk_mb, "Disk tier capacity in MiB (0 disables spilling)"),
      Entry{{"cache.dir", "", "Directory for spilled records (default <out>/cache)"},
            [](RunConfig& c, const std::string& v) { c.cache.dir = v; },
            [](const RunConfig& c) { return c.cache.dir.string(); }},
      LF_REAL("cache.memory_bw", cache.memory_bw, "Memory tier bandwidth, bytes/s"),
      LF_REAL("cache.disk_read_bw", cache.disk_read_bw, "Disk read bandwidth, bytes/s"),
      LF_REAL("cache.disk_write_bw", cache.disk_write_bw, "Disk write bandwidth, bytes/s"),
      LF_REAL("cache.copy_overhead", cache.copy_overhead,
              "Trainer slowdown while caching is active"),
      LF_SIZE("cache.queue_depth", cache.queue_depth, "Batches buffered between pipeline stages"),
      LF_REAL("sim.seconds_per_flop", seconds_per_flop, "Simulated seconds per FLOP"),
      LF_SIZE("svcca.probe_size", svcca.probe_size, "Probe samples for checkpoint activations"),
      LF_REAL("svcca.threshold", svcca.threshold, "Score at which a layer counts as converged"),
      LF_REAL("svcca.variance_keep", svcca.variance_keep, "Variance fraction kept before CCA"),
      LF_BOOL("svcca.dump", svcca.dump, "Write checkpoint activation dumps"),
      LF_BOOL("svcca.reference", svcca.reference,
              "Run full fine-tuning alongside for the ideal schedule"),
      Entry{{"distsim.scenario", "", "Scenario file or bundled name for simulate"},
            [](RunConfig& c, const std::string& v) { c.scenario = v; },
            [](const RunConfig& c) { return c.scenario; }},
  };
  return table;
}

#undef LF_SIZE
#undef LF_REAL
#undef LF_BOOL

const Entry& find_entry(const std::string& key) {
  const auto& table = entries();
  auto it = std::find_if(table.begin(), table.end(),
                         [&](const Entry& e) { return e.doc.key == key; });
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  return *it;
}

}  // namespace

const char* to_string(LrSchedule s) {
  return s == LrSchedule::Constant ? "constant" : "stepped";
}

const char* to_string(FreezeMode m) {
  switch (m) {
    case FreezeMode::Auto: return "auto";
    case FreezeMode::Static: return "static";
    case FreezeMode::Off: return "off";
    case FreezeMode::Forced: return "forced";
  }
  return "?";
}

void RunConfig::validate() const {
  auto positive = [](std::size_t v, const char* key) {
    if (v == 0) throw ConfigError(std::string(key) + " must be positive");
  };
  positive(data.n_train, "data.n_train");
  positive(data.n_test, "data.n_test");
  positive(data.n_features, "data.n_features");
  positive(model.width, "model.width");
  positive(train.epochs, "train.epochs");
  positive(train.batch_size, "train.batch_size");
  positive(freeze.intervals_per_epoch, "freeze.intervals_per_epoch");
  positive(svcca.probe_size, "svcca.probe_size");
  positive(cache.queue_depth, "cache.queue_depth");
  if (data.n_classes < 2) throw ConfigError("data.n_classes must be at least 2");
  if (model.layers < 2) throw ConfigError("model.layers must be at least 2");
  if (!(data.noise > 0.0)) throw ConfigError("data.noise must be positive");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (data.pretrain_epochs > 0 && data.pretrain_samples == 0) {
    throw ConfigError("data.pretrain_samples must be positive when pre-training");
  }
  if (!(freeze.percentile > 0.0 && freeze.percentile < 100.0)) {
    throw ConfigError("freeze.percentile must lie in (0, 100)");
  }
  const std::size_t iters = (data.n_train + train.batch_size - 1) / train.batch_size;
  if (freeze.intervals_per_epoch > iters) {
    throw ConfigError("freeze.intervals_per_epoch exceeds iterations per epoch");
  }
  if (freeze.mode == FreezeMode::Static && freeze.static_prefix >= model.layers) {
    throw ConfigError("freeze.static_prefix " + std::to_string(freeze.static_prefix) +
                      " must be below model.layers " + std::to_string(model.layers));
  }
  if (freeze.mode == FreezeMode::Forced) {
    if (freeze.schedule.empty()) throw ConfigError("forced freezing needs freeze.schedule");
    std::size_t prev = 0;
    for (std::size_t b : freeze.schedule) {
      if (b < prev) throw ConfigError("freeze.schedule must be non-decreasing");
      if (b > model.layers) throw ConfigError("freeze.schedule entry exceeds model.layers");
      prev = b;
    }
  }
  double prev = 0.0;
  for (double p : train.decay_points) {
    if (!(p > prev && p < 1.0)) {
      throw ConfigError("train.lr_decay_points must be ascending within (0, 1)");
    }
    prev = p;
  }
  if (!(train.decay_factor > 0.0)) throw ConfigError("train.lr_decay_factor must be positive");
  if (!(svcca.threshold > 0.0 && svcca.threshold < 1.0)) {
    throw ConfigError("svcca.threshold must lie in (0, 1)");
  }
  if (!(svcca.variance_keep > 0.0 && svcca.variance_keep <= 1.0)) {
    throw ConfigError("svcca.variance_keep must lie in (0, 1]");
  }
  if (cache.memory_mb < 0.0 || cache.disk_mb < 0.0) {
    throw ConfigError("cache capacities must be >= 0");
  }
  if (!(cache.memory_bw > 0.0 && cache.disk_read_bw > 0.0 && cache.disk_write_bw > 0.0)) {
    throw ConfigError("cache bandwidths must be positive");
  }
  if (!(cache.copy_overhead >= 0.0)) throw ConfigError("cache.copy_overhead must be >= 0");
  if (!(seconds_per_flop >= 0.0)) throw ConfigError("sim.seconds_per_flop must be >= 0");
}

const std::vector<KeyDoc>& config_keys() {
  static const std::vector<KeyDoc> docs = [] {
    std::vector<KeyDoc> out;
    const RunConfig defaults;
    for (const auto& e : entries()) {
      KeyDoc d = e.doc;
      d.default_value = e.get(defaults);
      out.push_back(std::move(d));
    }
    return out;
  }();
  return docs;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Entry& e = find_entry(key);
  try {
    e.set(cfg, value);
  } catch (const ConfigError& err) {
    throw ConfigError(key + ": " + err.what());
  }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
  }
  set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void parse_config(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    try {
      apply_override(cfg, body);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  parse_config(cfg, ss.str(), path.string());
  return cfg;
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += e.doc.key + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace lf::harness
