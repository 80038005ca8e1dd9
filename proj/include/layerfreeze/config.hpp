// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration: a flat `key = value` text format with `#` comments, plus
// command-line overrides of the same keys. Unknown keys and malformed values
// are errors that name the offending line.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "layerfreeze/freezer.hpp"
#include "layerfreeze/nn.hpp"

namespace lf::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LrSchedule { Constant, Stepped };
enum class FreezeMode { Auto, Static, Off, Forced };

const char* to_string(LrSchedule s);
const char* to_string(FreezeMode m);

struct DataConfig {
  std::size_t n_train = 4000;
  std::size_t n_test = 1000;
  std::size_t n_features = 16;
  std::size_t n_classes = 4;
  double noise = 1.0;               // blob standard deviation
  double separation = 3.0;          // radius of the class centres
  double shift = 0.3;               // input drift between pre-training and fine-tuning
  std::size_t pretrain_samples = 4000;
  std::size_t pretrain_epochs = 6;
  double pretrain_lr = 0.05;
};

struct ModelConfig {
  std::size_t layers = 8;
  std::size_t width = 16;
  nn::Activation activation = nn::Activation::Tanh;
};

struct TrainConfig {
  std::size_t epochs = 4;
  std::size_t batch_size = 32;
  double lr = 0.05;
  LrSchedule schedule = LrSchedule::Constant;
  double decay_factor = 0.1;
  std::vector<double> decay_points = {0.3, 0.6};
};

struct FreezeConfig {
  FreezeMode mode = FreezeMode::Auto;
  std::size_t static_prefix = 0;
  std::vector<std::size_t> schedule;  // forced: boundary per interval, last value repeats
  double percentile = 50.0;
  freeze::PercentileMethod method = freeze::PercentileMethod::Linear;
  bool include_bias = true;
  std::size_t intervals_per_epoch = 5;
};

struct CacheConfig {
  bool enabled = false;
  double memory_mb = 64.0;
  double disk_mb = 0.0;
  std::filesystem::path dir;        // empty: <out>/cache
  double memory_bw = 10e9;
  double disk_read_bw = 500e6;
  double disk_write_bw = 400e6;
  double copy_overhead = 0.07;
  std::size_t queue_depth = 4;
};

struct SvccaConfig {
  std::size_t probe_size = 256;
  double threshold = 0.9;
  double variance_keep = 0.99;
  bool dump = true;                 // write checkpoint activations
  bool reference = false;           // also run full fine-tuning for the ideal schedule
};

struct RunConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  FreezeConfig freeze;
  CacheConfig cache;
  SvccaConfig svcca;
  double seconds_per_flop = 2.5e-10;
  std::string scenario;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string description;
};

/// Every recognised key with its default, in documentation order.
const std::vector<KeyDoc>& config_keys();

/// Sets one key. Throws ConfigError for unknown keys or bad values.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
/// Parses `KEY=VALUE` and applies it.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Applies a config text on top of `cfg`; `source` prefixes error messages.
void parse_config(RunConfig& cfg, const std::string& text, const std::string& source = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Canonical `key = value` dump of every key (round-trips through parse_config).
std::string dump_config(const RunConfig& cfg);

}  // namespace lf::harness
