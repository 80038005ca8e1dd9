// SPDX-License-Identifier: Apache-2.0
#pragma once

// Activation cache for a frozen prefix.
//
// While layers [0, L) are frozen their output for a given sample never changes,
// so it can be stored once and reused in later epochs instead of re-running
// the prefix. Records are keyed by the sample's original dataset index; the
// per-epoch shuffle maps translate a shuffled position into that index, so a
// record written in epoch i is found again in epoch i+1 wherever the sample
// lands. Records live in a memory tier first and spill to a disk tier; when
// both are full new records are dropped (existing ones are never displaced).
// A record whose depth is shallower than the current frozen boundary is
// evicted when read; the caller recomputes the missing layers and rewrites it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <vector>

namespace lf::cache {

/// Caching pays off once skipping the frozen prefix's forward pass saves more
/// than reading one batch of cached activations costs.
bool should_cache(std::size_t frozen_layers, double per_layer_forward_seconds,
                  double batch_read_seconds);

struct CacheRecord {
  std::uint64_t original_index = 0;
  std::uint16_t depth = 0;        // number of layers already applied
  std::vector<double> payload;    // activation at that depth
};

// On-disk record, little-endian:
//   "AFCR" | version u16 | original_index u64 | depth u16 | dim u32 | dim x f64
inline constexpr char kRecordMagic[4] = {'A', 'F', 'C', 'R'};
inline constexpr std::uint16_t kRecordVersion = 1;
inline constexpr std::size_t kRecordHeaderBytes = 20;

constexpr std::size_t record_bytes(std::size_t dim) { return kRecordHeaderBytes + 8 * dim; }

void encode_record(const CacheRecord& rec, std::vector<unsigned char>& out);
/// Decodes one record starting at the front of `bytes`; returns bytes consumed.
std::size_t decode_record(std::span<const unsigned char> bytes, CacheRecord& rec);

void write_record_file(const std::filesystem::path& path, const CacheRecord& rec);
CacheRecord read_record_file(const std::filesystem::path& path);
/// Several records back to back in one file (checkpoint activation dumps).
void write_records_file(const std::filesystem::path& path, std::span<const CacheRecord> recs);
std::vector<CacheRecord> read_records_file(const std::filesystem::path& path);

/// MappingShuffled_i: shuffled position -> original index for one epoch.
class ShuffleMap {
 public:
  ShuffleMap() = default;
  /// Throws std::invalid_argument unless `perm` is a bijection on [0, n).
  ShuffleMap(std::size_t epoch, std::vector<std::size_t> perm);

  std::size_t epoch() const { return epoch_; }
  std::size_t size() const { return perm_.size(); }
  std::size_t original(std::size_t pos) const { return perm_.at(pos); }
  const std::vector<std::size_t>& permutation() const { return perm_; }

 private:
  std::size_t epoch_ = 0;
  std::vector<std::size_t> perm_;
};

enum class Tier { Memory, Disk };

struct BackendConfig {
  std::uint64_t memory_capacity = 64ULL << 20;  // bytes
  std::uint64_t disk_capacity = 0;              // bytes; 0 disables the disk tier
  double memory_bw = 10e9;                      // bytes/s, timing model only
  double disk_read_bw = 500e6;
  double disk_write_bw = 400e6;
  std::filesystem::path root;                   // directory for spilled records
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t writes = 0;
  std::uint64_t dropped = 0;
  std::uint64_t evictions = 0;
  std::uint64_t memory_bytes_read = 0;
  std::uint64_t disk_bytes_read = 0;
  std::uint64_t memory_bytes_written = 0;
  std::uint64_t disk_bytes_written = 0;
};

/// Thread-safe storage manager. The index is guarded by a shared mutex (many
/// readers or one writer); each record operation is atomic with respect to it.
class StorageManager {
 public:
  /// `width_at_depth[d]` is the activation width after d layers.
  StorageManager(BackendConfig config, std::vector<std::size_t> width_at_depth);
  ~StorageManager();
  StorageManager(const StorageManager&) = delete;
  StorageManager& operator=(const StorageManager&) = delete;

  /// Registers the shuffle of an epoch; maps older than epoch - 1 are dropped.
  void register_shuffle(std::size_t epoch, std::vector<std::size_t> permutation);
  std::size_t resolve(std::size_t epoch, std::size_t shuffled_pos) const;

  /// Stores `rec` under the original index of shuffled position `pos` in
  /// `epoch`. Returns false when both tiers are full and the record was dropped.
  bool write(std::size_t epoch, std::size_t pos, CacheRecord rec);
  /// Same, keyed directly by the record's original_index. Returns the tier
  /// that received the record, or nothing if it was dropped.
  std::optional<Tier> write_original(CacheRecord rec);

  /// Looks up shuffled position `pos` of `epoch`. A record shallower than
  /// `current_boundary` is still returned but evicted.
  std::optional<CacheRecord> read(std::size_t epoch, std::size_t pos,
                                  std::size_t current_boundary);

  struct Fetched {
    CacheRecord record;
    Tier tier;
  };
  /// Fetch without touching the index (pipeline prefetch).
  std::optional<Fetched> peek(std::uint64_t original_index) const;
  /// Evicts the record at `original_index` if it is still stored at `depth`.
  bool evict_stale(std::uint64_t original_index, std::uint16_t depth);
  void note_hit();
  void note_miss();

  bool contains(std::uint64_t original_index) const;
  std::optional<Tier> tier_of(std::uint64_t original_index) const;
  std::size_t record_count() const;
  std::uint64_t occupied(Tier t) const;
  std::uint64_t capacity(Tier t) const;
  CacheStats stats() const;
  const BackendConfig& config() const { return config_; }

  /// Removes every record (and spilled file).
  void clear();

 private:
  struct Entry {
    Tier tier;
    std::uint16_t depth;
    std::uint64_t bytes;
  };

  std::filesystem::path path_for(std::uint64_t index) const;
  std::optional<Tier> admit_locked(CacheRecord&& rec);
  void erase_locked(std::uint64_t index);
  std::optional<CacheRecord> load_locked(std::uint64_t index, const Entry& e) const;

  BackendConfig config_;
  std::vector<std::size_t> widths_;

  mutable std::shared_mutex mu_;
  std::unordered_map<std::uint64_t, Entry> index_;
  std::unordered_map<std::uint64_t, CacheRecord> memory_;
  std::unordered_map<std::size_t, ShuffleMap> shuffles_;
  std::uint64_t used_[2] = {0, 0};
  mutable std::mutex stats_mu_;
  mutable CacheStats stats_;
};

}  // namespace lf::cache
