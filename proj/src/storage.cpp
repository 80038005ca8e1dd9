// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <stdexcept>
#include <string>

#include "layerfreeze/cache.hpp"

namespace lf::cache {

namespace {
constexpr std::size_t tier_slot(Tier t) { return t == Tier::Memory ? 0 : 1; }
}  // namespace

bool should_cache(std::size_t frozen_layers, double per_layer_forward_seconds,
                  double batch_read_seconds) {
  if (per_layer_forward_seconds < 0.0 || batch_read_seconds < 0.0) {
    throw std::invalid_argument("should_cache: times must be >= 0");
  }
  return static_cast<double>(frozen_layers) * per_layer_forward_seconds > batch_read_seconds;
}

ShuffleMap::ShuffleMap(std::size_t epoch, std::vector<std::size_t> perm)
    : epoch_(epoch), perm_(std::move(perm)) {
  std::vector<bool> seen(perm_.size(), false);
  for (std::size_t v : perm_) {
    if (v >= perm_.size() || seen[v]) {
      throw std::invalid_argument("shuffle map for epoch " + std::to_string(epoch) +
                                  " is not a permutation");
    }
    seen[v] = true;
  }
}

StorageManager::StorageManager(BackendConfig config, std::vector<std::size_t> width_at_depth)
    : config_(std::move(config)), widths_(std::move(width_at_depth)) {
  if (widths_.empty()) throw std::invalid_argument("storage manager needs layer widths");
  if (config_.disk_capacity > 0) {
    if (config_.root.empty()) throw std::invalid_argument("disk tier enabled without cache.dir");
    std::filesystem::create_directories(config_.root);
  }
}

StorageManager::~StorageManager() = default;

void StorageManager::register_shuffle(std::size_t epoch, std::vector<std::size_t> permutation) {
  ShuffleMap map(epoch, std::move(permutation));
  std::unique_lock lock(mu_);
  std::erase_if(shuffles_, [epoch](const auto& kv) { return kv.first + 1 < epoch; });
  shuffles_[epoch] = std::move(map);
}

std::size_t StorageManager::resolve(std::size_t epoch, std::size_t shuffled_pos) const {
  std::shared_lock lock(mu_);
  auto it = shuffles_.find(epoch);
  if (it == shuffles_.end()) {
    throw std::out_of_range("no shuffle map registered for epoch " + std::to_string(epoch));
  }
  return it->second.original(shuffled_pos);
}

std::filesystem::path StorageManager::path_for(std::uint64_t index) const {
  return config_.root / ("rec_" + std::to_string(index) + ".bin");
}

bool StorageManager::write(std::size_t epoch, std::size_t pos, CacheRecord rec) {
  rec.original_index = resolve(epoch, pos);
  return write_original(std::move(rec)).has_value();
}

std::optional<Tier> StorageManager::write_original(CacheRecord rec) {
  if (rec.depth >= widths_.size()) {
    throw std::invalid_argument("cache write: depth " + std::to_string(rec.depth) +
                                " beyond model depth");
  }
  if (rec.payload.size() != widths_[rec.depth]) {
    throw std::invalid_argument("cache write: payload has " + std::to_string(rec.payload.size()) +
                                " values, depth " + std::to_string(rec.depth) + " expects " +
                                std::to_string(widths_[rec.depth]));
  }
  std::unique_lock lock(mu_);
  erase_locked(rec.original_index);
  return admit_locked(std::move(rec));
}

std::optional<Tier> StorageManager::admit_locked(CacheRecord&& rec) {
  const std::uint64_t bytes = record_bytes(rec.payload.size());
  const std::uint64_t index = rec.original_index;
  if (used_[0] + bytes <= config_.memory_capacity) {
    index_[index] = {Tier::Memory, rec.depth, bytes};
    memory_[index] = std::move(rec);
    used_[0] += bytes;
    std::lock_guard s(stats_mu_);
    ++stats_.writes;
    stats_.memory_bytes_written += bytes;
    return Tier::Memory;
  }
  if (config_.disk_capacity > 0 && used_[1] + bytes <= config_.disk_capacity) {
    write_record_file(path_for(index), rec);
    index_[index] = {Tier::Disk, rec.depth, bytes};
    used_[1] += bytes;
    std::lock_guard s(stats_mu_);
    ++stats_.writes;
    stats_.disk_bytes_written += bytes;
    return Tier::Disk;
  }
  std::lock_guard s(stats_mu_);
  ++stats_.dropped;
  return std::nullopt;
}

void StorageManager::erase_locked(std::uint64_t index) {
  auto it = index_.find(index);
  if (it == index_.end()) return;
  const Entry e = it->second;
  if (e.tier == Tier::Memory) {
    memory_.erase(index);
  } else {
    std::error_code ec;
    std::filesystem::remove(path_for(index), ec);
  }
  used_[tier_slot(e.tier)] -= e.bytes;
  index_.erase(it);
}

std::optional<CacheRecord> StorageManager::load_locked(std::uint64_t index, const Entry& e) const {
  CacheRecord rec;
  if (e.tier == Tier::Memory) {
    rec = memory_.at(index);
  } else {
    rec = read_record_file(path_for(index));
  }
  std::lock_guard s(stats_mu_);
  (e.tier == Tier::Memory ? stats_.memory_bytes_read : stats_.disk_bytes_read) += e.bytes;
  return rec;
}

std::optional<CacheRecord> StorageManager::read(std::size_t epoch, std::size_t pos,
                                                std::size_t current_boundary) {
  const std::uint64_t index = resolve(epoch, pos);
  std::unique_lock lock(mu_);
  auto it = index_.find(index);
  if (it == index_.end()) {
    std::lock_guard s(stats_mu_);
    ++stats_.misses;
    return std::nullopt;
  }
  auto rec = load_locked(index, it->second);
  std::lock_guard s(stats_mu_);
  ++stats_.hits;
  if (rec->depth < current_boundary) {
    erase_locked(index);
    ++stats_.evictions;
  }
  return rec;
}

std::optional<StorageManager::Fetched> StorageManager::peek(std::uint64_t original_index) const {
  std::shared_lock lock(mu_);
  auto it = index_.find(original_index);
  if (it == index_.end()) return std::nullopt;
  return Fetched{*load_locked(original_index, it->second), it->second.tier};
}

bool StorageManager::evict_stale(std::uint64_t original_index, std::uint16_t depth) {
  std::unique_lock lock(mu_);
  auto it = index_.find(original_index);
  if (it == index_.end() || it->second.depth != depth) return false;
  erase_locked(original_index);
  std::lock_guard s(stats_mu_);
  ++stats_.evictions;
  return true;
}

void StorageManager::note_hit() {
  std::lock_guard s(stats_mu_);
  ++stats_.hits;
}

void StorageManager::note_miss() {
  std::lock_guard s(stats_mu_);
  ++stats_.misses;
}

bool StorageManager::contains(std::uint64_t original_index) const {
  std::shared_lock lock(mu_);
  return index_.contains(original_index);
}

std::optional<Tier> StorageManager::tier_of(std::uint64_t original_index) const {
  std::shared_lock lock(mu_);
  auto it = index_.find(original_index);
  if (it == index_.end()) return std::nullopt;
  return it->second.tier;
}

std::size_t StorageManager::record_count() const {
  std::shared_lock lock(mu_);
  return index_.size();
}

std::uint64_t StorageManager::occupied(Tier t) const {
  std::shared_lock lock(mu_);
  return used_[tier_slot(t)];
}

std::uint64_t StorageManager::capacity(Tier t) const {
  return t == Tier::Memory ? config_.memory_capacity : config_.disk_capacity;
}

CacheStats StorageManager::stats() const {
  std::lock_guard s(stats_mu_);
  return stats_;
}

void StorageManager::clear() {
  std::unique_lock lock(mu_);
  std::vector<std::uint64_t> keys;
  keys.reserve(index_.size());
  for (const auto& kv : index_) keys.push_back(kv.first);
  for (auto k : keys) erase_locked(k);
}

}  // namespace lf::cache
