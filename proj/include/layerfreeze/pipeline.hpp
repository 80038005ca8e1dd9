// SPDX-License-Identifier: Apache-2.0
#pragma once

// Three-stage cache pipeline: a reader thread prefetches cached records for
// upcoming batches, the training thread consumes them, and a writer thread
// persists newly computed activations. Stages are linked by bounded queues.
//
// The reader only peeks. Every mutation (stale evictions and new records)
// goes through the single writer in commit order, using the boundary in force
// when the trainer consumed the batch. Each original index appears once per
// epoch, so a prefetch never observes a write from the same epoch, and
// finish_epoch() drains the writer before the next epoch's reads begin. Hit,
// write and drop counts are therefore independent of thread timing.

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "layerfreeze/cache.hpp"

namespace lf::cache {

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T v) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(v));
    high_water_ = std::max(high_water_, items_.size());
    not_empty_.notify_one();
  }

  /// Blocks until an item is available; empty once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t high_water() const {
    std::lock_guard lock(mu_);
    return high_water_;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  std::size_t high_water_ = 0;
  bool closed_ = false;
};

/// Outcome of one committed batch, in commit order.
struct JobResult {
  std::uint64_t memory_bytes = 0;   // bytes admitted to the memory tier
  std::uint64_t disk_bytes = 0;     // bytes admitted to the disk tier
  std::size_t stored = 0;
  std::size_t dropped = 0;
  std::size_t evicted = 0;
};

class Pipeline {
 public:
  using Fetched = StorageManager::Fetched;
  using Batch = std::vector<std::optional<Fetched>>;

  explicit Pipeline(StorageManager& storage, std::size_t queue_depth = 4);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// Starts prefetching. `batches` lists shuffled positions per batch, in the
  /// order the trainer will consume them.
  void start_epoch(std::size_t epoch, std::vector<std::vector<std::size_t>> batches);
  /// Next prefetched batch; one entry per position (empty when not cached).
  Batch next_batch();
  /// Hands a consumed batch back: counts hits and misses, then queues the
  /// eviction of records shallower than `current_boundary` followed by the
  /// new records. Returns the job's index within the epoch.
  std::size_t commit(const Batch& consumed, std::size_t current_boundary,
                     std::vector<CacheRecord> records);
  /// Waits for the reader to stop and the writer to drain; returns the
  /// results of this epoch's jobs.
  std::vector<JobResult> finish_epoch();

 private:
  struct Job {
    std::vector<std::pair<std::uint64_t, std::uint16_t>> evict;
    std::vector<CacheRecord> records;
  };

  void writer_loop();

  StorageManager& storage_;
  std::size_t depth_;
  std::unique_ptr<BoundedQueue<Batch>> read_q_;
  BoundedQueue<Job> write_q_;
  std::thread reader_;
  std::thread writer_;

  std::mutex done_mu_;
  std::condition_variable done_cv_;
  std::size_t submitted_ = 0;
  std::vector<JobResult> results_;
};

}  // namespace lf::cache
