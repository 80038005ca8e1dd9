// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/pipeline.hpp"

#include <stdexcept>

namespace lf::cache {

Pipeline::Pipeline(StorageManager& storage, std::size_t queue_depth)
    : storage_(storage), depth_(queue_depth), write_q_(queue_depth) {
  if (queue_depth == 0) throw std::invalid_argument("pipeline queue depth must be positive");
  writer_ = std::thread([this] { writer_loop(); });
}

Pipeline::~Pipeline() {
  if (read_q_) read_q_->close();
  if (reader_.joinable()) reader_.join();
  write_q_.close();
  if (writer_.joinable()) writer_.join();
}

void Pipeline::start_epoch(std::size_t epoch, std::vector<std::vector<std::size_t>> batches) {
  if (reader_.joinable()) throw std::logic_error("pipeline: previous epoch not finished");
  // Resolve on the calling thread so a missing shuffle map surfaces here.
  std::vector<std::vector<std::uint64_t>> originals(batches.size());
  for (std::size_t b = 0; b < batches.size(); ++b) {
    for (std::size_t pos : batches[b]) originals[b].push_back(storage_.resolve(epoch, pos));
  }
  read_q_ = std::make_unique<BoundedQueue<Batch>>(depth_);
  reader_ = std::thread([this, originals = std::move(originals)] {
    for (const auto& ids : originals) {
      Batch batch;
      batch.reserve(ids.size());
      for (auto id : ids) batch.push_back(storage_.peek(id));
      read_q_->push(std::move(batch));
    }
    read_q_->close();
  });
}

Pipeline::Batch Pipeline::next_batch() {
  if (!read_q_) throw std::logic_error("pipeline: no epoch in progress");
  auto b = read_q_->pop();
  if (!b) throw std::logic_error("pipeline: read past the end of the epoch");
  return std::move(*b);
}

std::size_t Pipeline::commit(const Batch& consumed, std::size_t current_boundary,
                             std::vector<CacheRecord> records) {
  Job job;
  for (const auto& f : consumed) {
    if (!f) {
      storage_.note_miss();
      continue;
    }
    storage_.note_hit();
    if (f->record.depth < current_boundary) {
      job.evict.emplace_back(f->record.original_index, f->record.depth);
    }
  }
  job.records = std::move(records);
  std::size_t id;
  {
    std::lock_guard lock(done_mu_);
    id = submitted_++;
  }
  write_q_.push(std::move(job));
  return id;
}

void Pipeline::writer_loop() {
  while (auto job = write_q_.pop()) {
    JobResult r;
    for (const auto& [index, depth] : job->evict) r.evicted += storage_.evict_stale(index, depth);
    for (auto& rec : job->records) {
      const std::uint64_t bytes = record_bytes(rec.payload.size());
      const auto tier = storage_.write_original(std::move(rec));
      if (!tier) {
        ++r.dropped;
        continue;
      }
      ++r.stored;
      (*tier == Tier::Memory ? r.memory_bytes : r.disk_bytes) += bytes;
    }
    std::lock_guard lock(done_mu_);
    results_.push_back(r);
    done_cv_.notify_all();
  }
}

std::vector<JobResult> Pipeline::finish_epoch() {
  if (read_q_) read_q_->close();
  if (reader_.joinable()) reader_.join();
  read_q_.reset();
  std::unique_lock lock(done_mu_);
  done_cv_.wait(lock, [&] { return results_.size() == submitted_; });
  std::vector<JobResult> out = std::move(results_);
  results_.clear();
  submitted_ = 0;
  return out;
}

}  // namespace lf::cache
