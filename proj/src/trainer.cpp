// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/trainer.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <unistd.h>

#include "layerfreeze/cache.hpp"
#include "layerfreeze/freezer.hpp"
#include "layerfreeze/pipeline.hpp"

namespace lf::harness {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

nn::ModelSpec model_spec(const RunConfig& cfg) {
  nn::ModelSpec spec;
  spec.input_dim = cfg.data.n_features;
  spec.widths.assign(cfg.model.layers, cfg.model.width);
  spec.num_classes = cfg.data.n_classes;
  spec.activation = cfg.model.activation;
  return spec;
}

Matrix gather(const Matrix& x, std::span<const std::size_t> rows) { return x.gather_rows(rows); }

std::vector<std::size_t> gather_labels(const std::vector<std::size_t>& y,
                                       std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y[r]);
  return out;
}

void sgd_epochs(nn::Model& model, const Dataset& data, std::size_t epochs, std::size_t batch,
                double lr, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(data.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t s = 0; s < perm.size(); s += batch) {
      std::span<const std::size_t> rows(perm.data() + s, std::min(batch, perm.size() - s));
      auto trace = nn::forward(model, gather(data.x, rows), 0);
      auto lg = nn::loss_grad(trace.logits(), gather_labels(data.y, rows));
      nn::apply_sgd(model, nn::backward(model, trace, lg.dlogits, 0), lr);
    }
  }
}

std::size_t boundary_for_interval(const RunConfig& cfg, std::size_t interval) {
  switch (cfg.freeze.mode) {
    case FreezeMode::Static: return cfg.freeze.static_prefix;
    case FreezeMode::Forced: {
      const auto& s = cfg.freeze.schedule;
      return s[std::min(interval, s.size() - 1)];
    }
    default: return 0;
  }
}

// Per-iteration bookkeeping needed to price the step once the writer has
// reported where new records landed.
struct StepCost {
  std::size_t row = 0;      // index into the report rows
  double train_s = 0.0;
  double read_s = 0.0;
  bool caching = false;
};

std::filesystem::path cache_root(const RunConfig& cfg, const TrainOptions& opts, bool& temporary) {
  temporary = false;
  if (!cfg.cache.dir.empty()) return cfg.cache.dir;
  if (!opts.out.empty()) return opts.out / "cache";
  temporary = true;
  return std::filesystem::temp_directory_path() /
         ("layerfreeze-cache-" + std::to_string(::getpid()) + "-" + std::to_string(cfg.seed));
}

void remove_records(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("rec_") && name.ends_with(".bin")) std::filesystem::remove(entry.path());
  }
}

}  // namespace

std::vector<Matrix> probe_activations(const nn::Model& model, const Matrix& probe) {
  auto trace = nn::forward(model, probe, 0);
  return {trace.outputs.begin(), trace.outputs.end() - 1};
}

nn::Model initial_model(const RunConfig& cfg, const Task& task) {
  std::mt19937_64 init_rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 1);
  auto spec = model_spec(cfg);
  nn::Model model = nn::make_model(spec, init_rng);
  if (cfg.data.pretrain_epochs == 0) return model;
  std::mt19937_64 pre_rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 2);
  sgd_epochs(model, task.pretrain, cfg.data.pretrain_epochs, cfg.train.batch_size,
             cfg.data.pretrain_lr, pre_rng);
  nn::ModelSpec head_spec{cfg.model.width, {cfg.model.width, cfg.model.width},
                          cfg.data.n_classes, cfg.model.activation};
  model.head = nn::make_model(head_spec, init_rng).head;
  return model;
}

RunReport train(const RunConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const Task task = make_task(cfg.data, cfg.seed, cfg.svcca.probe_size);
  return train(cfg, task, opts);
}

RunReport train(const RunConfig& cfg, const Task& task, const TrainOptions& opts) {
  cfg.validate();
  RunReport report;
  report.config = cfg;
  nn::Model model = initial_model(cfg, task);
  const std::size_t L = model.depth();
  const std::size_t n = task.train.size();
  const std::size_t B = cfg.train.batch_size;
  const std::size_t iters_per_epoch = ceil_div(n, B);
  const std::size_t total_iters = iters_per_epoch * cfg.train.epochs;
  const std::size_t K = cfg.freeze.intervals_per_epoch;
  const double spf = cfg.seconds_per_flop;

  std::size_t boundary = boundary_for_interval(cfg, 0);
  auto state = freeze::make_state(L, cfg.freeze.percentile, cfg.freeze.method);
  state.frozen_boundary = boundary;
  auto window = freeze::make_window(L, boundary, cfg.freeze.include_bias);
  const bool auto_mode = cfg.freeze.mode == FreezeMode::Auto;

  std::unique_ptr<cache::StorageManager> storage;
  std::unique_ptr<cache::Pipeline> pipeline;
  bool temp_root = false;
  std::filesystem::path root;
  if (cfg.cache.enabled) {
    cache::BackendConfig bc;
    bc.memory_capacity = static_cast<std::uint64_t>(cfg.cache.memory_mb * 1024.0 * 1024.0);
    bc.disk_capacity = static_cast<std::uint64_t>(cfg.cache.disk_mb * 1024.0 * 1024.0);
    bc.memory_bw = cfg.cache.memory_bw;
    bc.disk_read_bw = cfg.cache.disk_read_bw;
    bc.disk_write_bw = cfg.cache.disk_write_bw;
    if (bc.disk_capacity > 0) {
      root = cache_root(cfg, opts, temp_root);
      remove_records(root);
      bc.root = root;
    }
    storage = std::make_unique<cache::StorageManager>(bc, model.widths());
    pipeline = std::make_unique<cache::Pipeline>(*storage, cfg.cache.queue_depth);
  }

  std::mt19937_64 shuffle_rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 3);
  std::vector<std::size_t> perm(n);
  std::size_t global_iter = 0;
  std::size_t interval = 0;
  double loss_sum = 0.0;
  std::vector<StepCost> costs;

  IntervalRow row;
  auto open_row = [&](std::size_t epoch, bool caching) {
    row = IntervalRow{};
    row.interval = interval + 1;
    row.epoch = epoch + 1;
    row.frozen_boundary = boundary;
    row.caching = caching;
    loss_sum = 0.0;
  };

  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);

    bool caching = false;
    if (storage && boundary > 0) {
      double prefix_s = 0.0;
      for (std::size_t j = 0; j < boundary; ++j) {
        prefix_s += static_cast<double>(B * nn::layer_forward_flops(model, j)) * spf;
      }
      const double read_s = static_cast<double>(B * cache::record_bytes(model.width_at(boundary))) /
                            cfg.cache.disk_read_bw;
      caching = cache::should_cache(boundary, prefix_s / static_cast<double>(boundary), read_s);
    }
    if (caching) {
      storage->register_shuffle(epoch, perm);
      std::vector<std::vector<std::size_t>> batches;
      for (std::size_t s = 0; s < n; s += B) {
        std::vector<std::size_t> pos(std::min(B, n - s));
        std::iota(pos.begin(), pos.end(), s);
        batches.push_back(std::move(pos));
      }
      pipeline->start_epoch(epoch, std::move(batches));
    }
    costs.clear();

    open_row(epoch, caching);
    std::size_t next_interval_end = ceil_div(iters_per_epoch, K);
    std::size_t k_in_epoch = 0;
    for (std::size_t it = 0; it < iters_per_epoch; ++it, ++global_iter) {
      const std::size_t s = it * B;
      std::span<const std::size_t> rows(perm.data() + s, std::min(B, n - s));
      const std::size_t bsz = rows.size();
      const std::size_t f = boundary;

      cache::Pipeline::Batch fetched;
      if (caching) fetched = pipeline->next_batch();

      // Start each row at its cached depth, or at the input.
      std::vector<std::size_t> start(bsz, 0);
      double read_s = 0.0;
      for (std::size_t r = 0; r < fetched.size(); ++r) {
        if (!fetched[r]) continue;
        ++row.cache_hits;
        const auto& rec = fetched[r]->record;
        const double bytes = static_cast<double>(cache::record_bytes(rec.payload.size()));
        read_s += bytes / (fetched[r]->tier == cache::Tier::Memory ? cfg.cache.memory_bw
                                                                   : cfg.cache.disk_read_bw);
        if (rec.depth <= f) start[r] = rec.depth;
      }

      const std::size_t wf = model.width_at(f);
      std::vector<double> h(bsz * wf);
      nn::FlopCount flops;
      std::map<std::size_t, std::vector<std::size_t>> groups;
      for (std::size_t r = 0; r < bsz; ++r) groups[start[r]].push_back(r);
      for (const auto& [d, members] : groups) {
        Matrix in;
        if (d == 0) {
          std::vector<std::size_t> src;
          for (auto r : members) src.push_back(rows[r]);
          in = gather(task.train.x, src);
        } else {
          std::vector<double> vals;
          vals.reserve(members.size() * model.width_at(d));
          for (auto r : members) {
            const auto& p = fetched[r]->record.payload;
            vals.insert(vals.end(), p.begin(), p.end());
          }
          in = Matrix(members.size(), model.width_at(d), std::move(vals));
        }
        Matrix out = nn::forward_range(model, std::move(in), d, f);
        for (std::size_t m = 0; m < members.size(); ++m) {
          auto src = out.row(m);
          std::copy(src.begin(), src.end(), h.begin() + members[m] * wf);
        }
        flops.forward += nn::flop_count(model, members.size(), f, d).forward;
      }
      const auto labels = gather_labels(task.train.y, rows);
      auto trace = nn::forward(model, Matrix(bsz, wf, h), f);
      auto lg = nn::loss_grad(trace.logits(), labels);
      auto grads = nn::backward(model, trace, lg.dlogits, f);
      flops.backward = nn::flop_count(model, bsz, f, f).backward;
      if (auto_mode) window = freeze::accumulate(std::move(window), grads);
      nn::apply_sgd(model, grads, lr_at(cfg.train, global_iter, total_iters));

      if (caching) {
        std::vector<cache::CacheRecord> fresh;
        if (f > 0) {
          for (std::size_t r = 0; r < bsz; ++r) {
            if (fetched[r] && fetched[r]->record.depth == f) continue;
            cache::CacheRecord rec;
            rec.original_index = rows[r];
            rec.depth = static_cast<std::uint16_t>(f);
            rec.payload.assign(h.begin() + r * wf, h.begin() + (r + 1) * wf);
            fresh.push_back(std::move(rec));
          }
        }
        pipeline->commit(fetched, f, std::move(fresh));
      }

      const double train_s = static_cast<double>(flops.total()) * spf;
      costs.push_back({report.rows.size(), train_s, read_s, caching});
      row.forward_flops += flops.forward;
      row.backward_flops += flops.backward;
      row.iterations += 1;
      row.samples += bsz;
      loss_sum += lg.loss;

      if (it + 1 == next_interval_end) {
        row.train_loss = loss_sum / static_cast<double>(row.iterations);
        row.eval_accuracy = nn::accuracy(model, task.test.x, task.test.y);
        if (auto_mode) {
          auto tick = freeze::interval_tick(std::move(state), std::move(window));
          state = std::move(tick.state);
          window = std::move(tick.window);
          boundary = state.frozen_boundary;
        } else {
          boundary = boundary_for_interval(cfg, interval + 1);
        }
        row.next_boundary = boundary;
        if (opts.collect_checkpoints) {
          report.checkpoints.push_back(probe_activations(model, task.probe.x));
        }
        report.rows.push_back(row);
        ++interval;
        ++k_in_epoch;
        next_interval_end = ceil_div((k_in_epoch + 1) * iters_per_epoch, K);
        if (it + 1 < iters_per_epoch) open_row(epoch, caching);
      }
    }

    std::vector<cache::JobResult> jobs;
    if (caching) jobs = pipeline->finish_epoch();
    std::size_t job = 0;
    for (const auto& c : costs) {
      double step = c.train_s;
      if (c.caching) {
        const auto& r = jobs.at(job++);
        const double write_s = static_cast<double>(r.memory_bytes) / cfg.cache.memory_bw +
                               static_cast<double>(r.disk_bytes) / cfg.cache.disk_write_bw;
        step = std::max({c.read_s, (1.0 + cfg.cache.copy_overhead) * c.train_s, write_s});
        report.rows[c.row].cache_writes += r.stored;
      }
      report.rows[c.row].simulated_time += step;
    }
  }

  auto& sum = report.summary;
  for (const auto& r : report.rows) {
    sum.best_accuracy = std::max(sum.best_accuracy, r.eval_accuracy);
    sum.forward_flops += r.forward_flops;
    sum.backward_flops += r.backward_flops;
    sum.simulated_time += r.simulated_time;
  }
  for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
    for (std::size_t s = 0; s < n; s += B) {
      const auto full = nn::flop_count(model, std::min(B, n - s), 0, 0);
      sum.full_forward_flops += full.forward;
      sum.full_backward_flops += full.backward;
    }
  }
  sum.full_simulated_time = static_cast<double>(sum.full_forward_flops + sum.full_backward_flops) * spf;
  sum.final_accuracy = report.rows.empty() ? 0.0 : report.rows.back().eval_accuracy;
  sum.final_boundary = boundary;
  const auto total = sum.forward_flops + sum.backward_flops;
  if (total > 0) {
    sum.flop_speedup = static_cast<double>(sum.full_forward_flops + sum.full_backward_flops) /
                       static_cast<double>(total);
  }
  if (sum.backward_flops > 0) {
    sum.backward_reduction =
        static_cast<double>(sum.full_backward_flops) / static_cast<double>(sum.backward_flops);
  }
  if (sum.simulated_time > 0.0) sum.time_speedup = sum.full_simulated_time / sum.simulated_time;
  if (storage) {
    const auto st = storage->stats();
    sum.cache_hits = st.hits;
    sum.cache_misses = st.misses;
    sum.cache_writes = st.writes;
    sum.cache_dropped = st.dropped;
    sum.cache_evictions = st.evictions;
  }
  pipeline.reset();
  if (temp_root) {
    std::error_code ec;
    std::filesystem::remove_all(root, ec);
  }
  report.model = std::move(model);
  return report;
}

}  // namespace lf::harness
