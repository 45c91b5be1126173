#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <initializer_list>
#include <thread>
#include <vector>

#include "metadenoise/errors.hpp"
#include "metadenoise/network.hpp"
#include "metadenoise/optim.hpp"
#include "metadenoise/paired_set.hpp"
#include "metadenoise/rng.hpp"
#include "metadenoise/tasks.hpp"

namespace metadenoise {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index is
/// handled by exactly one thread; callers write results to slot i only.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct MetaConfig {
  std::size_t tasks_per_iteration = 5;  // n
  std::size_t outer_iterations = 10;
  double epsilon = 0.1;
  InnerLoopConfig inner;
  std::size_t k = 10;
  std::uint64_t base_seed = 0;
  std::size_t workers = 1;
  // Number of distinct tasks drawn from p(tau) up front; 0 draws a new task
  // for every (iteration, slot).
  std::size_t task_pool = 0;

  void validate() const {
    if (tasks_per_iteration < 1) throw ArgumentError("meta-training needs at least one task per iteration");
    if (!(epsilon >= 0.0)) throw ArgumentError("outer step size must be non-negative");
    if (k < 1) throw ArgumentError("meta-training needs k >= 1");
    inner.validate();
  }

  /// Total number of tasks generated over the whole run.
  std::size_t total_tasks() const { return tasks_per_iteration * outer_iterations; }
};

struct TrainLog {
  std::vector<double> mean_inner_loss;
  std::vector<double> displacement_norm;
  std::vector<double> wall_seconds;

  std::size_t size() const noexcept { return mean_inner_loss.size(); }
};

/// theta + eps * mean_i(theta'_i - theta). Per coordinate the differences are
/// summed in sorted order, so the result does not depend on list order.
inline ParamVector reptile_outer_update(const ParamVector& theta, const std::vector<ParamVector>& adapted,
                                        double epsilon) {
  if (adapted.empty()) throw ArgumentError("outer update needs at least one adapted parameter vector");
  for (const auto& p : adapted) {
    if (!p.same_layout(theta)) throw ArgumentError("outer update: adapted parameters do not match theta's layout");
  }
  const double n = static_cast<double>(adapted.size());
  ParamVector next = theta;
  std::vector<double> column(adapted.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (epsilon == 1.0) {
      // Full interpolation lands on the mean of the adapted vectors.
      for (std::size_t j = 0; j < adapted.size(); ++j) column[j] = adapted[j][i];
      std::sort(column.begin(), column.end());
      double s = 0.0;
      for (double v : column) s += v;
      next[i] = s / n;
      continue;
    }
    for (std::size_t j = 0; j < adapted.size(); ++j) column[j] = adapted[j][i] - theta[i];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (double v : column) s += v;
    next[i] = theta[i] + epsilon * (s / n);
  }
  return next;
}

/// Task number `index` of a run: its noise task and k-shot set. Meta-training
/// and the supervised pool both draw tasks through this, so they see the
/// same data.
inline KShotSet generate_task_set(const TaskDistribution& dist, const std::vector<Tensor>& clean_pool,
                                  std::size_t k, std::uint64_t base_seed, std::uint64_t index,
                                  std::size_t task_pool = 0) {
  NoiseTask task;
  if (task_pool == 0) {
    RngStream task_stream = RngStream::derive(base_seed, StreamPurpose::task_sampling, {index});
    task = sample_task(dist, task_stream);
  } else {
    // Draw one of `task_pool` fixed tasks; member m is always the same task.
    RngStream pick = RngStream::derive(base_seed, StreamPurpose::task_sampling, {index});
    const std::uint64_t member = pick.below(task_pool);
    RngStream task_stream = RngStream::derive(base_seed, StreamPurpose::task_sampling, {~std::uint64_t{0}, member});
    task = sample_task(dist, task_stream);
  }
  RngStream data_stream = RngStream::derive(base_seed, StreamPurpose::data_selection, {index});
  return build_kshot_set(clean_pool, task, k, data_stream);
}

inline std::uint64_t derive_seed(std::uint64_t base_seed, StreamPurpose purpose,
                                 std::initializer_list<std::uint64_t> path) {
  return RngStream::derive(base_seed, purpose, path).next_u64();
}

struct MetaTrainResult {
  DenoiserModel model;
  TrainLog log;
};

/// Reptile meta-training: each outer iteration samples n tasks, adapts a copy
/// of theta to each task's k-shot set, then moves theta towards the mean of
/// the adapted parameters.
inline MetaTrainResult meta_train(const DenoiserModel& model, const TaskDistribution& dist,
                                  const std::vector<Tensor>& clean_pool, const MetaConfig& cfg) {
  cfg.validate();
  dist.validate();
  MetaTrainResult result{model, {}};
  ParamVector theta = model.get_params();
  const std::size_t n = cfg.tasks_per_iteration;
  std::vector<ParamVector> adapted(n);
  std::vector<double> losses(n);

  for (std::size_t it = 0; it < cfg.outer_iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const DenoiserModel snapshot = model.with_params(theta);
    parallel_for(n, cfg.workers, [&](std::size_t t) {
      const std::uint64_t index = it * n + t;
      const KShotSet set = generate_task_set(dist, clean_pool, cfg.k, cfg.base_seed, index, cfg.task_pool);
      InnerLoopConfig inner = cfg.inner;
      inner.shuffle_seed = derive_seed(cfg.base_seed, StreamPurpose::shuffle, {index});
      auto r = run_inner_loop_detailed(snapshot, set.pairs, inner);
      adapted[t] = std::move(r.theta);
      losses[t] = r.mean_loss;
    });
    ParamVector next = reptile_outer_update(theta, adapted, cfg.epsilon);

    double mean_loss = 0.0;
    for (double l : losses) mean_loss += l;
    std::vector<double> disp(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double s = 0.0;
      for (const auto& p : adapted) s += p[i] - theta[i];
      disp[i] = s / static_cast<double>(n);
    }
    result.log.mean_inner_loss.push_back(mean_loss / static_cast<double>(n));
    result.log.displacement_norm.push_back(l2_norm(disp));
    result.log.wall_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    theta = std::move(next);
  }
  result.model.set_params(std::move(theta));
  return result;
}

struct SupervisedConfig {
  std::size_t budget = 0;             // total synthetic samples in the pool
  std::size_t samples_per_task = 10;  // samples drawn per task before moving on
  InnerLoopConfig inner;
  std::uint64_t base_seed = 0;
  std::size_t task_pool = 0;

  /// Pool of the same size as the data meta-training processes.
  static SupervisedConfig matching(const MetaConfig& meta) {
    SupervisedConfig s;
    s.budget = meta.total_tasks() * meta.k;
    s.samples_per_task = meta.k;
    s.inner = meta.inner;
    s.base_seed = meta.base_seed;
    s.task_pool = meta.task_pool;
    return s;
  }
};

/// The pooled synthetic training set: tasks 0, 1, ... drawn exactly as in
/// meta-training, truncated to the budget.
inline PairedSet build_supervised_pool(const TaskDistribution& dist, const std::vector<Tensor>& clean_pool,
                                       const SupervisedConfig& cfg) {
  if (cfg.budget < 1) throw ArgumentError("supervised training needs a budget of at least one sample");
  if (cfg.samples_per_task < 1) throw ArgumentError("supervised pool needs samples_per_task >= 1");
  PairedSet pool;
  for (std::uint64_t index = 0; pool.size() < cfg.budget; ++index) {
    const KShotSet set = generate_task_set(dist, clean_pool, cfg.samples_per_task, cfg.base_seed, index, cfg.task_pool);
    for (std::size_t i = 0; i < set.size() && pool.size() < cfg.budget; ++i) {
      pool.push_back(set.pairs.noisy[i], set.pairs.clean[i]);
    }
  }
  return pool;
}

inline DenoiserModel train_on(const DenoiserModel& model, const PairedSet& data, const InnerLoopConfig& cfg) {
  return model.with_params(run_inner_loop(model, data, cfg));
}

/// Plain supervised learning on the pooled synthetic data.
inline DenoiserModel train_supervised(const DenoiserModel& model, const TaskDistribution& dist,
                                      const std::vector<Tensor>& clean_pool, const SupervisedConfig& cfg) {
  const PairedSet pool = build_supervised_pool(dist, clean_pool, cfg);
  InnerLoopConfig inner = cfg.inner;
  inner.shuffle_seed = derive_seed(cfg.base_seed, StreamPurpose::shuffle, {~std::uint64_t{0}});
  return train_on(model, pool, inner);
}

/// Adapts the model to the k real-noise fine-tuning pairs.
inline DenoiserModel fine_tune(const DenoiserModel& model, const RealSplit& split, const InnerLoopConfig& cfg) {
  if (cfg.epochs > 0 && split.finetune.empty()) throw ArgumentError("fine-tuning needs at least one pair");
  return train_on(model, split.finetune, cfg);
}

struct TransferResult {
  DenoiserModel pretrained;
  DenoiserModel finetuned;
};

/// Supervised pretraining followed by fine-tuning. A zero budget skips the
/// pretraining stage.
inline TransferResult transfer_learn(const DenoiserModel& model, const TaskDistribution& dist,
                                     const std::vector<Tensor>& clean_pool, const SupervisedConfig& pretrain,
                                     const RealSplit& split, const InnerLoopConfig& finetune_cfg) {
  TransferResult r{model, model};
  if (pretrain.budget > 0) r.pretrained = train_supervised(model, dist, clean_pool, pretrain);
  r.finetuned = fine_tune(r.pretrained, split, finetune_cfg);
  return r;
}

}  // namespace metadenoise
