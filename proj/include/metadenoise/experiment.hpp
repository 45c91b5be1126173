#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "metadenoise/evaluation.hpp"
#include "metadenoise/network.hpp"
#include "metadenoise/noise.hpp"
#include "metadenoise/optim.hpp"
#include "metadenoise/tasks.hpp"
#include "metadenoise/training.hpp"

namespace metadenoise {

enum class ProblemKind { signal1d, image2d, ct2d };

inline std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::signal1d: return "signal1d";
    case ProblemKind::image2d: return "image2d";
    case ProblemKind::ct2d: return "ct2d";
  }
  return "?";
}

inline ProblemKind parse_problem_kind(const std::string& s) {
  if (s == "signal1d") return ProblemKind::signal1d;
  if (s == "image2d") return ProblemKind::image2d;
  if (s == "ct2d") return ProblemKind::ct2d;
  throw ArgumentError("unknown problem kind '" + s + "'");
}

/// Everything a trainer needs: the network, p(tau), clean data for synthetic
/// tasks, and the real-noise pairs that are split into fine-tune/test sets.
struct Problem {
  ProblemKind kind = ProblemKind::signal1d;
  NetworkSpec spec;
  TaskDistribution dist;
  std::vector<Tensor> clean_pool;
  PairedSet real_pairs;
  Metric metric = Metric::snr;
  double max_val = 1.0;
};

/// Desk-scale generator settings for the built-in problems.
struct ProblemSettings {
  ProblemKind kind = ProblemKind::signal1d;
  std::uint64_t data_seed = 1;

  // signal1d
  std::size_t window = 30;
  std::size_t stride = 1;
  std::size_t train_signals = 24;
  std::size_t train_length = 120;
  std::size_t real_signals = 3;
  std::size_t real_length = 80;
  std::size_t hidden_width = 40;
  std::size_t latent_width = 10;

  // image2d / ct2d
  std::size_t image_size = 32;
  std::size_t train_images = 40;
  std::size_t real_images = 40;
  std::size_t conv_depth = 5;
  std::size_t conv_width = 16;
  std::size_t ct_angles = 90;

  HeldOutNoise real_noise{};
  bool real_noise_set = false;  // otherwise the per-kind default below
};

inline HeldOutNoise default_real_noise(const ProblemSettings& s) {
  HeldOutNoise n;
  switch (s.kind) {
    case ProblemKind::signal1d:
      // Offset outside the mu prior plus a signal-proportional term the
      // Gaussian tasks never show.
      n.mu = 0.25;
      n.sigma = 0.2;
      n.gain = 0.3;
      break;
    case ProblemKind::image2d:
      n.peak = 60.0;
      n.sigma = 12.0 / 255.0;
      break;
    case ProblemKind::ct2d:
      n.blank_scan = std::pow(10.0, 3.7);
      n.readout_sigma = 2.0;
      n.geometry = ProjectionGeometry::for_image(s.image_size, s.ct_angles, 1.0 / static_cast<double>(s.image_size));
      break;
  }
  return n;
}

/// p(tau) used for each built-in problem.
inline TaskDistribution default_distribution(const ProblemSettings& s) {
  switch (s.kind) {
    case ProblemKind::signal1d:
      return TaskDistribution::gaussian(-0.1, 0.1, 0.0, 0.3);
    case ProblemKind::image2d: {
      TaskDistribution d;
      d.templates.push_back({NoiseKind::gaussian2d, Prior::fixed(0.0),
                             Prior::set({15.0 / 255.0, 25.0 / 255.0, 50.0 / 255.0}), false, 1.0, {}});
      d.templates.push_back(
          {NoiseKind::poisson_image, Prior::set({30.0, 100.0, 300.0}), Prior::fixed(0.0), false, 1.0, {}});
      return d;
    }
    case ProblemKind::ct2d: {
      const auto geom =
          ProjectionGeometry::for_image(s.image_size, s.ct_angles, 1.0 / static_cast<double>(s.image_size));
      TaskDistribution d;
      d.templates.push_back({NoiseKind::poisson_sinogram,
                             Prior::set({std::pow(10.0, 4.0), std::pow(10.0, 4.5), std::pow(10.0, 5.0)}),
                             Prior::fixed(0.0), false, 1.0, geom});
      d.templates.push_back(
          {NoiseKind::gaussian2d, Prior::fixed(0.0), Prior::uniform(0.001, 0.003), true, 1.0, {}});
      return d;
    }
  }
  throw ArgumentError("unknown problem kind");
}

inline std::vector<Tensor> window_all(const std::vector<Tensor>& signals, std::size_t window, std::size_t stride) {
  std::vector<Tensor> out;
  for (const auto& s : signals) {
    auto w = window_signal(s, window, stride);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

/// Built-in synthetic problem. Clean training data and the real-noise pairs
/// come from disjoint generator streams.
inline Problem make_problem(const ProblemSettings& s) {
  Problem p;
  p.kind = s.kind;
  p.dist = default_distribution(s);
  const HeldOutNoise real = s.real_noise_set ? s.real_noise : default_real_noise(s);
  std::vector<Tensor> real_clean;
  if (s.kind == ProblemKind::signal1d) {
    std::vector<Tensor> train, test;
    for (std::size_t i = 0; i < s.train_signals; ++i) {
      RngStream g = RngStream::derive(s.data_seed, StreamPurpose::generator, {0, i});
      train.push_back(generate_signal(s.train_length, g));
    }
    for (std::size_t i = 0; i < s.real_signals; ++i) {
      RngStream g = RngStream::derive(s.data_seed, StreamPurpose::generator, {1, i});
      test.push_back(generate_signal(s.real_length, g));
    }
    p.clean_pool = window_all(train, s.window, s.stride);
    real_clean = window_all(test, s.window, s.stride);
    p.spec = build_ecg_autoencoder(s.window, s.hidden_width, s.latent_width);
    p.metric = Metric::snr;
  } else {
    for (std::size_t i = 0; i < s.train_images; ++i) {
      RngStream g = RngStream::derive(s.data_seed, StreamPurpose::generator, {0, i});
      p.clean_pool.push_back(generate_phantom(s.image_size, g));
    }
    for (std::size_t i = 0; i < s.real_images; ++i) {
      RngStream g = RngStream::derive(s.data_seed, StreamPurpose::generator, {1, i});
      real_clean.push_back(generate_phantom(s.image_size, g));
    }
    p.spec = build_conv_denoiser(s.conv_depth, s.conv_width, true);
    p.metric = Metric::psnr;
    p.max_val = 1.0;
  }
  p.real_pairs = corrupt_all(real_clean, real, derive_seed(s.data_seed, StreamPurpose::real_noise, {}));
  return p;
}

enum class Method { supervised, transfer, meta };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::supervised: return "supervised";
    case Method::transfer: return "transfer";
    case Method::meta: return "meta";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "supervised") return Method::supervised;
  if (s == "transfer") return Method::transfer;
  if (s == "meta") return Method::meta;
  throw ArgumentError("unknown method '" + s + "'");
}

/// Hyper-parameters shared by all methods of one experiment.
struct MethodSettings {
  MetaConfig meta;              // base_seed is overwritten per run
  InnerLoopConfig supervised;   // optimizer/epochs/batch for supervised pretraining
  InnerLoopConfig finetune;
  std::size_t k = 10;           // real fine-tuning shots
  std::size_t workers = 1;      // concurrent seeds
  // How "number of tasks" is read: false = total tasks generated
  // (outer_iterations = n_tasks / n); true = size of a fixed task pool
  // sampled for meta.outer_iterations iterations.
  bool tasks_are_pool = false;
};

/// Desk-scale settings: serial Reptile (n = 1, eps = 0.5) for 2000 outer
/// iterations over a fixed task pool, Adam 3e-3 for 10 epochs in batches of
/// 10 everywhere. The supervised pool then processes the same number of
/// sample-passes as meta-training.
inline MethodSettings desk_method_settings() {
  MethodSettings m;
  m.meta.tasks_per_iteration = 1;
  m.meta.epsilon = 0.5;
  m.meta.outer_iterations = 2000;
  m.meta.k = 10;
  m.meta.inner.optimizer = OptimizerConfig::adam(0.003);
  m.meta.inner.epochs = 10;
  m.meta.inner.batch_size = 10;
  m.supervised = m.meta.inner;
  m.finetune = m.meta.inner;
  m.k = 10;
  m.tasks_are_pool = true;
  return m;
}

/// Seeds derived from one experiment seed. Every method of a run uses the
/// same tuple, so differences are attributable to the trainer.
struct RunStreams {
  std::uint64_t seed = 0;
  std::uint64_t split = 0;
  std::uint64_t init = 0;
  std::uint64_t data = 0;
  std::uint64_t finetune_shuffle = 0;

  static RunStreams from(std::uint64_t seed) {
    RunStreams r;
    r.seed = seed;
    r.split = derive_seed(seed, StreamPurpose::split, {});
    r.init = derive_seed(seed, StreamPurpose::init, {});
    r.data = derive_seed(seed, StreamPurpose::data_selection, {});
    r.finetune_shuffle = derive_seed(seed, StreamPurpose::shuffle, {});
    return r;
  }

  std::string describe() const {
    std::ostringstream os;
    os << "seed=" << seed << " split=" << split << " init=" << init << " data=" << data
       << " finetune_shuffle=" << finetune_shuffle;
    return os.str();
  }
};

/// The split for k shots. Fine-tune sets for different k from the same seed
/// are nested prefixes of one permutation.
inline RealSplit split_for(const Problem& problem, const RunStreams& streams, std::size_t k) {
  RngStream s(streams.split);
  return split_real(problem.real_pairs, k, s);
}

inline std::size_t outer_iterations_for(const MethodSettings& m, std::size_t n_tasks) {
  if (m.tasks_are_pool) return m.meta.outer_iterations;
  const std::size_t n = m.meta.tasks_per_iteration;
  if (n_tasks % n != 0) {
    throw ArgumentError("number of tasks " + std::to_string(n_tasks) + " is not a multiple of tasks per iteration " +
                        std::to_string(n));
  }
  return n_tasks / n;
}

/// Pretrained (pre fine-tuning) model of a method for one run.
inline DenoiserModel pretrain(Method method, const Problem& problem, const MethodSettings& m, std::size_t n_tasks,
                              const RunStreams& streams) {
  const DenoiserModel init = make_model(problem.spec, streams.init);
  MetaConfig meta = m.meta;
  meta.base_seed = streams.data;
  if (m.tasks_are_pool) {
    meta.task_pool = n_tasks;
  } else {
    meta.outer_iterations = outer_iterations_for(m, n_tasks);
  }
  if (method == Method::meta) {
    return meta_train(init, problem.dist, problem.clean_pool, meta).model;
  }
  SupervisedConfig sup = SupervisedConfig::matching(meta);
  sup.inner = m.supervised;
  if (sup.budget == 0) return init;
  return train_supervised(init, problem.dist, problem.clean_pool, sup);
}

inline DenoiserModel finish(Method method, const DenoiserModel& pretrained, const RealSplit& split,
                            const MethodSettings& m, const RunStreams& streams) {
  if (method == Method::supervised) return pretrained;
  InnerLoopConfig ft = m.finetune;
  ft.shuffle_seed = streams.finetune_shuffle;
  return fine_tune(pretrained, split, ft);
}

struct ReportRow {
  std::string method;
  std::size_t n_tasks = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  MetricResult metric;
};

struct TTestRow {
  std::string method_a;
  std::string method_b;
  std::size_t n_tasks = 0;
  TTestResult result;
};

struct EvalReport {
  Metric metric = Metric::snr;
  std::vector<ReportRow> initial_noise;  // one per seed
  std::vector<ReportRow> rows;           // method x n_tasks x seed
  std::vector<TTestRow> ttests;
  std::vector<std::string> stream_log;   // "method n_tasks <RunStreams>"

  /// Mean over seeds of the per-seed means for (method, n_tasks).
  double mean_of(const std::string& method, std::size_t n_tasks) const {
    double s = 0.0;
    std::size_t c = 0;
    for (const auto& r : rows) {
      if (r.method == method && r.n_tasks == n_tasks) {
        s += r.metric.mean;
        ++c;
      }
    }
    if (c == 0) throw ArgumentError("no rows for method " + method);
    return s / static_cast<double>(c);
  }

  /// Per-sample values of (method, n_tasks) concatenated in seed order.
  std::vector<double> pooled(const std::string& method, std::size_t n_tasks) const {
    std::vector<double> out;
    for (const auto& r : rows) {
      if (r.method == method && r.n_tasks == n_tasks) out.insert(out.end(), r.metric.values.begin(), r.metric.values.end());
    }
    return out;
  }
};

struct CompareSpec {
  std::vector<Method> methods{Method::supervised, Method::transfer, Method::meta};
  std::vector<std::size_t> task_counts{50};
  std::vector<std::uint64_t> seeds{1, 2};
};

/// Runs every method for every (task count, seed) on identical splits and
/// streams, then tests the reference method (the first meta entry, else the
/// first entry) against each other entry with a one-tailed paired t-test on
/// per-test-sample metrics pooled over seeds.
inline EvalReport compare_methods(const Problem& problem, const CompareSpec& cmp, const MethodSettings& m) {
  EvalReport report;
  report.metric = problem.metric;
  if (cmp.seeds.empty()) throw ArgumentError("comparison needs at least one seed");

  struct Slot {
    ReportRow row;
    std::string log;
  };
  const std::size_t per_seed = cmp.methods.size() * cmp.task_counts.size();
  std::vector<std::vector<Slot>> slots(cmp.seeds.size());
  std::vector<ReportRow> initial(cmp.seeds.size());

  parallel_for(cmp.seeds.size(), m.workers, [&](std::size_t si) {
    const RunStreams streams = RunStreams::from(cmp.seeds[si]);
    const RealSplit split = split_for(problem, streams, m.k);
    initial[si] = {"initial_noise", 0, m.k, streams.seed, evaluate_initial_noise(split, problem.metric, problem.max_val)};
    std::vector<Slot> out;
    out.reserve(per_seed);
    for (std::size_t n_tasks : cmp.task_counts) {
      std::optional<DenoiserModel> supervised_cache;
      std::optional<DenoiserModel> meta_cache;
      for (Method method : cmp.methods) {
        DenoiserModel pre;
        if (method == Method::meta) {
          if (!meta_cache) meta_cache = pretrain(Method::meta, problem, m, n_tasks, streams);
          pre = *meta_cache;
        } else {
          if (!supervised_cache) supervised_cache = pretrain(Method::supervised, problem, m, n_tasks, streams);
          pre = *supervised_cache;
        }
        const DenoiserModel final_model = finish(method, pre, split, m, streams);
        Slot s;
        s.row = {to_string(method), n_tasks, m.k, streams.seed,
                 evaluate_on_test(final_model, split, problem.metric, problem.max_val)};
        s.log = to_string(method) + " " + std::to_string(n_tasks) + " " + streams.describe();
        out.push_back(std::move(s));
      }
    }
    slots[si] = std::move(out);
  });

  report.initial_noise = std::move(initial);
  for (std::size_t n = 0; n < cmp.task_counts.size(); ++n) {
    for (std::size_t mi = 0; mi < cmp.methods.size(); ++mi) {
      for (std::size_t si = 0; si < cmp.seeds.size(); ++si) {
        Slot& s = slots[si][n * cmp.methods.size() + mi];
        report.rows.push_back(std::move(s.row));
        report.stream_log.push_back(std::move(s.log));
      }
    }
  }

  if (cmp.methods.size() >= 2) {
    std::size_t ref = 0;
    for (std::size_t i = 0; i < cmp.methods.size(); ++i) {
      if (cmp.methods[i] == Method::meta) {
        ref = i;
        break;
      }
    }
    auto entry_values = [&](std::size_t method_index, std::size_t n_index) {
      std::vector<double> v;
      for (std::size_t si = 0; si < cmp.seeds.size(); ++si) {
        const ReportRow& r = report.rows[(n_index * cmp.methods.size() + method_index) * cmp.seeds.size() + si];
        v.insert(v.end(), r.metric.values.begin(), r.metric.values.end());
      }
      return v;
    };
    for (std::size_t n = 0; n < cmp.task_counts.size(); ++n) {
      const auto a = entry_values(ref, n);
      for (std::size_t j = 0; j < cmp.methods.size(); ++j) {
        if (j == ref) continue;
        TTestRow t;
        t.method_a = to_string(cmp.methods[ref]);
        t.method_b = to_string(cmp.methods[j]);
        t.n_tasks = cmp.task_counts[n];
        t.result = paired_t_test_one_tailed(a, entry_values(j, n));
        report.ttests.push_back(std::move(t));
      }
    }
  }
  return report;
}

struct SweepRow {
  std::size_t k = 0;
  std::vector<double> seed_means;  // one per seed, seed order
  double mean = 0.0;
  double sd = 0.0;                 // across seeds

  double standard_error() const {
    return seed_means.size() > 1 ? sd / std::sqrt(static_cast<double>(seed_means.size())) : 0.0;
  }
};

struct SweepTable {
  std::string method;
  std::size_t n_tasks = 0;
  std::vector<SweepRow> rows;
};

/// For each (k, seed): split with k fine-tuning shots, train with the given
/// method, evaluate on the remaining pairs. Pretraining does not depend on k
/// and is shared across k for one seed.
inline SweepTable kshot_sweep(Method method, const std::vector<std::size_t>& ks,
                              const std::vector<std::uint64_t>& seeds, const Problem& problem,
                              const MethodSettings& m, std::size_t n_tasks) {
  if (ks.empty()) throw ArgumentError("k-shot sweep needs at least one k");
  if (seeds.empty()) throw ArgumentError("k-shot sweep needs at least one seed");
  for (std::size_t k : ks) {
    if (k < 1 || k + 1 > problem.real_pairs.size()) {
      throw ArgumentError("k = " + std::to_string(k) + " is infeasible for " +
                          std::to_string(problem.real_pairs.size()) + " real pairs");
    }
  }
  std::vector<std::vector<double>> means(seeds.size(), std::vector<double>(ks.size()));
  parallel_for(seeds.size(), m.workers, [&](std::size_t si) {
    const RunStreams streams = RunStreams::from(seeds[si]);
    const Method pre_method = method == Method::meta ? Method::meta : Method::supervised;
    const DenoiserModel pre = pretrain(pre_method, problem, m, n_tasks, streams);
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      MethodSettings mk = m;
      mk.k = ks[ki];
      const RealSplit split = split_for(problem, streams, ks[ki]);
      const DenoiserModel model = finish(method, pre, split, mk, streams);
      means[si][ki] = evaluate_on_test(model, split, problem.metric, problem.max_val).mean;
    }
  });
  SweepTable table;
  table.method = to_string(method);
  table.n_tasks = n_tasks;
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    SweepRow row;
    row.k = ks[ki];
    for (std::size_t si = 0; si < seeds.size(); ++si) row.seed_means.push_back(means[si][ki]);
    const MetricResult agg = MetricResult::from(row.seed_means);
    row.mean = agg.mean;
    row.sd = agg.sd;
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace metadenoise
