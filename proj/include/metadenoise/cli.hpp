#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "metadenoise/config.hpp"
#include "metadenoise/errors.hpp"
#include "metadenoise/experiment.hpp"
#include "metadenoise/io.hpp"

namespace metadenoise {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numeric = 3 };

namespace detail {

struct CliOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> k;
  std::optional<std::string> checkpoint;
  std::optional<std::size_t> workers;
};

inline ExperimentConfig resolve(const CliOptions& o) {
  Config c = Config::load(o.config);
  if (o.seed) c.set("base_seed", std::to_string(*o.seed));
  if (o.out) c.set("out", *o.out);
  if (o.k) c.set("k", std::to_string(*o.k));
  if (o.checkpoint) c.set("checkpoint", *o.checkpoint);
  if (o.workers) c.set("workers", std::to_string(*o.workers));
  try {
    return read_experiment_config(c);
  } catch (const ParseError& e) {
    throw ParseError(o.config + ": " + e.message(), e.line());
  }
}

inline DenoiserModel require_checkpoint(const ExperimentConfig& x) {
  if (x.checkpoint.empty()) throw ArgumentError("this command needs --checkpoint or a 'checkpoint' config key");
  return load_checkpoint(x.checkpoint);
}

inline void synth_data(const ExperimentConfig& x) {
  const Problem p = build_problem(x);
  const auto& dir = x.out;
  if (p.kind == ProblemKind::signal1d) {
    save_signal_dataset(p.clean_pool, dir / "train.csv");
    save_signal_dataset(p.real_pairs.clean, dir / "real_clean.csv");
    save_signal_dataset(p.real_pairs.noisy, dir / "real_noisy.csv");
    return;
  }
  auto dump = [&](const std::vector<Tensor>& images, const std::string& sub) {
    std::filesystem::create_directories(dir / sub);
    for (std::size_t i = 0; i < images.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.pgm", i);
      save_pgm(images[i], dir / sub / name, 65535);
    }
  };
  dump(p.clean_pool, "train");
  dump(p.real_pairs.clean, "real_clean");
  dump(p.real_pairs.noisy, "real_noisy");
}

inline void print_summary(std::ostream& os, const std::string& what, const MetricResult& r, Metric metric) {
  os << what << ": " << to_string(metric) << " " << format_db(r.mean) << " dB (sd " << format_db(r.sd) << ", n "
     << r.count() << ")\n";
}

inline int run_command(const std::string& cmd, const CliOptions& o, std::ostream& out) {
  const ExperimentConfig x = resolve(o);
  const OutputLock lock(x.out);
  const std::size_t n_tasks = x.task_counts.front();
  const RunStreams streams = RunStreams::from(x.base_seed);

  if (cmd == "synth-data") {
    synth_data(x);
    out << "wrote synthetic datasets to " << x.out.string() << '\n';
    return exit_ok;
  }
  const Problem problem = build_problem(x);
  const MethodSettings& m = x.methods;

  if (cmd == "meta-train") {
    MetaConfig meta = m.meta;
    meta.base_seed = streams.data;
    if (m.tasks_are_pool) {
      meta.task_pool = n_tasks;
    } else {
      meta.outer_iterations = outer_iterations_for(m, n_tasks);
    }
    const auto r = meta_train(make_model(problem.spec, streams.init), problem.dist, problem.clean_pool, meta);
    save_checkpoint(r.model, x.out / "model.mdnz");
    write_text(x.out / "trainlog.csv", train_log_csv(r.log));
    out << "meta-trained " << r.log.size() << " outer iterations on " << n_tasks << " tasks\n";
  } else if (cmd == "pretrain") {
    save_checkpoint(pretrain(Method::supervised, problem, m, n_tasks, streams), x.out / "model.mdnz");
    out << "supervised pretraining on " << n_tasks << " tasks done\n";
  } else if (cmd == "finetune") {
    const DenoiserModel model = require_checkpoint(x);
    const RealSplit split = split_for(problem, streams, m.k);
    const DenoiserModel tuned = finish(Method::transfer, model, split, m, streams);
    save_checkpoint(tuned, x.out / "model.mdnz");
    print_summary(out, "fine-tuned", evaluate_on_test(tuned, split, problem.metric, problem.max_val), problem.metric);
  } else if (cmd == "transfer") {
    const DenoiserModel pre = pretrain(Method::supervised, problem, m, n_tasks, streams);
    const RealSplit split = split_for(problem, streams, m.k);
    const DenoiserModel tuned = finish(Method::transfer, pre, split, m, streams);
    save_checkpoint(pre, x.out / "pretrained.mdnz");
    save_checkpoint(tuned, x.out / "model.mdnz");
    print_summary(out, "transfer", evaluate_on_test(tuned, split, problem.metric, problem.max_val), problem.metric);
  } else if (cmd == "evaluate") {
    const DenoiserModel model = require_checkpoint(x);
    const RealSplit split = split_for(problem, streams, m.k);
    EvalReport report;
    report.metric = problem.metric;
    report.initial_noise.push_back(
        {"initial_noise", 0, m.k, x.base_seed, evaluate_initial_noise(split, problem.metric, problem.max_val)});
    report.rows.push_back(
        {"checkpoint", 0, m.k, x.base_seed, evaluate_on_test(model, split, problem.metric, problem.max_val)});
    report.stream_log.push_back("checkpoint 0 " + streams.describe());
    emit_report(report, x.out);
    print_summary(out, "checkpoint", report.rows.front().metric, problem.metric);
  } else if (cmd == "kshot-sweep") {
    const SweepTable t = kshot_sweep(parse_method(x.method), x.ks, x.seeds(), problem, m, n_tasks);
    write_text(x.out / "kshot.csv", sweep_csv(t));
    out << sweep_csv(t);
  } else if (cmd == "compare") {
    CompareSpec spec;
    spec.methods = x.compare_methods;
    spec.task_counts = x.task_counts;
    spec.seeds = x.seeds();
    const EvalReport report = compare_methods(problem, spec, m);
    emit_report(report, x.out);
    out << report_table(report);
  }
  return exit_ok;
}

}  // namespace detail

/// Entry point of the command-line tool. Output goes to `out`, diagnostics
/// and usage text to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Few-shot meta-denoising: Reptile meta-training, fine-tuning and baselines"};
  app.require_subcommand(1, 1);
  detail::CliOptions o;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth-data", "write the built-in synthetic clean and real-noise datasets"},
      {"meta-train", "Reptile meta-training on synthetic noise tasks"},
      {"pretrain", "supervised pretraining on pooled synthetic data"},
      {"finetune", "k-shot fine-tuning of a checkpoint on real-noise pairs"},
      {"transfer", "supervised pretraining followed by fine-tuning"},
      {"evaluate", "metric of a checkpoint on the held-out real-noise pairs"},
      {"kshot-sweep", "fine-tune and evaluate for several k"},
      {"compare", "supervised, transfer and meta-denoising side by side"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "experiment config file")->required();
    sub->add_option("--seed", o.seed, "base seed override");
    sub->add_option("--out", o.out, "output directory override");
    sub->add_option("--k", o.k, "number of real fine-tuning pairs");
    sub->add_option("--workers", o.workers, "concurrent runs");
    if (name == "finetune" || name == "evaluate") sub->add_option("--checkpoint", o.checkpoint, "input model");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    for (auto* sub : app.get_subcommands()) out << sub->help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return exit_usage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return detail::run_command(cmd, o, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return exit_numeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_data;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_data;
  }
}

}  // namespace metadenoise
