#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "metadenoise/errors.hpp"
#include "metadenoise/experiment.hpp"
#include "metadenoise/io.hpp"

namespace metadenoise {

/// Flat `key = value` file. Lines starting with '#' (after whitespace) are
/// comments; keys may contain dots. Every typed read names the key and the
/// line on failure, and finish() rejects keys nobody asked for.
class Config {
 public:
  static Config parse(std::string_view text) {
    Config c;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      const std::string_view raw = detail::trim(text.substr(pos, end - pos));
      pos = end + 1;
      ++line_no;
      if (raw.empty() || raw.front() == '#') {
        if (end == text.size()) break;
        continue;
      }
      const std::size_t eq = raw.find('=');
      if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
      const std::string key(detail::trim(raw.substr(0, eq)));
      const std::string value(detail::trim(raw.substr(eq + 1)));
      if (key.empty() || key.find_first_of(" \t") != std::string::npos) throw ParseError("bad key '" + key + "'", line_no);
      if (c.entries_.count(key)) throw ParseError("duplicate key '" + key + "'", line_no);
      c.entries_[key] = {value, line_no};
      if (end == text.size()) break;
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    try {
      return parse(detail::read_file(path));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.message(), e.line());
    }
  }

  /// Command-line overrides replace (or add) a value.
  void set(const std::string& key, std::string value) { entries_[key] = {std::move(value), 0}; }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const Entry* e = find(key);
    return e ? e->value : fallback;
  }

  double get_real(const std::string& key, double fallback) {
    const Entry* e = find(key);
    if (!e) return fallback;
    double v = 0.0;
    if (!detail::parse_real(e->value, v)) throw bad(key, *e, "a real number");
    return v;
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) {
    const Entry* e = find(key);
    if (!e) return fallback;
    return to_uint(key, *e, e->value);
  }

  bool get_bool(const std::string& key, bool fallback) {
    const Entry* e = find(key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1") return true;
    if (e->value == "false" || e->value == "0") return false;
    throw bad(key, *e, "true or false");
  }

  std::vector<std::uint64_t> get_uint_list(const std::string& key, std::vector<std::uint64_t> fallback) {
    const Entry* e = find(key);
    if (!e) return fallback;
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(e->value)) out.push_back(to_uint(key, *e, item));
    if (out.empty()) throw bad(key, *e, "a non-empty list");
    return out;
  }

  std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback) {
    const Entry* e = find(key);
    if (!e) return fallback;
    auto out = split_list(e->value);
    if (out.empty()) throw bad(key, *e, "a non-empty list");
    return out;
  }

  /// Wraps a conversion that may throw ArgumentError (enum parsing and the
  /// like) so the diagnostic names the field.
  template <class F>
  auto get_parsed(const std::string& key, const std::string& fallback, F&& parse) {
    const Entry* e = find(key);
    try {
      return parse(e ? e->value : fallback);
    } catch (const ArgumentError& err) {
      throw ParseError("field '" + key + "': " + err.what(), e ? e->line : 0);
    }
  }

  /// Comma-separated list, each item converted by `parse`.
  template <class F>
  auto get_parsed_list(const std::string& key, const std::vector<std::string>& fallback, F&& parse) {
    const Entry* e = find(key);
    const std::vector<std::string> items = e ? split_list(e->value) : fallback;
    if (e && items.empty()) throw bad(key, *e, "a non-empty list");
    std::vector<decltype(parse(items.front()))> out;
    for (const auto& item : items) {
      try {
        out.push_back(parse(item));
      } catch (const ArgumentError& err) {
        throw ParseError("field '" + key + "': " + err.what(), e ? e->line : 0);
      }
    }
    return out;
  }

  /// Throws on the first key that was never read.
  void finish() const {
    for (const auto& [key, e] : entries_) {
      if (!used_.count(key)) throw ParseError("unknown key '" + key + "'", e.line);
    }
  }

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  const Entry* find(const std::string& key) {
    used_.insert(key);
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  static ParseError bad(const std::string& key, const Entry& e, const std::string& expected) {
    return ParseError("field '" + key + "' = '" + e.value + "' is not " + expected, e.line);
  }

  static std::uint64_t to_uint(const std::string& key, const Entry& e, std::string_view s) {
    s = detail::trim(s);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) throw bad(key, e, "a non-negative integer");
    return v;
  }

  static std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const std::size_t comma = std::min(s.find(',', pos), s.size());
      const auto item = detail::trim(s.substr(pos, comma - pos));
      if (!item.empty()) out.emplace_back(item);
      pos = comma + 1;
    }
    return out;
  }

  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
};

/// Everything one CLI invocation needs.
struct ExperimentConfig {
  ProblemSettings problem;
  // Optional external data; empty means the built-in generator.
  std::filesystem::path train_data;
  std::filesystem::path real_noisy;
  std::filesystem::path real_clean;
  std::optional<Metric> metric;
  std::optional<double> max_val;

  MethodSettings methods = desk_method_settings();
  std::vector<Method> compare_methods{Method::supervised, Method::transfer, Method::meta};
  std::vector<std::size_t> task_counts{50, 100};
  std::vector<std::size_t> ks{1, 3, 5, 7, 10};
  std::uint64_t base_seed = 1;
  std::size_t runs = 10;
  std::filesystem::path out = "out";
  std::filesystem::path checkpoint;  // input model for finetune / evaluate
  std::string method = "meta";       // trainer for kshot-sweep / evaluate

  /// Run seeds base_seed, base_seed + 1, ...
  std::vector<std::uint64_t> seeds() const {
    std::vector<std::uint64_t> s;
    for (std::size_t i = 0; i < runs; ++i) s.push_back(base_seed + i);
    return s;
  }
};

namespace detail {

inline InnerLoopConfig read_inner(Config& c, const std::string& prefix, InnerLoopConfig d) {
  d.optimizer.kind = c.get_parsed(prefix + ".optimizer", to_string(d.optimizer.kind), parse_optimizer_kind);
  d.optimizer.learning_rate = c.get_real(prefix + ".lr", d.optimizer.learning_rate);
  d.optimizer.beta1 = c.get_real(prefix + ".beta1", d.optimizer.beta1);
  d.optimizer.beta2 = c.get_real(prefix + ".beta2", d.optimizer.beta2);
  d.optimizer.rho = c.get_real(prefix + ".rho", d.optimizer.rho);
  d.epochs = c.get_uint(prefix + ".epochs", d.epochs);
  d.batch_size = c.get_uint(prefix + ".batch_size", d.batch_size);
  try {
    d.validate();
  } catch (const ArgumentError& e) {
    throw ParseError("section '" + prefix + "': " + e.what(), 0);
  }
  return d;
}

inline void require_path(const std::filesystem::path& p, const std::string& key) {
  std::error_code ec;
  if (!p.empty() && !std::filesystem::exists(p, ec)) {
    throw IoError("field '" + key + "': path '" + p.string() + "' does not exist");
  }
}

}  // namespace detail

/// Builds an ExperimentConfig. Unknown keys, malformed values and
/// out-of-range counts raise ParseError naming the field; missing data paths
/// raise IoError naming the path.
inline ExperimentConfig read_experiment_config(Config& c) {
  ExperimentConfig x;
  ProblemSettings& p = x.problem;
  p.kind = c.get_parsed("problem", "signal1d", parse_problem_kind);
  p.window = c.get_uint("synth.window", p.window);
  p.stride = c.get_uint("synth.stride", p.stride);
  p.train_signals = c.get_uint("synth.train_signals", p.train_signals);
  p.train_length = c.get_uint("synth.train_length", p.train_length);
  p.real_signals = c.get_uint("synth.real_signals", p.real_signals);
  p.real_length = c.get_uint("synth.real_length", p.real_length);
  p.hidden_width = c.get_uint("net.hidden", p.hidden_width);
  p.latent_width = c.get_uint("net.latent", p.latent_width);
  p.image_size = c.get_uint("synth.image_size", p.image_size);
  p.train_images = c.get_uint("synth.train_images", p.train_images);
  p.real_images = c.get_uint("synth.real_images", p.real_images);
  p.conv_depth = c.get_uint("net.depth", p.conv_depth);
  p.conv_width = c.get_uint("net.width", p.conv_width);
  p.ct_angles = c.get_uint("synth.ct_angles", p.ct_angles);

  HeldOutNoise rn = default_real_noise(p);
  rn.mu = c.get_real("real_noise.mu", rn.mu);
  rn.sigma = c.get_real("real_noise.sigma", rn.sigma);
  rn.gain = c.get_real("real_noise.gain", rn.gain);
  rn.peak = c.get_real("real_noise.peak", rn.peak);
  rn.blank_scan = c.get_real("real_noise.blank_scan", rn.blank_scan);
  rn.readout_sigma = c.get_real("real_noise.readout_sigma", rn.readout_sigma);
  rn.wander = c.get_real("real_noise.wander", rn.wander);
  rn.hum = c.get_real("real_noise.hum", rn.hum);
  p.real_noise = rn;
  p.real_noise_set = true;

  x.train_data = c.get_string("data.train", "");
  x.real_noisy = c.get_string("data.real_noisy", "");
  x.real_clean = c.get_string("data.real_clean", "");
  if (x.real_noisy.empty() != x.real_clean.empty()) {
    throw ParseError("data.real_noisy and data.real_clean must be given together", 0);
  }
  detail::require_path(x.train_data, "data.train");
  detail::require_path(x.real_noisy, "data.real_noisy");
  detail::require_path(x.real_clean, "data.real_clean");
  if (c.has("metric")) x.metric = c.get_parsed("metric", "", parse_metric);
  if (c.has("max_val")) x.max_val = c.get_real("max_val", 1.0);

  MethodSettings& m = x.methods;
  m.meta.tasks_per_iteration = c.get_uint("meta.tasks_per_iteration", m.meta.tasks_per_iteration);
  m.meta.epsilon = c.get_real("meta.epsilon", m.meta.epsilon);
  m.meta.outer_iterations = c.get_uint("meta.outer_iterations", m.meta.outer_iterations);
  m.meta.inner = detail::read_inner(c, "meta.inner", m.meta.inner);
  m.tasks_are_pool = c.get_bool("tasks.fixed_pool", m.tasks_are_pool);
  m.supervised = detail::read_inner(c, "supervised", m.meta.inner);
  m.finetune = detail::read_inner(c, "finetune", m.meta.inner);
  m.k = c.get_uint("k", m.k);
  m.meta.k = c.get_uint("meta.k", m.meta.k);
  m.workers = c.get_uint("workers", m.workers);
  m.meta.workers = c.get_uint("meta.workers", m.meta.workers);

  std::vector<std::string> names;
  for (Method mm : x.compare_methods) names.push_back(to_string(mm));
  x.compare_methods = c.get_parsed_list("compare.methods", names, parse_method);

  std::vector<std::uint64_t> tc(x.task_counts.begin(), x.task_counts.end());
  tc = c.get_uint_list("tasks.counts", tc);
  x.task_counts.assign(tc.begin(), tc.end());
  std::vector<std::uint64_t> ks(x.ks.begin(), x.ks.end());
  ks = c.get_uint_list("sweep.ks", ks);
  x.ks.assign(ks.begin(), ks.end());
  x.method = c.get_string("method", x.method);
  c.get_parsed("method", x.method, parse_method);

  x.base_seed = c.get_uint("base_seed", x.base_seed);
  x.runs = c.get_uint("runs", x.runs);
  x.out = c.get_string("out", x.out.string());
  x.checkpoint = c.get_string("checkpoint", "");
  p.data_seed = x.base_seed;

  auto positive = [](std::uint64_t v, const char* key) {
    if (v == 0) throw ParseError(std::string("field '") + key + "' must be positive", 0);
  };
  positive(x.runs, "runs");
  positive(m.k, "k");
  positive(m.meta.k, "meta.k");
  positive(m.workers, "workers");
  positive(m.meta.workers, "meta.workers");
  positive(m.meta.tasks_per_iteration, "meta.tasks_per_iteration");
  positive(m.meta.outer_iterations, "meta.outer_iterations");
  for (auto v : x.task_counts) positive(v, "tasks.counts");
  for (auto v : x.ks) positive(v, "sweep.ks");
  if (!(m.meta.epsilon >= 0.0)) throw ParseError("field 'meta.epsilon' must be >= 0", 0);
  c.finish();
  return x;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  Config c = Config::load(path);
  try {
    return read_experiment_config(c);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

/// The built-in problem, with clean training data and/or real pairs replaced
/// by external datasets when the config names them.
inline Problem build_problem(const ExperimentConfig& x) {
  Problem p = make_problem(x.problem);
  const bool signal = x.problem.kind == ProblemKind::signal1d;
  auto load = [&](const std::filesystem::path& path) {
    return signal ? window_all(load_signal_dataset(path), x.problem.window, x.problem.stride)
                  : load_image_dataset(path);
  };
  if (!x.train_data.empty()) p.clean_pool = load(x.train_data);
  if (!x.real_noisy.empty()) {
    const auto noisy = load(x.real_noisy);
    const auto clean = load(x.real_clean);
    if (noisy.size() != clean.size()) {
      throw FormatError("real datasets differ in size: " + std::to_string(noisy.size()) + " noisy vs " +
                        std::to_string(clean.size()) + " clean");
    }
    PairedSet pairs;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      if (noisy[i].shape() != clean[i].shape()) throw FormatError("real pair " + std::to_string(i) + " shapes differ");
      pairs.push_back(noisy[i], clean[i]);
    }
    p.real_pairs = std::move(pairs);
  }
  if (x.metric) p.metric = *x.metric;
  if (x.max_val) p.max_val = *x.max_val;
  return p;
}

}  // namespace metadenoise
