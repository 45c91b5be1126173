#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "metadenoise/errors.hpp"
#include "metadenoise/noise.hpp"
#include "metadenoise/paired_set.hpp"
#include "metadenoise/rng.hpp"
#include "metadenoise/tensor.hpp"

namespace metadenoise {

/// Prior over one task parameter: a fixed value, a finite set, or U(lo, hi).
struct Prior {
  enum class Kind { fixed, set, uniform };
  Kind kind = Kind::fixed;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> values;

  static Prior fixed(double v) { return {Kind::fixed, v, v, {}}; }
  static Prior uniform(double a, double b) { return {Kind::uniform, a, b, {}}; }
  static Prior set(std::vector<double> vals) { return {Kind::set, 0.0, 0.0, std::move(vals)}; }

  void validate() const {
    if (kind == Kind::uniform && !(lo <= hi)) throw ArgumentError("uniform prior needs lo <= hi");
    if (kind == Kind::set && values.empty()) throw ArgumentError("set prior needs at least one value");
  }

  double sample(RngStream& stream) const {
    switch (kind) {
      case Kind::fixed: return lo;
      case Kind::uniform: return lo == hi ? lo : stream.uniform(lo, hi);
      case Kind::set: return values[static_cast<std::size_t>(stream.below(values.size()))];
    }
    return lo;
  }
};

struct TaskTemplate {
  NoiseKind kind = NoiseKind::gaussian1d;
  Prior a = Prior::fixed(0.0);
  Prior b = Prior::fixed(0.0);
  // When set, the drawn second parameter is a variance and the task
  // stores its square root.
  bool b_is_variance = false;
  double weight = 1.0;
  ProjectionGeometry geometry{};
};

/// p(tau): weighted mixture of task templates.
struct TaskDistribution {
  std::vector<TaskTemplate> templates;

  void validate() const {
    if (templates.empty()) throw ArgumentError("task distribution has no templates");
    for (const auto& t : templates) {
      if (!(t.weight > 0.0)) throw ArgumentError("task template weights must be positive");
      t.a.validate();
      t.b.validate();
    }
  }

  /// Gaussian tasks with mu ~ U(mu_lo, mu_hi), sigma ~ U(s_lo, s_hi).
  static TaskDistribution gaussian(double mu_lo, double mu_hi, double s_lo, double s_hi, bool image = false) {
    TaskDistribution d;
    d.templates.push_back({image ? NoiseKind::gaussian2d : NoiseKind::gaussian1d, Prior::uniform(mu_lo, mu_hi),
                           Prior::uniform(s_lo, s_hi), false, 1.0, {}});
    return d;
  }
};

inline NoiseTask sample_task(const TaskDistribution& dist, RngStream& stream) {
  dist.validate();
  double total = 0.0;
  for (const auto& t : dist.templates) total += t.weight;
  const double pick = stream.uniform() * total;
  std::size_t chosen = dist.templates.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.templates.size(); ++i) {
    acc += dist.templates[i].weight;
    if (pick < acc) {
      chosen = i;
      break;
    }
  }
  const TaskTemplate& t = dist.templates[chosen];
  NoiseTask task;
  task.kind = t.kind;
  task.a = t.a.sample(stream);
  const double b = t.b.sample(stream);
  task.b = t.b_is_variance ? std::sqrt(std::max(b, 0.0)) : b;
  task.geometry = t.geometry;
  task.seed = stream.next_u64();
  task.validate();
  return task;
}

/// k clean samples and their corrupted versions under one task.
struct KShotSet {
  PairedSet pairs;
  NoiseTask task;
  std::vector<std::size_t> pool_indices;

  std::size_t size() const noexcept { return pairs.size(); }
  const std::vector<Tensor>& clean() const noexcept { return pairs.clean; }
  const std::vector<Tensor>& noisy() const noexcept { return pairs.noisy; }
};

/// k distinct indices out of n (partial Fisher-Yates), in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, RngStream& stream) {
  if (k > n) throw ArgumentError("cannot draw " + std::to_string(k) + " items from " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

inline KShotSet build_kshot_set(const std::vector<Tensor>& clean_pool, const NoiseTask& task, std::size_t k,
                                RngStream& stream) {
  if (k < 1) throw ArgumentError("k-shot set needs k >= 1");
  if (k > clean_pool.size()) {
    throw ArgumentError("k = " + std::to_string(k) + " exceeds the clean pool size " +
                        std::to_string(clean_pool.size()));
  }
  KShotSet set;
  set.task = task;
  set.pool_indices = sample_without_replacement(clean_pool.size(), k, stream);
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor& y = clean_pool[set.pool_indices[i]];
    set.pairs.push_back(apply_task(task, y, i), y);
  }
  return set;
}

/// Windows of length `extent` every `stride` samples.
inline std::vector<Tensor> window_signal(const Tensor& signal, std::size_t extent, std::size_t stride) {
  if (extent < 1 || stride < 1) throw ArgumentError("window extent and stride must be positive");
  if (signal.size() < extent) {
    throw ArgumentError("signal of length " + std::to_string(signal.size()) + " is shorter than the window " +
                        std::to_string(extent));
  }
  std::vector<Tensor> out;
  const std::size_t count = (signal.size() - extent) / stride + 1;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto first = signal.values().begin() + static_cast<std::ptrdiff_t>(i * stride);
    out.push_back(Tensor::vector(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(extent))));
  }
  return out;
}

/// Square patches on a regular grid, row-major order. Remainders smaller
/// than a patch at the right/bottom edges are dropped.
inline std::vector<Tensor> patchify(const Tensor& image, std::size_t patch, std::size_t stride) {
  if (image.rank() != 2) throw ArgumentError("patchify needs a 2-D image");
  if (patch < 1 || stride < 1) throw ArgumentError("patch size and stride must be positive");
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  if (h < patch || w < patch) throw ArgumentError("image " + shape_string(image.shape()) + " is smaller than the patch");
  std::vector<Tensor> out;
  for (std::size_t r = 0; r + patch <= h; r += stride) {
    for (std::size_t c = 0; c + patch <= w; c += stride) {
      std::vector<double> v(patch * patch);
      for (std::size_t i = 0; i < patch; ++i) {
        for (std::size_t j = 0; j < patch; ++j) v[i * patch + j] = image.at(r + i, c + j);
      }
      out.emplace_back(Shape{patch, patch}, std::move(v));
    }
  }
  return out;
}

/// Real-noise pairs divided into a k-shot fine-tuning set and a test set.
struct RealSplit {
  PairedSet finetune;
  PairedSet test;
  std::vector<std::size_t> finetune_indices;
  std::vector<std::size_t> test_indices;
};

inline RealSplit split_real(const PairedSet& pairs, std::size_t k, RngStream& stream) {
  pairs.check();
  if (k < 1) throw ArgumentError("fine-tuning split needs k >= 1");
  if (pairs.size() < k + 1) {
    throw ArgumentError("need at least k + 1 = " + std::to_string(k + 1) + " real pairs, have " +
                        std::to_string(pairs.size()));
  }
  RealSplit split;
  split.finetune_indices = sample_without_replacement(pairs.size(), k, stream);
  std::vector<bool> taken(pairs.size(), false);
  for (std::size_t i : split.finetune_indices) {
    taken[i] = true;
    split.finetune.push_back(pairs.noisy[i], pairs.clean[i]);
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (taken[i]) continue;
    split.test_indices.push_back(i);
    split.test.push_back(pairs.noisy[i], pairs.clean[i]);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Built-in clean data.

/// ECG-like trace: 2-4 sinusoids plus a train of narrow pulses.
inline Tensor generate_signal(std::size_t length, RngStream& stream) {
  std::vector<double> v(length, 0.0);
  const std::size_t waves = 2 + static_cast<std::size_t>(stream.below(3));
  for (std::size_t w = 0; w < waves; ++w) {
    const double period = stream.uniform(12.0, 80.0);
    const double amp = stream.uniform(0.1, 0.4);
    const double phase = stream.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < length; ++t) {
      v[t] += amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase);
    }
  }
  const double beat = stream.uniform(25.0, 45.0);
  const double height = stream.uniform(0.6, 1.0);
  const double width = stream.uniform(1.0, 2.0);
  double centre = stream.uniform(0.0, beat);
  while (centre < static_cast<double>(length) + 3.0 * width) {
    const double h = height * stream.uniform(0.85, 1.15);
    for (std::size_t t = 0; t < length; ++t) {
      const double d = (static_cast<double>(t) - centre) / width;
      if (std::fabs(d) < 6.0) v[t] += h * std::exp(-0.5 * d * d);
    }
    centre += beat * stream.uniform(0.9, 1.1);
  }
  return Tensor::vector(std::move(v));
}

/// Phantom on [0, 1]: Gaussian blobs and flat disks over a zero background.
inline Tensor generate_phantom(std::size_t n, RngStream& stream) {
  std::vector<double> v(n * n, 0.0);
  const double nn = static_cast<double>(n);
  const double c = 0.5 * (nn - 1.0);
  const std::size_t blobs = 2 + static_cast<std::size_t>(stream.below(3));
  for (std::size_t b = 0; b < blobs; ++b) {
    const double cy = c + stream.uniform(-0.25, 0.25) * nn, cx = c + stream.uniform(-0.25, 0.25) * nn;
    const double s = stream.uniform(0.06, 0.15) * nn;
    const double amp = stream.uniform(0.2, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double dy = (static_cast<double>(i) - cy) / s, dx = (static_cast<double>(j) - cx) / s;
        v[i * n + j] += amp * std::exp(-0.5 * (dx * dx + dy * dy));
      }
    }
  }
  const std::size_t disks = 1 + static_cast<std::size_t>(stream.below(2));
  for (std::size_t d = 0; d < disks; ++d) {
    const double cy = c + stream.uniform(-0.2, 0.2) * nn, cx = c + stream.uniform(-0.2, 0.2) * nn;
    const double r = stream.uniform(0.08, 0.18) * nn;
    const double amp = stream.uniform(0.1, 0.3);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
        if (dx * dx + dy * dy <= r * r) v[i * n + j] += amp;
      }
    }
  }
  for (double& x : v) x = std::clamp(x, 0.0, 1.0);
  return Tensor({n, n}, std::move(v));
}

/// Two overlapping Gaussian blobs; smooth enough for projection round trips.
inline Tensor smooth_phantom(std::size_t n) {
  std::vector<double> v(n * n);
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double y = static_cast<double>(i) / nn - 0.5, x = static_cast<double>(j) / nn - 0.5;
      const double g1 = std::exp(-((x + 0.08) * (x + 0.08) + (y - 0.05) * (y - 0.05)) / (2 * 0.12 * 0.12));
      const double g2 = 0.6 * std::exp(-((x - 0.12) * (x - 0.12) + (y + 0.1) * (y + 0.1)) / (2 * 0.07 * 0.07));
      v[i * n + j] = 0.7 * g1 + g2 * 0.5;
    }
  }
  return Tensor({n, n}, std::move(v));
}

/// Stand-in for a real, unmodelled corruption. Stages, each skipped when its
/// parameter is zero: low-dose sinogram noise (images), Poisson counting
/// noise, offset Gaussian plus a |y|-proportional Gaussian term, and for 1-D
/// signals a slow baseline wander and a mains-like hum with random phases.
/// Parameters are meant to sit outside the training priors.
struct HeldOutNoise {
  double mu = 0.0;
  double sigma = 0.0;
  double gain = 0.0;
  double peak = 0.0;
  double blank_scan = 0.0;
  double readout_sigma = 0.0;
  ProjectionGeometry geometry{};
  double wander = 0.0;         // amplitude; period U(60, 150) samples
  double hum = 0.0;            // amplitude; period `hum_period` samples
  double hum_period = 10.0;

  Tensor apply(const Tensor& y, RngStream& stream) const {
    Tensor base = y;
    if (blank_scan > 0.0) base = apply_poisson_sinogram(y, blank_scan, readout_sigma, geometry, stream);
    std::vector<double> x(base.values().begin(), base.values().end());
    if (peak > 0.0) {
      for (double& v : x) v = static_cast<double>(sample_poisson(peak * std::max(v, 0.0), stream)) / peak;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (mu != 0.0 || sigma > 0.0) x[i] += mu + sigma * stream.normal();
      if (gain > 0.0) x[i] += gain * std::fabs(y[i]) * stream.normal();
    }
    if (wander > 0.0) {
      const double period = stream.uniform(60.0, 150.0);
      const double phase = stream.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += wander * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / period + phase);
      }
    }
    if (hum > 0.0) {
      const double phase = stream.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += hum * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / hum_period + phase);
      }
    }
    return Tensor(y.shape(), std::move(x));
  }
};

inline PairedSet corrupt_all(const std::vector<Tensor>& clean, const HeldOutNoise& noise, std::uint64_t seed) {
  PairedSet out;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    RngStream stream = RngStream::derive(seed, StreamPurpose::real_noise, {i});
    out.push_back(noise.apply(clean[i], stream), clean[i]);
  }
  return out;
}

}  // namespace metadenoise
