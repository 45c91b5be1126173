#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

namespace metadenoise {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Domain tags keep the sub-streams for different jobs apart even when the
// numeric indices coincide.
enum class StreamPurpose : std::uint64_t {
  task_sampling = 1,
  data_selection = 2,
  noise = 3,
  shuffle = 4,
  init = 5,
  split = 6,
  generator = 7,
  real_noise = 8,
};

/// Counter-based generator: output i is mix64(key + i * golden), i.e.
/// SplitMix64 keyed by a hash of the derivation path. Streams are cheap
/// values; copying one forks an identical sequence.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed) noexcept : key_(detail::mix64(seed ^ 0x6A09E667F3BCC908ULL)) {}

  /// Stream for (seed, path...). Equal paths give equal sequences; any
  /// differing element gives an unrelated key.
  static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = detail::mix64(seed ^ 0x6A09E667F3BCC908ULL);
    std::uint64_t depth = 0;
    for (std::uint64_t p : path) {
      ++depth;
      h = detail::mix64(h ^ detail::mix64(p + depth * detail::kGolden));
    }
    RngStream s(0);
    s.key_ = h;
    return s;
  }

  static RngStream derive(std::uint64_t seed, StreamPurpose purpose,
                          std::initializer_list<std::uint64_t> indices = {}) noexcept {
    std::uint64_t h = detail::mix64(seed ^ 0x6A09E667F3BCC908ULL);
    h = detail::mix64(h ^ detail::mix64(static_cast<std::uint64_t>(purpose) + detail::kGolden));
    std::uint64_t depth = 1;
    for (std::uint64_t p : indices) {
      ++depth;
      h = detail::mix64(h ^ detail::mix64(p + depth * detail::kGolden));
    }
    RngStream s(0);
    s.key_ = h;
    return s;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates permutation of [0, n).
template <class Index = std::size_t>
std::vector<Index> shuffled_indices(std::size_t n, RngStream& stream) {
  std::vector<Index> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<Index>(i);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace metadenoise
