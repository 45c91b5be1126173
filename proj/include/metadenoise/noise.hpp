#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "metadenoise/ct_projection.hpp"
#include "metadenoise/errors.hpp"
#include "metadenoise/rng.hpp"
#include "metadenoise/tensor.hpp"

namespace metadenoise {

/// Exact Poisson variate. Multiplication of uniforms below 30, Hormann's
/// transformed rejection with squeeze (PTRS) above.
inline std::uint64_t sample_poisson(double lambda, RngStream& stream) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("Poisson mean must be finite and >= 0");
  if (lambda == 0.0) return 0;
  if (lambda < 30.0) {
    const double limit = std::exp(-lambda);
    double prod = stream.uniform();
    std::uint64_t k = 0;
    while (prod > limit) {
      prod *= stream.uniform();
      ++k;
    }
    return k;
  }
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  while (true) {
    const double u = stream.uniform() - 0.5;
    const double v = stream.uniform();
    const double us = 0.5 - std::fabs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    const double lhs = std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b);
    const double rhs = -lambda + kf * loglam - std::lgamma(kf + 1.0);
    if (lhs <= rhs) return static_cast<std::uint64_t>(kf);
  }
}

/// x = y + eta, eta ~ N(mu, sigma^2) i.i.d.
inline Tensor apply_gaussian(const Tensor& y, double mu, double sigma, RngStream& stream) {
  if (!(sigma >= 0.0)) throw ArgumentError("Gaussian noise needs sigma >= 0");
  std::vector<double> x(y.values().begin(), y.values().end());
  if (sigma == 0.0) {
    for (double& v : x) v += mu;
  } else {
    for (double& v : x) v += stream.normal(mu, sigma);
  }
  return Tensor(y.shape(), std::move(x));
}

/// x = Poisson(peak * y) / peak; mean y, variance y / peak.
inline Tensor apply_poisson_image(const Tensor& y, double peak, RngStream& stream) {
  if (!(peak > 0.0)) throw ArgumentError("Poisson peak must be positive");
  std::vector<double> x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0.0) throw DomainError("Poisson image noise needs non-negative intensities");
    x[i] = static_cast<double>(sample_poisson(peak * y[i], stream)) / peak;
  }
  return Tensor(y.shape(), std::move(x));
}

/// Low-dose CT simulation: counts z = Poisson(b exp(-S(y))) + N(0, sigma_r^2),
/// converted back to line integrals -ln(max(z, 1) / b) and reconstructed.
inline Tensor apply_poisson_sinogram(const Tensor& y, double blank_scan, double readout_sigma,
                                     const ProjectionGeometry& geom, RngStream& stream) {
  if (!(blank_scan > 0.0)) throw ArgumentError("blank scan factor must be positive");
  if (!(readout_sigma >= 0.0)) throw ArgumentError("read-out noise sigma must be >= 0");
  for (double v : y.values()) {
    if (v < 0.0) throw DomainError("sinogram noise needs a non-negative attenuation image");
  }
  Sinogram sino = radon_forward(y, geom);
  for (double& p : sino.values().values()) {
    double z = static_cast<double>(sample_poisson(blank_scan * std::exp(-p), stream));
    if (readout_sigma > 0.0) z += stream.normal(0.0, readout_sigma);
    p = -std::log(std::max(z, 1.0) / blank_scan);
  }
  return fbp_inverse(sino, geom);
}

enum class NoiseKind { gaussian1d, gaussian2d, poisson_image, poisson_sinogram };

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::gaussian1d: return "gaussian1d";
    case NoiseKind::gaussian2d: return "gaussian2d";
    case NoiseKind::poisson_image: return "poisson_image";
    case NoiseKind::poisson_sinogram: return "poisson_sinogram";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "gaussian1d") return NoiseKind::gaussian1d;
  if (s == "gaussian2d") return NoiseKind::gaussian2d;
  if (s == "poisson_image") return NoiseKind::poisson_image;
  if (s == "poisson_sinogram") return NoiseKind::poisson_sinogram;
  throw ArgumentError("unknown noise kind '" + s + "'");
}

/// A task: noise family, its sampled parameters and the seed that fixes
/// every draw. Parameter meaning by kind:
///   gaussian*:        a = mu, b = sigma
///   poisson_image:    a = peak photons per unit intensity
///   poisson_sinogram: a = blank scan factor, b = read-out sigma
struct NoiseTask {
  NoiseKind kind = NoiseKind::gaussian1d;
  double a = 0.0;
  double b = 0.0;
  std::uint64_t seed = 0;
  // Only used by poisson_sinogram.
  ProjectionGeometry geometry{};

  void validate() const {
    switch (kind) {
      case NoiseKind::gaussian1d:
      case NoiseKind::gaussian2d:
        if (!(b >= 0.0)) throw ArgumentError("Gaussian task needs sigma >= 0");
        break;
      case NoiseKind::poisson_image:
        if (!(a > 0.0)) throw ArgumentError("Poisson task needs a positive peak");
        break;
      case NoiseKind::poisson_sinogram:
        if (!(a > 0.0) || !(b >= 0.0)) throw ArgumentError("sinogram task needs b > 0 and sigma_r >= 0");
        break;
    }
  }

  static NoiseTask gaussian(double mu, double sigma, std::uint64_t seed, bool image = false) {
    return {image ? NoiseKind::gaussian2d : NoiseKind::gaussian1d, mu, sigma, seed, {}};
  }
  static NoiseTask poisson(double peak, std::uint64_t seed) {
    return {NoiseKind::poisson_image, peak, 0.0, seed, {}};
  }
  static NoiseTask sinogram(double blank_scan, double readout_sigma, ProjectionGeometry geom, std::uint64_t seed) {
    return {NoiseKind::poisson_sinogram, blank_scan, readout_sigma, seed, geom};
  }

  std::string describe() const {
    switch (kind) {
      case NoiseKind::gaussian1d:
      case NoiseKind::gaussian2d:
        return to_string(kind) + "(mu=" + std::to_string(a) + ",sigma=" + std::to_string(b) + ")";
      case NoiseKind::poisson_image: return "poisson_image(peak=" + std::to_string(a) + ")";
      case NoiseKind::poisson_sinogram:
        return "poisson_sinogram(b=" + std::to_string(a) + ",r=" + std::to_string(b) + ")";
    }
    return "?";
  }
};

/// h_tau applied to one sample; the stream is fixed by (task seed, sample
/// index), so the same call always yields the same output.
inline Tensor apply_task(const NoiseTask& task, const Tensor& clean, std::uint64_t sample_index) {
  task.validate();
  RngStream stream = RngStream::derive(task.seed, StreamPurpose::noise, {sample_index});
  switch (task.kind) {
    case NoiseKind::gaussian1d:
    case NoiseKind::gaussian2d: return apply_gaussian(clean, task.a, task.b, stream);
    case NoiseKind::poisson_image: return apply_poisson_image(clean, task.a, stream);
    case NoiseKind::poisson_sinogram:
      return apply_poisson_sinogram(clean, task.a, task.b, task.geometry, stream);
  }
  throw ArgumentError("unknown noise kind");
}

}  // namespace metadenoise
