#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "metadenoise/errors.hpp"
#include "metadenoise/tensor.hpp"

namespace metadenoise {

/// Parallel-beam geometry for a square image of `image_size` pixels. Angles
/// are spread uniformly over [0, pi). Detector positions are centered on
/// the rotation axis; `pixel_size` converts pixel path lengths into the
/// physical length unit of the line integrals.
struct ProjectionGeometry {
  std::size_t image_size = 0;
  std::size_t n_angles = 180;
  std::size_t n_detectors = 0;
  double detector_spacing = 1.0;  // pixels
  double pixel_size = 1.0;

  static ProjectionGeometry for_image(std::size_t n, std::size_t angles = 180, double pixel_size = 1.0) {
    ProjectionGeometry g;
    g.image_size = n;
    g.n_angles = angles;
    g.n_detectors = static_cast<std::size_t>(std::ceil(std::numbers::sqrt2 * static_cast<double>(n)));
    g.pixel_size = pixel_size;
    return g;
  }

  void validate() const {
    if (image_size < 1) throw ArgumentError("projection geometry needs a positive image size");
    if (n_angles < 1) throw ArgumentError("projection geometry needs at least one angle");
    if (!(detector_spacing > 0.0) || !(pixel_size > 0.0)) {
      throw ArgumentError("detector spacing and pixel size must be positive");
    }
    const double span = static_cast<double>(n_detectors) * detector_spacing;
    if (span + 1e-9 < std::numbers::sqrt2 * static_cast<double>(image_size)) {
      throw ArgumentError("detector array of " + std::to_string(n_detectors) +
                          " bins truncates the image diagonal");
    }
  }

  double angle(std::size_t a) const {
    return std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_angles);
  }

  double detector_position(std::size_t d) const {
    return (static_cast<double>(d) - 0.5 * static_cast<double>(n_detectors - 1)) * detector_spacing;
  }
};

/// n_angles x n_detectors line integrals.
class Sinogram {
 public:
  Sinogram(std::size_t n_angles, std::size_t n_detectors)
      : values_(Tensor({n_angles, n_detectors})) {}
  explicit Sinogram(Tensor values) : values_(std::move(values)) {
    if (values_.rank() != 2) throw DimensionError("sinogram must be two-dimensional");
  }

  std::size_t n_angles() const { return values_.shape()[0]; }
  std::size_t n_detectors() const { return values_.shape()[1]; }
  double at(std::size_t a, std::size_t d) const { return values_.at(a, d); }
  double& at(std::size_t a, std::size_t d) { return values_.at(a, d); }
  const Tensor& values() const noexcept { return values_; }
  Tensor& values() noexcept { return values_; }

 private:
  Tensor values_;
};

namespace detail {

inline void require_square_image(const Tensor& image, const ProjectionGeometry& geom) {
  if (image.rank() != 2 || image.shape()[0] != image.shape()[1]) {
    throw ArgumentError("projection needs a square image, got " + shape_string(image.shape()));
  }
  if (image.shape()[0] != geom.image_size) {
    throw ArgumentError("image extent " + std::to_string(image.shape()[0]) + " does not match geometry size " +
                        std::to_string(geom.image_size));
  }
}

// Bilinear sample at continuous (row, col), zero outside the grid.
inline double bilinear(const Tensor& img, double row, double col) {
  const auto n = static_cast<std::ptrdiff_t>(img.shape()[0]);
  const double fr = std::floor(row), fc = std::floor(col);
  const auto r0 = static_cast<std::ptrdiff_t>(fr), c0 = static_cast<std::ptrdiff_t>(fc);
  if (r0 < -1 || c0 < -1 || r0 >= n || c0 >= n) return 0.0;
  const double wr = row - fr, wc = col - fc;
  auto px = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    if (r < 0 || c < 0 || r >= n || c >= n) return 0.0;
    return img[static_cast<std::size_t>(r * n + c)];
  };
  return (1 - wr) * ((1 - wc) * px(r0, c0) + wc * px(r0, c0 + 1)) +
         wr * ((1 - wc) * px(r0 + 1, c0) + wc * px(r0 + 1, c0 + 1));
}

}  // namespace detail

/// Line integrals along parallel rays, sampling the image bilinearly at unit
/// steps along each ray.
inline Sinogram radon_forward(const Tensor& image, const ProjectionGeometry& geom) {
  geom.validate();
  detail::require_square_image(image, geom);
  const double n = static_cast<double>(geom.image_size);
  const double center = 0.5 * (n - 1.0);
  const double half_len = std::ceil(std::numbers::sqrt2 * 0.5 * n) + 1.0;
  const auto steps = static_cast<int>(half_len);

  Sinogram sino(geom.n_angles, geom.n_detectors);
  for (std::size_t a = 0; a < geom.n_angles; ++a) {
    const double th = geom.angle(a);
    const double c = std::cos(th), s = std::sin(th);
    for (std::size_t d = 0; d < geom.n_detectors; ++d) {
      const double off = geom.detector_position(d);
      double acc = 0.0;
      for (int k = -steps; k <= steps; ++k) {
        const double t = static_cast<double>(k);
        const double x = off * c - t * s;
        const double y = off * s + t * c;
        acc += detail::bilinear(image, center - y, x + center);
      }
      sino.at(a, d) = acc * geom.pixel_size;
    }
  }
  return sino;
}

/// Discrete Ram-Lak kernel for spacing tau: h[0] = 1/(4 tau^2),
/// h[odd n] = -1/(n pi tau)^2, h[even n != 0] = 0.
inline double ram_lak_tap(std::ptrdiff_t n, double tau) {
  if (n == 0) return 1.0 / (4.0 * tau * tau);
  if (n % 2 == 0) return 0.0;
  const double d = static_cast<double>(n) * std::numbers::pi * tau;
  return -1.0 / (d * d);
}

/// Ramp-filters every projection. The kernel is band-limited Ram-Lak applied
/// as a full linear convolution, which equals zero-padded frequency-domain
/// filtering with the kernel's transform.
inline Sinogram ramp_filter(const Sinogram& sino, double spacing) {
  const std::size_t nd = sino.n_detectors();
  std::vector<double> taps(2 * nd - 1);
  for (std::size_t i = 0; i < taps.size(); ++i) {
    taps[i] = ram_lak_tap(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(nd - 1), spacing);
  }
  Sinogram out(sino.n_angles(), nd);
  for (std::size_t a = 0; a < sino.n_angles(); ++a) {
    for (std::size_t d = 0; d < nd; ++d) {
      double acc = 0.0;
      for (std::size_t k = 0; k < nd; ++k) acc += taps[d + nd - 1 - k] * sino.at(a, k);
      out.at(a, d) = acc * spacing;
    }
  }
  return out;
}

/// Filtered back-projection onto the geometry's image grid.
inline Tensor fbp_inverse(const Sinogram& sino, const ProjectionGeometry& geom) {
  geom.validate();
  if (sino.n_angles() != geom.n_angles || sino.n_detectors() != geom.n_detectors) {
    throw ArgumentError("sinogram " + std::to_string(sino.n_angles()) + "x" + std::to_string(sino.n_detectors()) +
                        " does not match the geometry");
  }
  const Sinogram q = ramp_filter(sino, geom.detector_spacing);
  const std::size_t n = geom.image_size;
  const double center = 0.5 * static_cast<double>(n - 1);
  const double det_center = 0.5 * static_cast<double>(geom.n_detectors - 1);
  const auto nd = static_cast<std::ptrdiff_t>(geom.n_detectors);
  std::vector<double> img(n * n, 0.0);
  for (std::size_t a = 0; a < geom.n_angles; ++a) {
    const double th = geom.angle(a);
    const double c = std::cos(th), s = std::sin(th);
    for (std::size_t r = 0; r < n; ++r) {
      const double y = center - static_cast<double>(r);
      for (std::size_t col = 0; col < n; ++col) {
        const double x = static_cast<double>(col) - center;
        const double pos = (x * c + y * s) / geom.detector_spacing + det_center;
        const double fl = std::floor(pos);
        const auto i0 = static_cast<std::ptrdiff_t>(fl);
        const double w = pos - fl;
        double v = 0.0;
        if (i0 >= 0 && i0 < nd) v += (1.0 - w) * q.at(a, static_cast<std::size_t>(i0));
        if (i0 + 1 >= 0 && i0 + 1 < nd) v += w * q.at(a, static_cast<std::size_t>(i0 + 1));
        img[r * n + col] += v;
      }
    }
  }
  const double scale = std::numbers::pi / static_cast<double>(geom.n_angles) / geom.pixel_size;
  for (double& v : img) v *= scale;
  return Tensor({n, n}, std::move(img));
}

/// Mask of pixels inside the circle inscribed in the n x n grid.
inline std::vector<bool> inscribed_circle_mask(std::size_t n) {
  std::vector<bool> mask(n * n);
  const double c = 0.5 * static_cast<double>(n - 1);
  const double r = 0.5 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double dy = static_cast<double>(i) - c, dx = static_cast<double>(j) - c;
      mask[i * n + j] = dx * dx + dy * dy <= r * r;
    }
  }
  return mask;
}

}  // namespace metadenoise
