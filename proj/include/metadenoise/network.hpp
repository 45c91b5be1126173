#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "metadenoise/errors.hpp"
#include "metadenoise/rng.hpp"
#include "metadenoise/tensor.hpp"

namespace metadenoise {

enum class LayerKind { fully_connected, conv2d, relu, linear };

/// One stage of a denoiser. For fully-connected layers `in`/`out` are feature
/// counts; for conv2d they are channel counts; activations carry the extent
/// of the stage they follow.
struct LayerSpec {
  LayerKind kind = LayerKind::linear;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  bool same_padding = true;

  bool has_params() const noexcept {
    return kind == LayerKind::fully_connected || kind == LayerKind::conv2d;
  }

  std::size_t weight_count() const noexcept {
    switch (kind) {
      case LayerKind::fully_connected: return in * out;
      case LayerKind::conv2d: return in * out * kernel * kernel;
      default: return 0;
    }
  }

  std::size_t bias_count() const noexcept { return has_params() ? out : 0; }

  std::size_t fan_in() const noexcept {
    return kind == LayerKind::conv2d ? in * kernel * kernel : in;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;

  static LayerSpec dense(std::size_t in, std::size_t out) {
    return {LayerKind::fully_connected, in, out, 0, false};
  }
  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t kernel = 3) {
    return {LayerKind::conv2d, in, out, kernel, true};
  }
  static LayerSpec relu(std::size_t extent) { return {LayerKind::relu, extent, extent, 0, false}; }
  static LayerSpec linear(std::size_t extent) {
    return {LayerKind::linear, extent, extent, 0, false};
  }
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  bool residual = false;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;

  bool is_convolutional() const {
    return std::any_of(layers.begin(), layers.end(),
                       [](const LayerSpec& l) { return l.kind == LayerKind::conv2d; });
  }

  std::size_t input_extent() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_extent() const { return layers.empty() ? 0 : layers.back().out; }

  std::size_t weight_layer_count() const {
    return static_cast<std::size_t>(
        std::count_if(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.has_params(); }));
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight_count() + l.bias_count();
    return n;
  }

  ParamLayout layout() const {
    ParamLayout layout;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (!l.has_params()) continue;
      layout.blocks.push_back({i, false, offset, l.weight_count()});
      offset += l.weight_count();
      layout.blocks.push_back({i, true, offset, l.bias_count()});
      offset += l.bias_count();
    }
    return layout;
  }

  /// Throws ArgumentError when the chain is not a valid R^D -> R^D denoiser.
  void validate() const {
    if (layers.empty()) throw ArgumentError("network has no layers");
    bool conv = false;
    bool dense = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.in == 0 || l.out == 0) throw ArgumentError("layer " + std::to_string(i) + " has a zero extent");
      if (l.kind == LayerKind::conv2d) {
        conv = true;
        if (l.kernel == 0 || l.kernel % 2 == 0) {
          throw ArgumentError("conv2d layer " + std::to_string(i) + " needs an odd kernel size");
        }
        if (!l.same_padding) throw ArgumentError("conv2d layers must use same padding");
      }
      if (l.kind == LayerKind::fully_connected) dense = true;
      if ((l.kind == LayerKind::relu || l.kind == LayerKind::linear) && l.in != l.out) {
        throw ArgumentError("activation layer " + std::to_string(i) + " changes the extent");
      }
      if (i > 0 && layers[i - 1].out != l.in) {
        throw ArgumentError("layer " + std::to_string(i) + " expects extent " + std::to_string(l.in) +
                            " but receives " + std::to_string(layers[i - 1].out));
      }
    }
    if (conv && dense) throw ArgumentError("mixing conv2d and fully-connected layers is not supported");
    if (input_extent() != output_extent()) {
      throw ArgumentError("denoiser output extent must equal its input extent");
    }
    if (layers.back().kind != LayerKind::linear) {
      throw ArgumentError("the last layer of a denoiser must be a linear activation");
    }
  }

  /// Canonical one-line text form, e.g.
  /// "residual=1 conv2d:1:16:3 relu:16 conv2d:16:1:3 linear:1".
  std::string descriptor() const {
    std::ostringstream os;
    os << "residual=" << (residual ? 1 : 0);
    for (const auto& l : layers) {
      switch (l.kind) {
        case LayerKind::fully_connected: os << " fc:" << l.in << ':' << l.out; break;
        case LayerKind::conv2d: os << " conv2d:" << l.in << ':' << l.out << ':' << l.kernel; break;
        case LayerKind::relu: os << " relu:" << l.in; break;
        case LayerKind::linear: os << " linear:" << l.in; break;
      }
    }
    return os.str();
  }

  static NetworkSpec parse(std::string_view text) {
    NetworkSpec spec;
    std::istringstream is{std::string(text)};
    std::string token;
    bool saw_residual = false;
    auto fields = [](const std::string& tok) {
      std::vector<std::size_t> out;
      std::size_t pos = tok.find(':');
      while (pos != std::string::npos) {
        const std::size_t next = tok.find(':', pos + 1);
        const std::string part = tok.substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1);
        if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
          throw FormatError("bad network descriptor token '" + tok + "'");
        }
        out.push_back(std::stoull(part));
        pos = next;
      }
      return out;
    };
    while (is >> token) {
      if (token.rfind("residual=", 0) == 0) {
        const std::string v = token.substr(9);
        if (v != "0" && v != "1") throw FormatError("bad residual flag in network descriptor");
        spec.residual = v == "1";
        saw_residual = true;
        continue;
      }
      const std::string head = token.substr(0, token.find(':'));
      const auto f = fields(token);
      if (head == "fc" && f.size() == 2) {
        spec.layers.push_back(LayerSpec::dense(f[0], f[1]));
      } else if (head == "conv2d" && f.size() == 3) {
        spec.layers.push_back(LayerSpec::conv(f[0], f[1], f[2]));
      } else if (head == "relu" && f.size() == 1) {
        spec.layers.push_back(LayerSpec::relu(f[0]));
      } else if (head == "linear" && f.size() == 1) {
        spec.layers.push_back(LayerSpec::linear(f[0]));
      } else {
        throw FormatError("bad network descriptor token '" + token + "'");
      }
    }
    if (!saw_residual) throw FormatError("network descriptor lacks the residual flag");
    try {
      spec.validate();
    } catch (const ArgumentError& e) {
      throw FormatError(std::string("network descriptor is invalid: ") + e.what());
    }
    return spec;
  }
};

/// Fully-connected denoising autoencoder: input -> hidden... -> input, ReLU on
/// every hidden layer and a linear output.
inline NetworkSpec build_autoencoder(std::size_t input, const std::vector<std::size_t>& hidden) {
  NetworkSpec spec;
  std::size_t prev = input;
  for (std::size_t h : hidden) {
    spec.layers.push_back(LayerSpec::dense(prev, h));
    spec.layers.push_back(LayerSpec::relu(h));
    prev = h;
  }
  spec.layers.push_back(LayerSpec::dense(prev, input));
  spec.layers.push_back(LayerSpec::linear(input));
  spec.validate();
  return spec;
}

/// 30 -> 150 -> 150 -> 150 -> 25 -> 150 -> 150 -> 150 -> 30.
inline NetworkSpec build_ecg_autoencoder() {
  return build_autoencoder(30, {150, 150, 150, 25, 150, 150, 150});
}

/// Same topology with configurable widths, used for desk-scale runs.
inline NetworkSpec build_ecg_autoencoder(std::size_t input, std::size_t width, std::size_t latent) {
  return build_autoencoder(input, {width, width, width, latent, width, width, width});
}

inline NetworkSpec build_conv_denoiser(std::size_t depth = 5, std::size_t width = 16, bool residual = true) {
  if (depth < 2) throw ArgumentError("conv denoiser depth must be at least 2");
  if (width < 1) throw ArgumentError("conv denoiser width must be at least 1");
  NetworkSpec spec;
  spec.residual = residual;
  spec.layers.push_back(LayerSpec::conv(1, width));
  spec.layers.push_back(LayerSpec::relu(width));
  for (std::size_t i = 0; i + 2 < depth; ++i) {
    spec.layers.push_back(LayerSpec::conv(width, width));
    spec.layers.push_back(LayerSpec::relu(width));
  }
  spec.layers.push_back(LayerSpec::conv(width, 1));
  spec.layers.push_back(LayerSpec::linear(1));
  spec.validate();
  return spec;
}

namespace detail {

// Channel-major activation of one sample: c planes of h x w. Dense layers use
// h = w = 1.
struct Activation {
  std::size_t c = 0, h = 1, w = 1;
  std::vector<double> v;
};

inline void dense_forward(const LayerSpec& l, std::span<const double> weights, std::span<const double> bias,
                          const Activation& in, Activation& out) {
  out.c = l.out;
  out.h = out.w = 1;
  out.v.assign(l.out, 0.0);
  const double* x = in.v.data();
  for (std::size_t o = 0; o < l.out; ++o) {
    const double* row = weights.data() + o * l.in;
    double acc = bias[o];
    for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * x[i];
    out.v[o] = acc;
  }
}

inline void dense_backward(const LayerSpec& l, std::span<const double> weights, const Activation& in,
                           std::span<const double> grad_out, std::span<double> grad_w, std::span<double> grad_b,
                           std::vector<double>* grad_in) {
  const double* x = in.v.data();
  for (std::size_t o = 0; o < l.out; ++o) {
    const double g = grad_out[o];
    grad_b[o] += g;
    if (g == 0.0) continue;
    double* gw = grad_w.data() + o * l.in;
    for (std::size_t i = 0; i < l.in; ++i) gw[i] += g * x[i];
  }
  if (grad_in) {
    grad_in->assign(l.in, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double g = grad_out[o];
      if (g == 0.0) continue;
      const double* row = weights.data() + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) (*grad_in)[i] += row[i] * g;
    }
  }
}

// Valid output range [lo, hi) for a kernel tap offset d in [-p, p] on an
// axis of length n with zero padding.
inline void tap_range(std::ptrdiff_t d, std::size_t n, std::size_t& lo, std::size_t& hi) {
  const auto sn = static_cast<std::ptrdiff_t>(n);
  lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -d));
  hi = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, std::min(sn, sn - d)));
}

inline void conv_forward(const LayerSpec& l, std::span<const double> weights, std::span<const double> bias,
                         const Activation& in, Activation& out) {
  const std::size_t h = in.h, w = in.w, k = l.kernel;
  const auto p = static_cast<std::ptrdiff_t>(k / 2);
  out.c = l.out;
  out.h = h;
  out.w = w;
  out.v.assign(l.out * h * w, 0.0);
  for (std::size_t co = 0; co < l.out; ++co) {
    double* dst = out.v.data() + co * h * w;
    std::fill(dst, dst + h * w, bias[co]);
    for (std::size_t ci = 0; ci < l.in; ++ci) {
      const double* src = in.v.data() + ci * h * w;
      const double* kern = weights.data() + ((co * l.in + ci) * k) * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - p;
        std::size_t y0, y1;
        tap_range(dy, h, y0, y1);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wt = kern[ky * k + kx];
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - p;
          std::size_t x0, x1;
          tap_range(dx, w, x0, x1);
          for (std::size_t y = y0; y < y1; ++y) {
            double* orow = dst + y * w;
            const double* irow = src + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * w;
            for (std::size_t x = x0; x < x1; ++x) {
              orow[x] += wt * irow[static_cast<std::ptrdiff_t>(x) + dx];
            }
          }
        }
      }
    }
  }
}

inline void conv_backward(const LayerSpec& l, std::span<const double> weights, const Activation& in,
                          std::span<const double> grad_out, std::span<double> grad_w, std::span<double> grad_b,
                          std::vector<double>* grad_in) {
  const std::size_t h = in.h, w = in.w, k = l.kernel;
  const auto p = static_cast<std::ptrdiff_t>(k / 2);
  if (grad_in) grad_in->assign(l.in * h * w, 0.0);
  for (std::size_t co = 0; co < l.out; ++co) {
    const double* go = grad_out.data() + co * h * w;
    double sum = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) sum += go[i];
    grad_b[co] += sum;
    for (std::size_t ci = 0; ci < l.in; ++ci) {
      const double* src = in.v.data() + ci * h * w;
      const std::size_t kbase = ((co * l.in + ci) * k) * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - p;
        std::size_t y0, y1;
        tap_range(dy, h, y0, y1);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - p;
          std::size_t x0, x1;
          tap_range(dx, w, x0, x1);
          const double wt = weights[kbase + ky * k + kx];
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* grow = go + y * w;
            const std::size_t iy = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy);
            const double* irow = src + iy * w;
            double* girow = grad_in ? grad_in->data() + ci * h * w + iy * w : nullptr;
            for (std::size_t x = x0; x < x1; ++x) {
              const std::size_t ix = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx);
              acc += grow[x] * irow[ix];
              if (girow) girow[ix] += wt * grow[x];
            }
          }
          grad_w[kbase + ky * k + kx] += acc;
        }
      }
    }
  }
}

}  // namespace detail

/// A network specification together with its parameter vector.
class DenoiserModel {
 public:
  DenoiserModel() = default;

  explicit DenoiserModel(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    params_ = ParamVector(spec_.layout(), std::vector<double>(spec_.param_count(), 0.0));
  }

  DenoiserModel(NetworkSpec spec, ParamVector params) : DenoiserModel(std::move(spec)) {
    set_params(std::move(params));
  }

  const NetworkSpec& spec() const noexcept { return spec_; }
  const ParamVector& params() const noexcept { return params_; }
  ParamVector get_params() const { return params_; }

  void set_params(ParamVector params) {
    if (params.size() != params_.size()) {
      throw DimensionError("set_params: expected " + std::to_string(params_.size()) + " values, got " +
                           std::to_string(params.size()));
    }
    if (!params.same_layout(params_)) {
      // A flat vector of the right length is accepted and re-tagged with
      // the network's layout.
      params = ParamVector(params_.layout(), std::vector<double>(params.values().begin(), params.values().end()));
    }
    params_ = std::move(params);
  }

  DenoiserModel with_params(ParamVector params) const {
    DenoiserModel m = *this;
    m.set_params(std::move(params));
    return m;
  }

  /// Weight and bias views of layer `index`.
  std::span<const double> weights(std::size_t index) const { return block(index, false); }
  std::span<const double> bias(std::size_t index) const { return block(index, true); }

  /// Checks x against the input extent and converts it to an activation.
  detail::Activation to_activation(const Tensor& x) const {
    const LayerSpec& first = spec_.layers.front();
    detail::Activation a;
    if (first.kind == LayerKind::conv2d) {
      if (x.rank() == 2 && first.in == 1) {
        a.c = 1;
        a.h = x.shape()[0];
        a.w = x.shape()[1];
      } else if (x.rank() == 3 && x.shape()[0] == first.in) {
        a.c = x.shape()[0];
        a.h = x.shape()[1];
        a.w = x.shape()[2];
      } else {
        throw DimensionError("conv denoiser expects an image with " + std::to_string(first.in) +
                             " channel(s), got shape " + shape_string(x.shape()));
      }
      if (a.h < first.kernel || a.w < first.kernel) {
        throw DimensionError("image " + shape_string(x.shape()) + " is smaller than the kernel");
      }
    } else {
      if (x.size() != first.in) {
        throw DimensionError("denoiser expects " + std::to_string(first.in) + " inputs, got shape " +
                             shape_string(x.shape()));
      }
      a.c = x.size();
    }
    a.v.assign(x.values().begin(), x.values().end());
    return a;
  }

  /// Runs layer `i` on `in`. Activations apply in place semantics via copy.
  void apply_layer(std::size_t i, const detail::Activation& in, detail::Activation& out) const {
    const LayerSpec& l = spec_.layers[i];
    switch (l.kind) {
      case LayerKind::fully_connected:
        detail::dense_forward(l, weights(i), bias(i), in, out);
        break;
      case LayerKind::conv2d:
        detail::conv_forward(l, weights(i), bias(i), in, out);
        break;
      case LayerKind::relu:
        out = in;
        for (double& v : out.v) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::linear:
        out = in;
        break;
    }
  }

  Tensor forward(const Tensor& x) const {
    detail::Activation cur = to_activation(x);
    detail::Activation next;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      apply_layer(i, cur, next);
      std::swap(cur, next);
    }
    std::vector<double> out = std::move(cur.v);
    if (spec_.residual) {
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = x[j] - out[j];
    }
    for (double v : out) {
      if (!std::isfinite(v)) throw NumericError("non-finite value in denoiser output");
    }
    return Tensor(x.shape(), std::move(out));
  }

 private:
  std::span<const double> block(std::size_t index, bool is_bias) const {
    for (const auto& b : params_.layout().blocks) {
      if (b.layer == index && b.is_bias == is_bias) return params_.values().subspan(b.offset, b.length);
    }
    throw ArgumentError("layer " + std::to_string(index) + " has no parameters");
  }

  NetworkSpec spec_;
  ParamVector params_;
};

inline Tensor forward(const DenoiserModel& model, const Tensor& x) { return model.forward(x); }

inline ParamVector get_params(const DenoiserModel& model) { return model.get_params(); }

inline DenoiserModel set_params(DenoiserModel model, ParamVector params) {
  model.set_params(std::move(params));
  return model;
}

/// He initialization: weights ~ N(0, 2 / fan_in), biases zero.
inline ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  const ParamLayout layout = spec.layout();
  std::vector<double> values(layout.total(), 0.0);
  for (const auto& b : layout.blocks) {
    if (b.is_bias) continue;
    const LayerSpec& l = spec.layers[b.layer];
    RngStream stream = RngStream::derive(seed, StreamPurpose::init, {b.layer});
    const double sd = std::sqrt(2.0 / static_cast<double>(l.fan_in()));
    for (std::size_t j = 0; j < b.length; ++j) values[b.offset + j] = stream.normal(0.0, sd);
  }
  return ParamVector(layout, std::move(values));
}

inline DenoiserModel make_model(const NetworkSpec& spec, std::uint64_t seed) {
  return DenoiserModel(spec, init_params(spec, seed));
}

}  // namespace metadenoise
