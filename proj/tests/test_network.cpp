#include <gtest/gtest.h>

#include <cmath>

#include "metadenoise/network.hpp"

using namespace metadenoise;

namespace {

NetworkSpec single_dense(std::size_t in, std::size_t out) {
  NetworkSpec s;
  s.layers = {LayerSpec::dense(in, out), LayerSpec::linear(out)};
  return s;
}

// Straightforward zero-padded convolution, written independently of the
// library kernels: out[co][y][x] = b[co] + sum w[co][ci][ky][kx] * in[ci][y+ky-p][x+kx-p].
std::vector<double> naive_conv(const std::vector<double>& in, std::size_t cin, std::size_t cout, std::size_t h,
                               std::size_t w, std::size_t k, std::span<const double> wt, std::span<const double> b) {
  const int p = static_cast<int>(k / 2);
  std::vector<double> out(cout * h * w);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = b[co];
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const int yy = static_cast<int>(y + ky) - p, xx = static_cast<int>(x + kx) - p;
              if (yy < 0 || xx < 0 || yy >= static_cast<int>(h) || xx >= static_cast<int>(w)) continue;
              acc += wt[((co * cin + ci) * k + ky) * k + kx] * in[(ci * h + yy) * w + xx];
            }
        out[(co * h + y) * w + x] = acc;
      }
  return out;
}

}  // namespace

TEST(Network, EcgAutoencoderShape) {
  const NetworkSpec s = build_ecg_autoencoder();
  EXPECT_EQ(s.weight_layer_count(), 8u);
  EXPECT_EQ(s.input_extent(), 30u);
  EXPECT_EQ(s.output_extent(), 30u);
  EXPECT_FALSE(s.residual);
}

TEST(Network, EcgAutoencoderParamCount) {
  // Sum of in*out + out over the eight dense layers (= 107455).
  const std::size_t dims[] = {30, 150, 150, 150, 25, 150, 150, 150, 30};
  std::size_t expected = 0;
  for (int i = 0; i < 8; ++i) expected += dims[i] * dims[i + 1] + dims[i + 1];
  EXPECT_EQ(expected, 107455u);
  EXPECT_EQ(build_ecg_autoencoder().param_count(), expected);
}

TEST(Network, ReducedAutoencoderParamCount) {
  const NetworkSpec s = build_ecg_autoencoder(30, 40, 10);
  const std::size_t dims[] = {30, 40, 40, 40, 10, 40, 40, 40, 30};
  std::size_t expected = 0;
  for (int i = 0; i < 8; ++i) expected += dims[i] * dims[i + 1] + dims[i + 1];
  EXPECT_EQ(s.param_count(), expected);
}

TEST(Network, ForwardPreservesShapeOnBatch) {
  const DenoiserModel m = make_model(build_ecg_autoencoder(), 1);
  RngStream s(2);
  for (int i = 0; i < 5; ++i) {
    std::vector<double> x(30);
    for (double& v : x) v = s.normal();
    EXPECT_EQ(m.forward(Tensor::vector(x)).shape(), Shape{30});
  }
}

TEST(Network, ConvDenoiserTinyParamCount) {
  const NetworkSpec s = build_conv_denoiser(2, 1, true);
  EXPECT_EQ(s.weight_layer_count(), 2u);
  EXPECT_EQ(s.param_count(), 20u);
}

TEST(Network, ConvDenoiserDepthTooSmall) { EXPECT_THROW(build_conv_denoiser(1, 4), ArgumentError); }

TEST(Network, ConvSamePadding) {
  const DenoiserModel m = make_model(build_conv_denoiser(5, 16, true), 3);
  const Tensor x = Tensor::filled({32, 32}, 0.3);
  EXPECT_EQ(m.forward(x).shape(), (Shape{32, 32}));
}

TEST(Network, ZeroResidualIsIdentity) {
  const DenoiserModel m(build_conv_denoiser(3, 4, true));
  RngStream s(4);
  std::vector<double> v(64);
  for (double& e : v) e = s.normal();
  const Tensor x({8, 8}, v);
  EXPECT_EQ(m.forward(x), x);
}

TEST(Network, ZeroNonResidualIsZero) {
  const DenoiserModel m(build_ecg_autoencoder(30, 8, 4));
  const Tensor y = m.forward(Tensor::filled({30}, 2.5));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Network, SingleDenseHandEvaluation) {
  DenoiserModel m(single_dense(1, 1));
  m.set_params(ParamVector::flat({2.0, 1.0}));  // W = [[2]], b = [1]
  EXPECT_DOUBLE_EQ(m.forward(Tensor::vector({3.0}))[0], 7.0);
}

TEST(Network, DenseMatchesMatrixProduct) {
  const DenoiserModel m = make_model(single_dense(3, 3), 5);
  const auto w = m.weights(0);
  const auto b = m.bias(0);
  const Tensor x = Tensor::vector({0.5, -1.0, 2.0});
  const Tensor y = m.forward(x);
  for (std::size_t o = 0; o < 3; ++o) {
    double acc = b[o];
    for (std::size_t i = 0; i < 3; ++i) acc += w[o * 3 + i] * x[i];
    EXPECT_NEAR(y[o], acc, 1e-14);
  }
}

TEST(Network, ConvLayerMatchesNaiveConvolution) {
  NetworkSpec spec;
  spec.layers = {LayerSpec::conv(2, 3, 3), LayerSpec::relu(3), LayerSpec::conv(3, 2, 5), LayerSpec::linear(2)};
  DenoiserModel m = make_model(spec, 8);
  ParamVector p = m.get_params();
  RngStream s(9);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = s.normal();  // nonzero biases too
  m.set_params(p);
  std::vector<double> x(2 * 6 * 7);
  for (double& v : x) v = s.normal();
  const Tensor in({2, 6, 7}, x);

  auto h = naive_conv(x, 2, 3, 6, 7, 3, m.weights(0), m.bias(0));
  for (double& v : h) v = std::max(v, 0.0);
  const auto expected = naive_conv(h, 3, 2, 6, 7, 5, m.weights(2), m.bias(2));
  const Tensor y = m.forward(in);
  ASSERT_EQ(y.size(), expected.size());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected[i], 1e-12);
}

TEST(Network, ForwardRejectsWrongExtent) {
  const DenoiserModel m(build_ecg_autoencoder(30, 8, 4));
  EXPECT_THROW(m.forward(Tensor::filled({29}, 0)), DimensionError);
  const DenoiserModel c(build_conv_denoiser(2, 2));
  EXPECT_THROW(c.forward(Tensor::filled({2, 2}, 0)), DimensionError);  // smaller than kernel
}

TEST(Network, ForwardIsDeterministic) {
  const DenoiserModel m = make_model(build_conv_denoiser(3, 4), 12);
  const Tensor x = Tensor::filled({9, 9}, 0.7);
  EXPECT_EQ(m.forward(x), m.forward(x));
}

TEST(Params, RoundTripIsBitExact) {
  const DenoiserModel m = make_model(build_ecg_autoencoder(30, 8, 4), 2);
  const DenoiserModel m2 = set_params(m, get_params(m));
  EXPECT_EQ(m2.get_params(), m.get_params());
}

TEST(Params, WrongLengthRejected) {
  DenoiserModel m(build_ecg_autoencoder(30, 8, 4));
  EXPECT_THROW(m.set_params(ParamVector::flat({1.0, 2.0})), DimensionError);
}

TEST(Params, PerturbingOneCoordinateChangesOneEntry) {
  const NetworkSpec spec = build_ecg_autoencoder(30, 8, 4);
  const DenoiserModel m = make_model(spec, 7);
  const ParamVector base = m.get_params();
  for (std::size_t idx : {std::size_t{0}, std::size_t{100}, base.size() - 1}) {
    ParamVector p = base;
    p[idx] += 1.0;
    const DenoiserModel q = m.with_params(p);
    std::size_t changed = 0;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      if (spec.layers[l].kind != LayerKind::fully_connected) continue;
      for (std::size_t j = 0; j < q.weights(l).size(); ++j) changed += q.weights(l)[j] != m.weights(l)[j];
      for (std::size_t j = 0; j < q.bias(l).size(); ++j) changed += q.bias(l)[j] != m.bias(l)[j];
    }
    EXPECT_EQ(changed, 1u);
  }
}

TEST(Init, SameSeedBitIdentical) {
  const NetworkSpec spec = build_conv_denoiser(3, 4);
  EXPECT_EQ(init_params(spec, 5), init_params(spec, 5));
  EXPECT_NE(init_params(spec, 5), init_params(spec, 6));
}

TEST(Init, BiasesZero) {
  const NetworkSpec spec = build_ecg_autoencoder();
  const ParamVector p = init_params(spec, 1);
  for (const auto& b : p.layout().blocks) {
    if (!b.is_bias) continue;
    for (std::size_t j = 0; j < b.length; ++j) EXPECT_EQ(p[b.offset + j], 0.0);
  }
}

TEST(Init, HeVarianceOf150Layer) {
  const NetworkSpec spec = build_ecg_autoencoder();
  const DenoiserModel m = make_model(spec, 3);
  const auto w = m.weights(2);  // second 150x150 dense layer
  ASSERT_EQ(w.size(), 150u * 150u);
  double sum = 0, sq = 0;
  for (double v : w) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double var = sq / n - (sum / n) * (sum / n);
  EXPECT_NEAR(var, 2.0 / 150.0, 0.2 * 2.0 / 150.0);
}

TEST(Spec, DescriptorRoundTrip) {
  for (const NetworkSpec& s : {build_ecg_autoencoder(), build_conv_denoiser(4, 8, true), build_conv_denoiser(2, 1, false)}) {
    const NetworkSpec p = NetworkSpec::parse(s.descriptor());
    EXPECT_EQ(p.descriptor(), s.descriptor());
    EXPECT_EQ(p.param_count(), s.param_count());
  }
}

TEST(Spec, ParseRejectsGarbage) {
  EXPECT_THROW(NetworkSpec::parse("fc:3:3 linear:3"), FormatError);            // no residual flag
  EXPECT_THROW(NetworkSpec::parse("residual=0 fc:3:4 linear:3"), FormatError);  // extent mismatch
  EXPECT_THROW(NetworkSpec::parse("residual=0 blob:3"), FormatError);
}

TEST(Spec, ValidateRejectsEvenKernel) {
  NetworkSpec s;
  s.layers = {LayerSpec::conv(1, 1, 2), LayerSpec::linear(1)};
  EXPECT_THROW(s.validate(), ArgumentError);
}
