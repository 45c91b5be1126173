#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "metadenoise/tasks.hpp"

using namespace metadenoise;

namespace {

std::vector<Tensor> ramp_pool(std::size_t n, std::size_t d) {
  std::vector<Tensor> pool;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = static_cast<double>(i) + 0.01 * static_cast<double>(j);
    pool.push_back(Tensor::vector(v));
  }
  return pool;
}

Tensor iota(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
  return Tensor::vector(v);
}

}  // namespace

TEST(SampleTask, FixedTemplateAlwaysSameTask) {
  TaskDistribution d;
  d.templates.push_back({NoiseKind::gaussian1d, Prior::fixed(0.05), Prior::fixed(0.2), false, 1.0, {}});
  RngStream s(1);
  for (int i = 0; i < 20; ++i) {
    const NoiseTask t = sample_task(d, s);
    EXPECT_EQ(t.kind, NoiseKind::gaussian1d);
    EXPECT_EQ(t.a, 0.05);
    EXPECT_EQ(t.b, 0.2);
  }
}

TEST(SampleTask, EcgPriorSigmaMean) {
  const TaskDistribution d = TaskDistribution::gaussian(-0.1, 0.1, 0.0, 0.3);
  RngStream s(2);
  double sum = 0, mu_min = 1, mu_max = -1;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const NoiseTask t = sample_task(d, s);
    sum += t.b;
    mu_min = std::min(mu_min, t.a);
    mu_max = std::max(mu_max, t.a);
  }
  EXPECT_NEAR(sum / n, 0.15, 0.003);
  EXPECT_GE(mu_min, -0.1);
  EXPECT_LE(mu_max, 0.1);
}

TEST(SampleTask, EqualWeightSelection) {
  TaskDistribution d;
  d.templates.push_back({NoiseKind::gaussian2d, Prior::fixed(0), Prior::fixed(0.1), false, 1.0, {}});
  d.templates.push_back({NoiseKind::poisson_image, Prior::fixed(30), Prior::fixed(0), false, 1.0, {}});
  RngStream s(3);
  int gauss = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) gauss += sample_task(d, s).kind == NoiseKind::gaussian2d;
  EXPECT_NEAR(static_cast<double>(gauss) / n, 0.5, 0.01);
}

TEST(SampleTask, VarianceParameterIsSquareRooted) {
  TaskDistribution d;
  d.templates.push_back({NoiseKind::gaussian2d, Prior::fixed(0), Prior::fixed(0.0025), true, 1.0, {}});
  RngStream s(4);
  EXPECT_DOUBLE_EQ(sample_task(d, s).b, 0.05);
}

TEST(SampleTask, SetPriorOnlyYieldsMembers) {
  TaskDistribution d;
  d.templates.push_back({NoiseKind::poisson_image, Prior::set({30, 100, 300}), Prior::fixed(0), false, 1.0, {}});
  RngStream s(5);
  std::set<double> seen;
  for (int i = 0; i < 300; ++i) seen.insert(sample_task(d, s).a);
  EXPECT_EQ(seen, (std::set<double>{30, 100, 300}));
}

TEST(SampleTask, EmptyDistribution) {
  RngStream s(1);
  EXPECT_THROW(sample_task(TaskDistribution{}, s), ArgumentError);
}

TEST(KShot, FullPoolUsesEveryElementOnce) {
  const auto pool = ramp_pool(12, 4);
  RngStream s(6);
  const KShotSet set = build_kshot_set(pool, NoiseTask::gaussian(0, 0.1, 9), 12, s);
  std::vector<std::size_t> idx = set.pool_indices;
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(idx[i], i);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(set.clean()[i], pool[set.pool_indices[i]]);
}

TEST(KShot, IdentityTask) {
  const auto pool = ramp_pool(8, 5);
  RngStream s(7);
  const KShotSet set = build_kshot_set(pool, NoiseTask::gaussian(0, 0, 1), 5, s);
  for (std::size_t i = 0; i < set.size(); ++i) EXPECT_EQ(set.noisy()[i], set.clean()[i]);
}

TEST(KShot, Deterministic) {
  const auto pool = ramp_pool(20, 5);
  RngStream a(8), b(8);
  const NoiseTask t = NoiseTask::gaussian(0.02, 0.2, 3);
  const KShotSet x = build_kshot_set(pool, t, 6, a), y = build_kshot_set(pool, t, 6, b);
  EXPECT_EQ(x.pool_indices, y.pool_indices);
  EXPECT_EQ(x.noisy(), y.noisy());
}

TEST(KShot, RecordedTaskReproducesNoisy) {
  const auto pool = ramp_pool(20, 5);
  RngStream s(9);
  const KShotSet set = build_kshot_set(pool, NoiseTask::gaussian(0.02, 0.2, 33), 6, s);
  for (std::size_t i = 0; i < set.size(); ++i) EXPECT_EQ(apply_task(set.task, set.clean()[i], i), set.noisy()[i]);
}

TEST(KShot, TooLarge) {
  RngStream s(1);
  EXPECT_THROW(build_kshot_set(ramp_pool(3, 2), NoiseTask::gaussian(0, 0.1, 1), 4, s), ArgumentError);
}

TEST(Window, Count32) { EXPECT_EQ(window_signal(iota(32), 30, 1).size(), 3u); }

TEST(Window, ExactLength) {
  const Tensor s = iota(30);
  const auto w = window_signal(s, 30, 1);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0], s);
}

TEST(Window, Stride10) {
  const auto w = window_signal(iota(100), 30, 10);
  ASSERT_EQ(w.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 30; ++j) EXPECT_EQ(w[i][j], static_cast<double>(10 * i + j));
  }
}

TEST(Window, TooShort) { EXPECT_THROW(window_signal(iota(10), 30, 1), ArgumentError); }

TEST(Patchify, WholeImage) {
  std::vector<double> v(55 * 55);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const Tensor img({55, 55}, v);
  const auto p = patchify(img, 55, 55);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], img);
}

TEST(Patchify, Counts) {
  EXPECT_EQ(patchify(Tensor({512, 512}), 55, 55).size(), 81u);
  EXPECT_EQ(patchify(Tensor({64, 64}), 32, 16).size(), 9u);
}

TEST(Patchify, TilesMatchSource) {
  std::vector<double> v(7 * 9);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const Tensor img({7, 9}, v);
  const auto p = patchify(img, 3, 2);
  // rows 0,2,4 ; cols 0,2,4,6
  ASSERT_EQ(p.size(), 12u);
  for (std::size_t pr = 0; pr < 3; ++pr)
    for (std::size_t pc = 0; pc < 4; ++pc)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(p[pr * 4 + pc].at(i, j), img.at(2 * pr + i, 2 * pc + j));
}

TEST(Split, PaperSizes) {
  PairedSet pairs;
  for (std::size_t i = 0; i < 160; ++i) pairs.push_back(iota(3), Tensor::filled({3}, static_cast<double>(i)));
  RngStream s(10);
  const RealSplit sp = split_real(pairs, 10, s);
  EXPECT_EQ(sp.finetune.size(), 10u);
  EXPECT_EQ(sp.test.size(), 150u);
  std::set<std::size_t> all(sp.finetune_indices.begin(), sp.finetune_indices.end());
  for (std::size_t i : sp.test_indices) EXPECT_TRUE(all.insert(i).second);  // disjoint
  EXPECT_EQ(all.size(), 160u);                                              // covering
}

TEST(Split, Boundary) {
  PairedSet pairs;
  for (std::size_t i = 0; i < 5; ++i) pairs.push_back(iota(2), iota(2));
  RngStream s(11);
  EXPECT_EQ(split_real(pairs, 4, s).test.size(), 1u);
  EXPECT_THROW(split_real(pairs, 5, s), ArgumentError);
}

TEST(Split, SameStreamSameSplit) {
  PairedSet pairs;
  for (std::size_t i = 0; i < 30; ++i) pairs.push_back(iota(2), iota(2));
  RngStream a(12), b(12);
  EXPECT_EQ(split_real(pairs, 7, a).finetune_indices, split_real(pairs, 7, b).finetune_indices);
}

TEST(Generators, Deterministic) {
  RngStream a(13), b(13);
  EXPECT_EQ(generate_signal(120, a), generate_signal(120, b));
  RngStream c(14), d(14);
  const Tensor p = generate_phantom(32, c);
  EXPECT_EQ(p, generate_phantom(32, d));
  for (double v : p.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(HeldOut, ZeroNoiseIsIdentity) {
  RngStream s(15);
  const Tensor y = iota(30);
  EXPECT_EQ(HeldOutNoise{}.apply(y, s), y);
}

TEST(HeldOut, OffsetAndGainStatistics) {
  HeldOutNoise n;
  n.mu = 0.25;
  n.sigma = 0.2;
  n.gain = 0.3;
  RngStream s(16);
  const Tensor y = Tensor::filled({200000}, 0.5);
  const Tensor x = n.apply(y, s);
  double sum = 0, sq = 0;
  for (double v : x.values()) {
    sum += v - 0.5;
    sq += (v - 0.5) * (v - 0.5);
  }
  const double m = sum / 200000, var = sq / 200000 - m * m;
  EXPECT_NEAR(m, 0.25, 0.003);
  EXPECT_NEAR(var, 0.04 + 0.09 * 0.25, 0.002);  // sigma^2 + gain^2 y^2
}

TEST(HeldOut, CorruptAllIsDeterministic) {
  HeldOutNoise n;
  n.sigma = 0.1;
  const std::vector<Tensor> clean{iota(5), iota(5)};
  EXPECT_EQ(corrupt_all(clean, n, 3).noisy, corrupt_all(clean, n, 3).noisy);
  EXPECT_NE(corrupt_all(clean, n, 3).noisy[0], corrupt_all(clean, n, 3).noisy[1]);
}
