#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "metadenoise/autodiff.hpp"
#include "metadenoise/training.hpp"

using namespace metadenoise;

namespace {

constexpr std::size_t D = 6;

NetworkSpec small_ae() { return build_autoencoder(D, {5, 3, 5}); }

NetworkSpec linear_net() {
  NetworkSpec s;
  s.layers = {LayerSpec::dense(D, D), LayerSpec::linear(D)};
  return s;
}

std::vector<Tensor> clean_pool(std::size_t n, std::uint64_t seed) {
  RngStream s(seed);
  std::vector<Tensor> pool;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(D);
    for (double& x : v) x = s.uniform(-1.0, 1.0);
    pool.push_back(Tensor::vector(v));
  }
  return pool;
}

InnerLoopConfig sgd(double lr, std::size_t epochs, std::size_t batch) {
  InnerLoopConfig c;
  c.optimizer = OptimizerConfig::sgd(lr);
  c.epochs = epochs;
  c.batch_size = batch;
  return c;
}

double set_loss(const DenoiserModel& m, const PairedSet& p) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += mse_loss(m.forward(p.noisy[i]), p.clean[i]);
  return s / static_cast<double>(p.size());
}

RealSplit split_of(const std::vector<Tensor>& clean, std::size_t k, std::uint64_t seed) {
  PairedSet pairs;
  RngStream s(seed);
  for (const auto& y : clean) {
    std::vector<double> x(y.values().begin(), y.values().end());
    for (double& v : x) v += 0.2 * s.normal();
    pairs.push_back(Tensor::vector(x), y);
  }
  RngStream ss(seed + 1);
  return split_real(pairs, k, ss);
}

const TaskDistribution kDist = TaskDistribution::gaussian(-0.1, 0.1, 0.05, 0.3);

}  // namespace

TEST(OuterUpdate, HandExample) {
  const ParamVector th = ParamVector::flat({1.0, -2.0});
  const ParamVector next =
      reptile_outer_update(th, {ParamVector::flat({2.0, 0.0}), ParamVector::flat({0.0, -2.0})}, 0.5);
  EXPECT_DOUBLE_EQ(next[0], 1.0);
  EXPECT_DOUBLE_EQ(next[1], -1.5);
}

TEST(OuterUpdate, FixedPoint) {
  const ParamVector th = ParamVector::flat({0.3, -7.0, 1e-9});
  EXPECT_EQ(reptile_outer_update(th, {th, th, th}, 0.7), th);
}

TEST(OuterUpdate, FullInterpolationSingleTask) {
  const ParamVector th = ParamVector::flat({0.1, 0.2});
  const ParamVector p = ParamVector::flat({0.37, -1.0 / 3.0});
  EXPECT_EQ(reptile_outer_update(th, {p}, 1.0), p);
}

TEST(OuterUpdate, PermutationBitIdentical) {
  RngStream s(21);
  const ParamVector th = ParamVector::flat({s.normal(), s.normal(), s.normal()});
  std::vector<ParamVector> list;
  for (int i = 0; i < 7; ++i) list.push_back(ParamVector::flat({s.normal() * 1e3, s.normal() * 1e-3, s.normal()}));
  const ParamVector ref = reptile_outer_update(th, list, 0.3);
  std::sort(list.begin(), list.end(), [](const ParamVector& a, const ParamVector& b) { return a[0] < b[0]; });
  do {
    EXPECT_EQ(reptile_outer_update(th, list, 0.3), ref);
  } while (std::next_permutation(list.begin(), list.begin() + 4,
                                 [](const ParamVector& a, const ParamVector& b) { return a[0] < b[0]; }));
}

TEST(OuterUpdate, Errors) {
  const ParamVector th = ParamVector::flat({1.0, 2.0});
  EXPECT_THROW(reptile_outer_update(th, {}, 0.5), ArgumentError);
  EXPECT_THROW(reptile_outer_update(th, {ParamVector::flat({1.0})}, 0.5), ArgumentError);
}

TEST(MetaTrain, ZeroIterationsIsNoOp) {
  const DenoiserModel m = make_model(small_ae(), 3);
  MetaConfig cfg;
  cfg.outer_iterations = 0;
  cfg.k = 4;
  EXPECT_EQ(meta_train(m, kDist, clean_pool(20, 1), cfg).model.params(), m.params());
}

TEST(MetaTrain, ZeroEpsilonIsNoOp) {
  const DenoiserModel m = make_model(small_ae(), 3);
  MetaConfig cfg;
  cfg.outer_iterations = 3;
  cfg.epsilon = 0.0;
  cfg.k = 4;
  cfg.inner = sgd(0.1, 2, 2);
  const auto r = meta_train(m, kDist, clean_pool(20, 1), cfg);
  EXPECT_EQ(r.model.params(), m.params());
  EXPECT_EQ(r.log.size(), 3u);
}

TEST(MetaTrain, ZeroInnerEpochsIsFixedPoint) {
  const DenoiserModel m = make_model(small_ae(), 4);
  MetaConfig cfg;
  cfg.outer_iterations = 4;
  cfg.epsilon = 0.9;
  cfg.k = 3;
  cfg.inner = sgd(0.1, 0, 1);
  EXPECT_EQ(meta_train(m, kDist, clean_pool(20, 1), cfg).model.params(), m.params());
}

// n = 1 and a one-step SGD inner loop: the meta step is theta - eps*alpha*grad.
TEST(MetaTrain, SingleStepReduction) {
  const double alpha = 0.05, eps = 0.3;
  const auto pool = clean_pool(30, 2);
  for (std::size_t k : {1u, 5u}) {
    const DenoiserModel m = make_model(small_ae(), 5);
    MetaConfig cfg;
    cfg.tasks_per_iteration = 1;
    cfg.outer_iterations = 1;
    cfg.epsilon = eps;
    cfg.k = k;
    cfg.base_seed = 77;
    cfg.inner = sgd(alpha, 1, k);
    const ParamVector got = meta_train(m, kDist, pool, cfg).model.params();

    const KShotSet set = generate_task_set(kDist, pool, k, cfg.base_seed, 0);
    const ParamVector g = gradient(m, set.pairs.noisy, set.pairs.clean);
    const ParamVector th = m.params();
    for (std::size_t i = 0; i < th.size(); ++i) EXPECT_NEAR(got[i], th[i] - eps * alpha * g[i], 1e-12);
  }
}

TEST(MetaTrain, Deterministic) {
  const DenoiserModel m = make_model(small_ae(), 6);
  MetaConfig cfg;
  cfg.outer_iterations = 3;
  cfg.k = 4;
  cfg.base_seed = 9;
  cfg.inner = sgd(0.05, 2, 2);
  const auto pool = clean_pool(20, 1);
  EXPECT_EQ(meta_train(m, kDist, pool, cfg).model.params(), meta_train(m, kDist, pool, cfg).model.params());
}

TEST(MetaTrain, WorkerCountDoesNotMatter) {
  const DenoiserModel m = make_model(small_ae(), 6);
  MetaConfig cfg;
  cfg.tasks_per_iteration = 5;
  cfg.outer_iterations = 4;
  cfg.k = 4;
  cfg.base_seed = 10;
  cfg.inner.optimizer = OptimizerConfig::adam(0.01);
  cfg.inner.epochs = 2;
  cfg.inner.batch_size = 2;
  const auto pool = clean_pool(20, 1);
  const ParamVector one = meta_train(m, kDist, pool, cfg).model.params();
  for (std::size_t w : {2u, 3u, 8u}) {
    cfg.workers = w;
    EXPECT_EQ(meta_train(m, kDist, pool, cfg).model.params(), one) << w << " workers";
  }
}

TEST(MetaTrain, TaskPoolReusesTasks) {
  const auto pool = clean_pool(20, 1);
  std::set<double> sigmas;
  for (std::uint64_t i = 0; i < 60; ++i) sigmas.insert(generate_task_set(kDist, pool, 2, 4, i, 3).task.b);
  EXPECT_EQ(sigmas.size(), 3u);
}

TEST(Supervised, DegenerateBudgetMatchesInnerLoop) {
  const auto pool = clean_pool(20, 1);
  const DenoiserModel m = make_model(small_ae(), 7);
  SupervisedConfig cfg;
  cfg.budget = 5;
  cfg.samples_per_task = 5;
  cfg.inner = sgd(0.05, 1, 2);
  cfg.base_seed = 12;
  const DenoiserModel got = train_supervised(m, kDist, pool, cfg);

  const KShotSet set = generate_task_set(kDist, pool, 5, 12, 0);
  InnerLoopConfig inner = cfg.inner;
  inner.shuffle_seed = derive_seed(12, StreamPurpose::shuffle, {~std::uint64_t{0}});
  EXPECT_EQ(got.params(), run_inner_loop(m, set.pairs, inner));
}

TEST(Supervised, MatchingBudget) {
  MetaConfig meta;
  meta.tasks_per_iteration = 2;
  meta.outer_iterations = 7;
  meta.k = 3;
  const SupervisedConfig s = SupervisedConfig::matching(meta);
  EXPECT_EQ(s.budget, 42u);
  EXPECT_EQ(build_supervised_pool(kDist, clean_pool(10, 1), s).size(), 42u);
}

TEST(Supervised, PoolLossNonIncreasingOnLinearModel) {
  const auto pool = clean_pool(20, 1);
  SupervisedConfig cfg;
  cfg.budget = 40;
  cfg.samples_per_task = 10;
  cfg.base_seed = 3;
  const PairedSet data = build_supervised_pool(kDist, pool, cfg);
  DenoiserModel m = make_model(linear_net(), 8);
  double prev = set_loss(m, data);
  for (int e = 0; e < 10; ++e) {
    // full batch, one epoch at a time: plain gradient descent on a convex loss
    m = train_on(m, data, sgd(0.02, 1, data.size()));
    const double l = set_loss(m, data);
    EXPECT_LE(l, prev);
    prev = l;
  }
}

TEST(Supervised, Deterministic) {
  const auto pool = clean_pool(20, 1);
  const DenoiserModel m = make_model(small_ae(), 7);
  SupervisedConfig cfg;
  cfg.budget = 23;
  cfg.inner = sgd(0.05, 2, 4);
  EXPECT_EQ(train_supervised(m, kDist, pool, cfg).params(), train_supervised(m, kDist, pool, cfg).params());
  EXPECT_THROW(build_supervised_pool(kDist, pool, SupervisedConfig{}), ArgumentError);
}

TEST(FineTune, ZeroEpochs) {
  const DenoiserModel m = make_model(small_ae(), 9);
  const RealSplit sp = split_of(clean_pool(8, 2), 3, 1);
  EXPECT_EQ(fine_tune(m, sp, sgd(0.1, 0, 1)).params(), m.params());
}

TEST(FineTune, OneShotIsOneManualStep) {
  const DenoiserModel m = make_model(small_ae(), 9);
  const RealSplit sp = split_of(clean_pool(8, 2), 1, 1);
  const ParamVector got = fine_tune(m, sp, sgd(0.1, 1, 1)).params();
  // independent gradient: central differences of the single-pair loss
  const Tensor x = sp.finetune.noisy[0], y = sp.finetune.clean[0];
  const ParamVector g = finite_diff_gradient(
      [&](const ParamVector& p) { return mse_loss(m.with_params(p).forward(x), y); }, m.params(), 1e-6);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], m.params()[i] - 0.1 * g[i], 1e-8);
}

TEST(FineTune, ReducesLossOnLinearModel) {
  const DenoiserModel m = make_model(linear_net(), 10);
  const RealSplit sp = split_of(clean_pool(12, 3), 6, 2);
  const DenoiserModel t = fine_tune(m, sp, sgd(0.01, 1, 6));
  EXPECT_LT(set_loss(t, sp.finetune), set_loss(m, sp.finetune));
}

TEST(Transfer, ZeroBudgetIsFineTune) {
  const auto pool = clean_pool(20, 1);
  const DenoiserModel m = make_model(small_ae(), 11);
  const RealSplit sp = split_of(clean_pool(8, 2), 3, 1);
  const InnerLoopConfig ft = sgd(0.05, 3, 2);
  const auto r = transfer_learn(m, kDist, pool, SupervisedConfig{}, sp, ft);
  EXPECT_EQ(r.pretrained.params(), m.params());
  EXPECT_EQ(r.finetuned.params(), fine_tune(m, sp, ft).params());
}

TEST(Transfer, ZeroFineTuneEpochsIsSupervised) {
  const auto pool = clean_pool(20, 1);
  const DenoiserModel m = make_model(small_ae(), 11);
  const RealSplit sp = split_of(clean_pool(8, 2), 3, 1);
  SupervisedConfig cfg;
  cfg.budget = 30;
  cfg.inner = sgd(0.05, 2, 5);
  const auto r = transfer_learn(m, kDist, pool, cfg, sp, sgd(0.05, 0, 1));
  EXPECT_EQ(r.finetuned.params(), train_supervised(m, kDist, pool, cfg).params());
  EXPECT_EQ(r.pretrained.params(), r.finetuned.params());
}

TEST(ParallelFor, EveryIndexOnce) {
  std::vector<int> hits(37, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw NumericError("x"); }), NumericError);
}
