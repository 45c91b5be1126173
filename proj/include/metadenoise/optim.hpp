#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "metadenoise/autodiff.hpp"
#include "metadenoise/errors.hpp"
#include "metadenoise/network.hpp"
#include "metadenoise/paired_set.hpp"
#include "metadenoise/rng.hpp"
#include "metadenoise/tensor.hpp"

namespace metadenoise {

enum class OptimizerKind { sgd, adam, adadelta };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::adadelta: return "adadelta";
  }
  return "?";
}

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adadelta") return OptimizerKind::adadelta;
  throw ArgumentError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double rho = 0.9;
  double adadelta_eps = 1e-6;

  // AdaDelta's rate is a multiplier on its displacement, so 0 is allowed
  // there and means "frozen".
  void validate() const {
    const bool rate_ok = kind == OptimizerKind::adadelta ? learning_rate >= 0.0 : learning_rate > 0.0;
    if (!rate_ok || !std::isfinite(learning_rate)) throw ArgumentError("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
      throw ArgumentError("adam betas must lie in (0, 1)");
    }
    if (!(rho > 0.0 && rho < 1.0)) throw ArgumentError("adadelta rho must lie in (0, 1)");
  }

  static OptimizerConfig sgd(double lr) { return {OptimizerKind::sgd, lr}; }
  static OptimizerConfig adam(double lr) { return {OptimizerKind::adam, lr}; }
  static OptimizerConfig adadelta(double lr) { return {OptimizerKind::adadelta, lr}; }
};

/// Moment accumulators, layout-matched to theta. Adam uses first/second
/// moments; AdaDelta uses them as E[g^2] and E[dx^2].
struct OptimizerState {
  ParamVector first;
  ParamVector second;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ParamVector& theta) {
    return {ParamVector::zeros_like(theta), ParamVector::zeros_like(theta), 0};
  }
};

inline ParamVector sgd_step(const ParamVector& theta, const ParamVector& grad, double lr) {
  require_same_layout(theta, grad, "sgd_step");
  ParamVector next = theta;
  for (std::size_t i = 0; i < next.size(); ++i) next[i] -= lr * grad[i];
  return next;
}

inline void require_state_layout(const ParamVector& theta, const OptimizerState& state, const char* what) {
  require_same_layout(theta, state.first, what);
  require_same_layout(theta, state.second, what);
}

/// Bias-corrected Adam.
inline void adam_update(ParamVector& theta, const ParamVector& grad, OptimizerState& state,
                        const OptimizerConfig& cfg) {
  require_same_layout(theta, grad, "adam_step");
  require_state_layout(theta, state, "adam_step");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    double& m = state.first[i];
    double& v = state.second[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    theta[i] -= cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps);
  }
}

/// AdaDelta; the learning rate scales the final displacement only.
inline void adadelta_update(ParamVector& theta, const ParamVector& grad, OptimizerState& state,
                            const OptimizerConfig& cfg) {
  require_same_layout(theta, grad, "adadelta_step");
  require_state_layout(theta, state, "adadelta_step");
  ++state.step;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    double& eg2 = state.first[i];
    double& edx2 = state.second[i];
    eg2 = cfg.rho * eg2 + (1.0 - cfg.rho) * g * g;
    const double dx = -std::sqrt(edx2 + cfg.adadelta_eps) / std::sqrt(eg2 + cfg.adadelta_eps) * g;
    edx2 = cfg.rho * edx2 + (1.0 - cfg.rho) * dx * dx;
    theta[i] += cfg.learning_rate * dx;
  }
}

struct StepResult {
  ParamVector theta;
  OptimizerState state;
};

inline StepResult adam_step(ParamVector theta, const ParamVector& grad, OptimizerState state,
                            const OptimizerConfig& cfg) {
  adam_update(theta, grad, state, cfg);
  return {std::move(theta), std::move(state)};
}

inline StepResult adadelta_step(ParamVector theta, const ParamVector& grad, OptimizerState state,
                                const OptimizerConfig& cfg) {
  adadelta_update(theta, grad, state, cfg);
  return {std::move(theta), std::move(state)};
}

inline void apply_step(ParamVector& theta, const ParamVector& grad, OptimizerState& state,
                       const OptimizerConfig& cfg) {
  switch (cfg.kind) {
    case OptimizerKind::sgd:
      require_same_layout(theta, grad, "sgd_step");
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.learning_rate * grad[i];
      ++state.step;
      break;
    case OptimizerKind::adam: adam_update(theta, grad, state, cfg); break;
    case OptimizerKind::adadelta: adadelta_update(theta, grad, state, cfg); break;
  }
}

struct InnerLoopConfig {
  OptimizerConfig optimizer;
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  std::uint64_t shuffle_seed = 0;

  void validate() const {
    optimizer.validate();
    if (batch_size < 1) throw ArgumentError("batch size must be at least 1");
  }
};

struct InnerLoopResult {
  ParamVector theta;
  double mean_loss = 0.0;  // mean mini-batch loss over all steps; 0 if none
  std::size_t steps = 0;
};

/// theta' = g(L, theta, s): `epochs` passes over `data` in shuffled
/// mini-batches, each applying the configured rule to the batch-mean MSE
/// gradient. Optimizer state starts fresh. The model is not modified.
inline InnerLoopResult run_inner_loop_detailed(const DenoiserModel& model, const PairedSet& data,
                                               const InnerLoopConfig& cfg) {
  cfg.validate();
  data.check();
  if (cfg.epochs > 0 && data.empty()) throw ArgumentError("inner loop over an empty training set");

  DenoiserModel work = model;
  ParamVector theta = model.get_params();
  OptimizerState state = OptimizerState::for_params(theta);
  InnerLoopResult result;

  std::vector<Tensor> xb, yb;
  double loss_sum = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream stream = RngStream::derive(cfg.shuffle_seed, StreamPurpose::shuffle, {epoch});
    const auto order = shuffled_indices(data.size(), stream);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      xb.clear();
      yb.clear();
      for (std::size_t j = start; j < end; ++j) {
        xb.push_back(data.noisy[order[j]]);
        yb.push_back(data.clean[order[j]]);
      }
      work.set_params(theta);
      auto lg = loss_and_gradient(work, xb, yb);
      loss_sum += lg.loss;
      apply_step(theta, lg.grad, state, cfg.optimizer);
      ++result.steps;
    }
  }
  result.theta = std::move(theta);
  result.mean_loss = result.steps ? loss_sum / static_cast<double>(result.steps) : 0.0;
  return result;
}

inline ParamVector run_inner_loop(const DenoiserModel& model, const PairedSet& data, const InnerLoopConfig& cfg) {
  return run_inner_loop_detailed(model, data, cfg).theta;
}

}  // namespace metadenoise
