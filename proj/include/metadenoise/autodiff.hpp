#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "metadenoise/errors.hpp"
#include "metadenoise/network.hpp"
#include "metadenoise/tensor.hpp"

namespace metadenoise {

/// Mean over every element of (pred - target)^2.
inline double mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  if (pred.empty()) throw DimensionError("mse_loss of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

/// Mean squared error pooled over a batch: sum of squared residuals divided by
/// the total element count.
inline double mse_loss(std::span<const Tensor> preds, std::span<const Tensor> targets) {
  if (preds.size() != targets.size()) throw DimensionError("mse_loss: batch sizes differ");
  if (preds.empty()) throw DimensionError("mse_loss of an empty batch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < preds.size(); ++b) {
    require_same_shape(preds[b], targets[b], "mse_loss");
    for (std::size_t i = 0; i < preds[b].size(); ++i) {
      const double d = preds[b][i] - targets[b][i];
      s += d * d;
    }
    n += preds[b].size();
  }
  return s / static_cast<double>(n);
}

/// Forward pass over a batch that keeps every intermediate activation so one
/// backward pass can produce dLoss/dtheta. A record is single-use.
class GradientRecord {
 public:
  GradientRecord(const DenoiserModel& model, std::span<const Tensor> inputs) : model_(&model) {
    const auto& layers = model.spec().layers;
    trace_.reserve(inputs.size());
    outputs_.reserve(inputs.size());
    for (const Tensor& x : inputs) {
      std::vector<detail::Activation> acts;
      acts.reserve(layers.size() + 1);
      acts.push_back(model.to_activation(x));
      for (std::size_t i = 0; i < layers.size(); ++i) {
        detail::Activation next;
        model.apply_layer(i, acts.back(), next);
        acts.push_back(std::move(next));
      }
      std::vector<double> out = acts.back().v;
      if (model.spec().residual) {
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = x[j] - out[j];
      }
      for (double v : out) {
        if (!std::isfinite(v)) throw NumericError("non-finite activation during recorded forward pass");
      }
      outputs_.emplace_back(x.shape(), std::move(out));
      trace_.push_back(std::move(acts));
    }
  }

  const std::vector<Tensor>& outputs() const noexcept { return outputs_; }
  bool consumed() const noexcept { return consumed_; }

  /// Back-propagates dLoss/doutput for every sample and returns dLoss/dtheta.
  ParamVector backward(std::span<const Tensor> output_grads) {
    if (consumed_) throw ArgumentError("gradient record already consumed by a backward pass");
    consumed_ = true;
    if (output_grads.size() != outputs_.size()) throw DimensionError("backward: batch size mismatch");

    const DenoiserModel& model = *model_;
    const auto& layers = model.spec().layers;
    const ParamLayout layout = model.params().layout();
    std::vector<double> grad(layout.total(), 0.0);

    // Block offsets per layer.
    std::vector<std::size_t> w_off(layers.size(), 0), b_off(layers.size(), 0);
    for (const auto& b : layout.blocks) (b.is_bias ? b_off : w_off)[b.layer] = b.offset;

    std::vector<double> g, g_prev;
    for (std::size_t s = 0; s < outputs_.size(); ++s) {
      require_same_shape(output_grads[s], outputs_[s], "backward");
      const auto& acts = trace_[s];
      g.assign(output_grads[s].values().begin(), output_grads[s].values().end());
      if (model.spec().residual) {
        for (double& v : g) v = -v;
      }
      for (std::size_t i = layers.size(); i-- > 0;) {
        const LayerSpec& l = layers[i];
        const bool need_input_grad = i > 0;
        switch (l.kind) {
          case LayerKind::relu:
            for (std::size_t j = 0; j < g.size(); ++j) {
              if (!(acts[i].v[j] > 0.0)) g[j] = 0.0;
            }
            break;
          case LayerKind::linear:
            break;
          case LayerKind::fully_connected: {
            std::span<double> gw(grad.data() + w_off[i], l.weight_count());
            std::span<double> gb(grad.data() + b_off[i], l.bias_count());
            detail::dense_backward(l, model.weights(i), acts[i], g, gw, gb, need_input_grad ? &g_prev : nullptr);
            if (need_input_grad) std::swap(g, g_prev);
            break;
          }
          case LayerKind::conv2d: {
            std::span<double> gw(grad.data() + w_off[i], l.weight_count());
            std::span<double> gb(grad.data() + b_off[i], l.bias_count());
            detail::conv_backward(l, model.weights(i), acts[i], g, gw, gb, need_input_grad ? &g_prev : nullptr);
            if (need_input_grad) std::swap(g, g_prev);
            break;
          }
        }
      }
    }
    for (double v : grad) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient");
    }
    trace_.clear();
    return ParamVector(layout, std::move(grad));
  }

 private:
  const DenoiserModel* model_;
  std::vector<std::vector<detail::Activation>> trace_;
  std::vector<Tensor> outputs_;
  bool consumed_ = false;
};

struct LossAndGradient {
  double loss = 0.0;
  ParamVector grad;
};

/// Loss and dLoss/dtheta of the batch mean squared error of model(inputs)
/// against targets.
inline LossAndGradient loss_and_gradient(const DenoiserModel& model, std::span<const Tensor> inputs,
                                         std::span<const Tensor> targets) {
  if (inputs.empty()) throw ArgumentError("gradient of an empty batch");
  if (inputs.size() != targets.size()) throw DimensionError("gradient: inputs and targets differ in count");
  GradientRecord record(model, inputs);
  const auto& outs = record.outputs();
  std::size_t n = 0;
  for (std::size_t b = 0; b < outs.size(); ++b) {
    require_same_shape(outs[b], targets[b], "gradient");
    n += outs[b].size();
  }
  const double scale = 2.0 / static_cast<double>(n);
  std::vector<Tensor> dout;
  dout.reserve(outs.size());
  double sq = 0.0;
  for (std::size_t b = 0; b < outs.size(); ++b) {
    std::vector<double> d(outs[b].size());
    for (std::size_t j = 0; j < d.size(); ++j) {
      const double r = outs[b][j] - targets[b][j];
      sq += r * r;
      d[j] = scale * r;
    }
    dout.emplace_back(outs[b].shape(), std::move(d));
  }
  LossAndGradient result;
  result.loss = sq / static_cast<double>(n);
  result.grad = record.backward(dout);
  return result;
}

inline ParamVector gradient(const DenoiserModel& model, std::span<const Tensor> inputs,
                            std::span<const Tensor> targets) {
  return loss_and_gradient(model, inputs, targets).grad;
}

/// Gradient at `theta` rather than at the model's own parameters.
inline ParamVector gradient(const DenoiserModel& model, const ParamVector& theta, std::span<const Tensor> inputs,
                            std::span<const Tensor> targets) {
  if (theta.size() != model.params().size()) throw DimensionError("gradient: parameter vector does not match the model");
  return gradient(model.with_params(theta), inputs, targets);
}

/// Central differences (loss(theta + h e_i) - loss(theta - h e_i)) / 2h.
inline ParamVector finite_diff_gradient(const std::function<double(const ParamVector&)>& loss_fn,
                                        const ParamVector& theta, double h) {
  if (!(h > 0.0)) throw ArgumentError("finite difference step must be positive");
  ParamVector probe = theta;
  ParamVector out = ParamVector::zeros_like(theta);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = loss_fn(probe);
    probe[i] = orig - h;
    const double down = loss_fn(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("non-finite loss in finite differences");
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

}  // namespace metadenoise
