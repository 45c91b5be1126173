#pragma once

#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "metadenoise/errors.hpp"
#include "metadenoise/network.hpp"
#include "metadenoise/tasks.hpp"
#include "metadenoise/tensor.hpp"

namespace metadenoise {

/// Metric value returned for a zero residual.
inline constexpr double kExactMatch = std::numeric_limits<double>::infinity();

inline bool is_exact(double db) { return std::isinf(db) && db > 0; }

/// 10 log10(max^2 / MSE); kExactMatch when the MSE is zero.
inline double psnr(const Tensor& estimate, const Tensor& reference, double max_val) {
  require_same_shape(estimate, reference, "psnr");
  if (!(max_val > 0.0)) throw ArgumentError("psnr needs a positive peak value");
  double s = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate[i] - reference[i];
    s += d * d;
  }
  if (s == 0.0) return kExactMatch;
  const double mse = s / static_cast<double>(estimate.size());
  return 10.0 * std::log10(max_val * max_val / mse);
}

/// 10 log10(sum y^2 / sum (x - y)^2); kExactMatch when the residual is zero.
inline double snr(const Tensor& estimate, const Tensor& reference) {
  require_same_shape(estimate, reference, "snr");
  double signal = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    signal += reference[i] * reference[i];
    const double d = estimate[i] - reference[i];
    residual += d * d;
  }
  if (signal == 0.0) throw ArgumentError("snr of a zero-energy reference is undefined");
  if (residual == 0.0) return kExactMatch;
  return 10.0 * std::log10(signal / residual);
}

enum class Metric { psnr, snr };

inline std::string to_string(Metric m) { return m == Metric::psnr ? "psnr" : "snr"; }

inline Metric parse_metric(const std::string& s) {
  if (s == "psnr") return Metric::psnr;
  if (s == "snr") return Metric::snr;
  throw ArgumentError("unknown metric '" + s + "'");
}

struct MetricResult {
  std::vector<double> values;  // dB per sample
  double mean = 0.0;
  double sd = 0.0;             // sample standard deviation, 0 for one value

  std::size_t count() const noexcept { return values.size(); }

  static MetricResult from(std::vector<double> values) {
    if (values.empty()) throw ArgumentError("metric result needs at least one value");
    MetricResult r;
    r.values = std::move(values);
    double s = 0.0;
    for (double v : r.values) s += v;
    r.mean = s / static_cast<double>(r.values.size());
    if (r.values.size() > 1 && std::isfinite(r.mean)) {
      double q = 0.0;
      for (double v : r.values) q += (v - r.mean) * (v - r.mean);
      r.sd = std::sqrt(q / static_cast<double>(r.values.size() - 1));
    }
    return r;
  }
};

struct TTestResult {
  double t = 0.0;
  std::size_t df = 0;
  double p = 1.0;           // P(T >= t) under H0, alternative mean(a) > mean(b)
  bool degenerate = false;  // zero spread in the differences
  std::string direction;    // "greater" or "less" by sign of the mean difference
};

/// Upper tail P(T >= t) of Student's t with `df` degrees of freedom, through
/// the regularized incomplete beta function.
inline double student_t_upper_tail(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double x = df / (df + t * t);
  const double half = 0.5 * boost::math::ibeta(0.5 * df, 0.5, x);
  return t >= 0.0 ? half : 1.0 - half;
}

/// One-tailed paired t-test of mean(a) > mean(b).
inline TTestResult paired_t_test_one_tailed(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw ArgumentError("paired t-test needs at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    if (!std::isfinite(d[i])) throw NumericError("paired t-test on non-finite differences");
    mean += d[i];
  }
  mean /= static_cast<double>(n);
  double q = 0.0;
  for (double v : d) q += (v - mean) * (v - mean);
  const double sd = std::sqrt(q / static_cast<double>(n - 1));

  TTestResult r;
  r.df = n - 1;
  r.direction = mean >= 0.0 ? "greater" : "less";
  if (sd == 0.0) {
    if (mean == 0.0) throw UndefinedStatisticError("paired t-test: all differences are zero");
    r.degenerate = true;
    r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = mean > 0 ? 0.0 : 1.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_upper_tail(r.t, static_cast<double>(r.df));
  return r;
}

inline double metric_value(Metric metric, const Tensor& estimate, const Tensor& reference, double max_val) {
  return metric == Metric::psnr ? psnr(estimate, reference, max_val) : snr(estimate, reference);
}

/// Per-sample metric of the model's output on each test pair.
inline MetricResult evaluate_on_test(const DenoiserModel& model, const RealSplit& split, Metric metric,
                                     double max_val = 1.0) {
  if (split.test.empty()) throw ArgumentError("evaluation needs a non-empty test set");
  std::vector<double> values;
  values.reserve(split.test.size());
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    values.push_back(metric_value(metric, model.forward(split.test.noisy[i]), split.test.clean[i], max_val));
  }
  return MetricResult::from(std::move(values));
}

/// Metric of the noisy inputs themselves ("initial noise").
inline MetricResult evaluate_initial_noise(const RealSplit& split, Metric metric, double max_val = 1.0) {
  if (split.test.empty()) throw ArgumentError("evaluation needs a non-empty test set");
  std::vector<double> values;
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    values.push_back(metric_value(metric, split.test.noisy[i], split.test.clean[i], max_val));
  }
  return MetricResult::from(std::move(values));
}

}  // namespace metadenoise
