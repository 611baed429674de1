#pragma once

#include <span>
#include <vector>

#include "bnwvad/metric.hpp"
#include "bnwvad/tensor.hpp"

namespace bnwvad {

/// Per-channel mean and population variance of one mini-batch.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;
};

/// BatchNorm running statistics: the EMA-maintained normality memory.
struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.1;
  /// Variance floor added inside the Mahalanobis denominator and BN normalizer.
  double eps = 1e-5;

  /// mean = 0, var = 1, matching a freshly constructed BatchNorm layer.
  static RunningStats fresh(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  std::size_t channels() const { return mean.size(); }
  /// Throws std::invalid_argument when any invariant is broken.
  void validate() const;

  bool operator==(const RunningStats&) const = default;
};

/// Statistics over all B*T snippets of X. Throws "empty batch" on an empty
/// tensor and "non-finite feature" on NaN/Inf entries.
template <typename T>
BatchStats batch_stats(const BasicTensor3<T>& x);

/// Exponential moving average:
///   mean' = (1 - momentum) * mean + momentum * batch.mean   (same for var)
RunningStats ema_update(const RunningStats& rs, const BatchStats& batch);

/// Divergence of one snippet feature from the running mean.
///
///   Mahalanobis       sqrt(sum_c (x_c - mu_c)^2 / (var_c + eps))
///   Euclidean         sqrt(sum_c (x_c - mu_c)^2)
///   Cosine            1 - cos(x, mu)
///   FeatureMagnitude  ||x||_2   (ignores the statistics)
template <typename T>
double dfm(std::span<const T> x, const RunningStats& rs, DfmMetric metric);

/// `dfm` for every snippet of X, as a [videos, snippets] grid.
template <typename T>
ScoreGrid dfm_batch(const BasicTensor3<T>& x, const RunningStats& rs, DfmMetric metric);

/// Gradient of `dfm` with respect to x; running statistics are constants.
/// At the non-differentiable point (zero distance / zero norm) the zero
/// subgradient is returned.
void dfm_gradient(std::span<const double> x, const RunningStats& rs, DfmMetric metric,
                  std::span<double> grad);

}  // namespace bnwvad
