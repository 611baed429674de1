#pragma once

#include <span>
#include <vector>

#include "bnwvad/metric.hpp"
#include "bnwvad/stats_core.hpp"
#include "bnwvad/tensor.hpp"

namespace bnwvad {

struct MppConfig {
  double margin = 1.0;
  /// Clamp each pair term at zero. Without it the loss is unbounded below.
  bool hinge = true;
  DfmMetric metric = DfmMetric::Mahalanobis;
};

struct LossWeights {
  double lambda1 = 5.0;
  double lambda2 = 20.0;
};

/// Scalar loss plus the gradient with respect to its input, same layout.
struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
};

struct MppResult {
  double value = 0.0;
  /// [K, C] row-major, matching the inputs.
  std::vector<double> grad_normal;
  std::vector<double> grad_abnormal;
};

/// Mean-based pull-push loss over K paired rows of [K, C] features:
///
///   (1/K) sum_k [margin + DFM(normal_k) - DFM(abnormal_k)]
///
/// with each term clamped at zero when `hinge` is set. Rows are paired by
/// position; callers sort both sides by descending DFM first. Running
/// statistics are constants. Throws "empty selection" when K = 0.
MppResult mpp_loss(std::span<const double> normal, std::span<const double> abnormal,
                   std::size_t channels, const RunningStats& rs, const MppConfig& cfg);

/// sum over videos of the L2 norm of that video's snippet predictions.
/// `preds` is [videos, snippets].
LossResult normal_loss(const Grid& preds);

/// Mean binary cross-entropy against target 1. Predictions must lie in (0, 1];
/// the trainer clamps to [1e-7, 1 - 1e-7] before calling.
LossResult abnormal_loss(std::span<const double> preds);

double total_loss(double normal, double mpp1, double mpp2, const LossWeights& weights);

}  // namespace bnwvad
