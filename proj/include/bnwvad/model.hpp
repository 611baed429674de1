#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bnwvad/metric.hpp"
#include "bnwvad/stats_core.hpp"
#include "bnwvad/tensor.hpp"

namespace bnwvad {

enum class Normalization { BatchNorm, Identity };
enum class ClassifierInput { Hidden1, Hidden2 };
enum class Enhancer { None, Linear };

std::string to_string(Normalization n);
std::string to_string(ClassifierInput c);
std::string to_string(Enhancer e);
Normalization parse_normalization(std::string_view name);
ClassifierInput parse_classifier_input(std::string_view name);
Enhancer parse_enhancer(std::string_view name);

struct ModelConfig {
  std::size_t input_channels = 0;
  Enhancer enhancer = Enhancer::None;
  /// Enhancer output width; 0 means "same as input". A same-width linear
  /// enhancer is applied with a residual connection.
  std::size_t enhanced_channels = 0;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  Normalization normalization = Normalization::BatchNorm;
  ClassifierInput classifier_input = ClassifierInput::Hidden2;
  double momentum = 0.1;
  double eps = 1e-5;

  std::size_t enhancer_width() const {
    return enhancer == Enhancer::None ? input_channels
                                      : (enhanced_channels ? enhanced_channels : input_channels);
  }
  std::size_t classifier_width() const {
    return classifier_input == ClassifierInput::Hidden1 ? hidden1 : hidden2;
  }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Per-snippet affine map, weight is [out, in].
struct Linear {
  Grid weight;
  std::vector<double> bias;
  bool operator==(const Linear&) const = default;
};

/// BatchNorm scale and shift.
struct Affine {
  std::vector<double> gamma;
  std::vector<double> beta;
  bool operator==(const Affine&) const = default;
};

/// Everything the optimizer touches. Gradients and Adam moments use the same
/// layout.
struct Trainables {
  Linear enhancer;  // empty when the enhancer is disabled
  Linear proj1;
  Affine bn1;
  Linear proj2;
  Affine bn2;
  Linear clf;

  /// Flat views of every parameter block in a fixed order.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  Trainables zeros_like() const;
  std::size_t parameter_count() const;
  bool operator==(const Trainables&) const = default;
};

using Gradients = Trainables;

struct ModelParams {
  ModelConfig config;
  Trainables weights;
  RunningStats stats1;
  RunningStats stats2;
  bool operator==(const ModelParams&) const = default;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a mt19937_64 seeded with
/// `seed`, drawn in block order; biases 0, gamma 1, beta 0, running mean 0,
/// running var 1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

enum class Mode { Train, Eval };

/// Activations of one forward pass over a [B, T, C] input, each stored as a
/// [B, T, width] tensor.
struct ForwardCache {
  Mode mode = Mode::Eval;
  Tensor3 input;
  Tensor3 enhanced;
  Tensor3 hidden1;      // X^h1, before normalization
  Tensor3 normalized1;  // before the affine
  Tensor3 act1;         // relu(gamma * normalized + beta)
  Tensor3 hidden2;      // X^h2
  Tensor3 normalized2;
  Tensor3 act2;
  BatchStats batch1;    // train mode only
  BatchStats batch2;
  Grid preds;           // sigmoid outputs, [B, T]
};

/// Pure forward pass. Train mode normalizes with the current batch statistics
/// (recorded in the cache) and needs at least two snippets; eval mode uses the
/// running statistics. Running statistics are not touched, see
/// `update_running_stats` and `forward_train`.
ForwardCache forward(const Tensor3& x, const ModelParams& params, Mode mode);

/// EMA-updates both running statistics from a train-mode cache.
void update_running_stats(ModelParams& params, const ForwardCache& cache);

/// Train-mode forward followed by the running-statistics update.
ForwardCache forward_train(const Tensor3& x, ModelParams& params);

/// Exact parameter gradients of a scalar objective given its gradient with
/// respect to the predictions and, optionally, gradients injected directly at
/// the pre-normalization hidden features. Running statistics receive no
/// gradient. Requires a train-mode cache.
Gradients backward(const ForwardCache& cache, const ModelParams& params, const Grid& d_preds,
                   const Tensor3* d_hidden1 = nullptr, const Tensor3* d_hidden2 = nullptr);

/// Divergence of each hidden layer from its running statistics.
struct LayerDfm {
  ScoreGrid layer1;
  ScoreGrid layer2;
};
LayerDfm layer_dfm(const ForwardCache& cache, const ModelParams& params,
                   DfmMetric metric = DfmMetric::Mahalanobis);

/// score = pred * (DFM(X^h1) + DFM(X^h2)). A model without BatchNorm has no
/// running statistics and scores by its prediction alone.
ScoreGrid anomaly_score(const ForwardCache& cache, const ModelParams& params,
                        DfmMetric metric = DfmMetric::Mahalanobis);

/// Fusion of precomputed factors, exposed for score dumps.
ScoreGrid fuse_scores(const Grid& preds, const LayerDfm& dfm);

}  // namespace bnwvad
