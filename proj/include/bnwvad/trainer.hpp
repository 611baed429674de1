#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bnwvad/data.hpp"
#include "bnwvad/eval.hpp"
#include "bnwvad/losses.hpp"
#include "bnwvad/model.hpp"
#include "bnwvad/optim.hpp"
#include "bnwvad/selection.hpp"

namespace bnwvad {

/// Whether selection inside a step sees the running statistics before or after
/// they absorb the current batch.
enum class StatsOrder { Pre, Post };
/// Which features drive snippet selection. Enhanced takes the enhancer output
/// and only works with the fm metric, since no statistics are kept there.
enum class SelectionLayer { Sum, Hidden1, Hidden2, Enhanced };

std::string to_string(StatsOrder o);
std::string to_string(SelectionLayer s);
StatsOrder parse_stats_order(std::string_view name);
SelectionLayer parse_selection_layer(std::string_view name);

struct TrainConfig {
  std::size_t iterations = 3000;
  std::size_t b_nor = 64;
  std::size_t b_abn = 64;
  SelectionRatios ratios{0.1, 0.2};
  LossWeights weights{5.0, 20.0};
  /// Margin, hinge and the metric used by the pull-push loss and the score.
  MppConfig mpp;
  /// Criterion used to rank snippets for selection.
  DfmMetric selection_metric = DfmMetric::Mahalanobis;
  double momentum = 0.1;
  AdamHyper adam;

  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  Enhancer enhancer = Enhancer::None;
  /// Interpolate every video to this many snippets; 0 keeps the dataset's own.
  std::size_t snippets = 0;

  // Ablation switchboard.
  bool use_sls = true;
  bool use_bls = true;
  bool use_mpp = true;
  bool use_abn_loss = false;
  double abn_loss_weight = 1.0;
  Normalization normalization = Normalization::BatchNorm;
  ClassifierInput classifier_input = ClassifierInput::Hidden2;
  StatsOrder dfm_stats = StatsOrder::Post;
  SelectionLayer selection_layer = SelectionLayer::Sum;

  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;

  /// Paper-scale schedule: 3000 iterations, 64 + 64 videos per batch.
  static TrainConfig paper();
  /// Desk-scale schedule used by the synthetic experiments.
  static TrainConfig desk();

  SelectionRatios effective_ratios() const;
  ModelConfig model_config(std::size_t input_channels) const;
  void validate() const;
};

struct TrainState {
  ModelParams model;
  AdamState optimizer;
};

/// Everything a step froze: the statistics DFM was measured against and the
/// (normal cell, abnormal cell) pairs of each layer's pull-push loss. Cells are
/// flat snippet indices into the concatenated [normal; abnormal] batch.
struct StepContext {
  std::size_t b_nor = 0;
  RunningStats stats1;
  RunningStats stats2;
  std::vector<std::pair<std::size_t, std::size_t>> pairs1;
  std::vector<std::pair<std::size_t, std::size_t>> pairs2;
  std::vector<std::size_t> abnormal_cells;
  SelectionMask abnormal_mask;
};

struct StepLog {
  std::size_t iteration = 0;
  double total = 0.0;
  double normal = 0.0;
  double mpp1 = 0.0;
  double mpp2 = 0.0;
  double abnormal = 0.0;
  std::size_t selected = 0;
  double mean_dfm_abn = 0.0;
  double mean_dfm_nor = 0.0;
};

/// Independent sub-seed of `seed`. Stream 1 initializes the model, stream 2
/// drives the batch sampler.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Concatenates a batch as [normal; abnormal] videos.
Tensor3 concat_batch(const Batch& batch);

/// Initial model and optimizer state for `cfg` on `input_channels` features.
TrainState init_state(const TrainConfig& cfg, std::size_t input_channels);

/// One optimization step: train-mode forward on the concatenated batch,
/// running-statistics update, DFM grids, SBS selection on the abnormal half and
/// matched selection on the normal half, loss assembly, backward and Adam.
/// `context`, when given, receives what the step froze.
StepLog train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                   StepContext* context = nullptr);

/// The step objective re-evaluated at `params` with the context frozen: train
/// mode normalization with the batch's own statistics, DFM against the frozen
/// running statistics, and the frozen pairs.
double step_objective(const ModelParams& params, const Tensor3& x, const StepContext& context,
                      const TrainConfig& cfg);
/// Parameter gradients of `step_objective`.
Gradients step_gradients(const ModelParams& params, const Tensor3& x, const StepContext& context,
                         const TrainConfig& cfg);

struct FitResult {
  TrainState state;
  std::vector<StepLog> curve;
};

using CheckpointHook = std::function<void(std::size_t iteration, const TrainState&)>;

/// Runs cfg.iterations steps over balanced batches. `on_checkpoint` is called
/// every cfg.checkpoint_every iterations (when non-zero) and after the last one.
FitResult fit(const TrainConfig& cfg, const Dataset& ds, const CheckpointHook& on_checkpoint = {});

/// Per-snippet factors of the fused score for one video, crop-averaged.
struct ScoredVideo {
  std::vector<double> pred;
  std::vector<double> dfm1;
  std::vector<double> dfm2;
  std::vector<double> score;
};

/// Eval-mode scoring of every video; fans out across videos.
std::vector<ScoredVideo> score_dataset(const ModelParams& params, const Dataset& ds,
                                       DfmMetric metric = DfmMetric::Mahalanobis);

MetricReport evaluate(const ModelParams& params, const Dataset& ds,
                      DfmMetric metric = DfmMetric::Mahalanobis, std::size_t frames_per_snippet = 1);

/// Pairs scores with the dataset's labels for `evaluate_scores`.
std::vector<VideoScores> attach_labels(const Dataset& ds, const std::vector<std::vector<double>>& scores);

std::string curve_csv(const std::vector<StepLog>& curve);

}  // namespace bnwvad
