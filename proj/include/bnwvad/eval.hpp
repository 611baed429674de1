#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnwvad/data.hpp"

namespace bnwvad {

/// Area under the ROC curve via the rank-sum statistic; tied scores count one
/// half. Throws "undefined AUC" unless both classes are present.
double roc_auc(std::span<const double> scores, const std::vector<bool>& labels);

/// Step-wise average precision over the descending-score sweep, with tied
/// scores entering the sweep together. Throws when there is no positive.
double average_precision(std::span<const double> scores, const std::vector<bool>& labels);

/// Snippet scores of one video together with what evaluation needs to know
/// about it.
struct VideoScores {
  std::string id;
  VideoLabel label = VideoLabel::Normal;
  std::optional<std::string> class_name;
  std::vector<double> scores;
  std::optional<std::vector<bool>> snippet_labels;
};

struct MetricReport {
  double auc = 0.0;
  double ap = 0.0;
  double auc_abn = 0.0;
  double ap_abn = 0.0;
  /// Each class's snippets pooled with every normal-video snippet.
  std::map<std::string, double> classwise_ap;
};

/// Pooled metrics, abnormal-subset metrics and class-wise AP. Each snippet
/// score is repeated `frames_per_snippet` times to emulate frame-level
/// evaluation. Throws "evaluation requires snippet labels" when any video
/// lacks them.
MetricReport evaluate_scores(const std::vector<VideoScores>& videos,
                             std::size_t frames_per_snippet = 1);

std::string to_json(const MetricReport& report, int indent = 2);

}  // namespace bnwvad
