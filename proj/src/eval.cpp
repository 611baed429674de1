#include "bnwvad/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace bnwvad {

namespace {

// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

void check_sizes(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
}

struct Pool {
  std::vector<double> scores;
  std::vector<bool> labels;
  void add(const VideoScores& v, std::size_t repeat) {
    for (std::size_t t = 0; t < v.scores.size(); ++t)
      for (std::size_t k = 0; k < repeat; ++k) {
        scores.push_back(v.scores[t]);
        labels.push_back((*v.snippet_labels)[t]);
      }
  }
};

}  // namespace

double roc_auc(std::span<const double> scores, const std::vector<bool>& labels) {
  check_sizes(scores, labels);
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw std::invalid_argument("undefined AUC");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum += mid_rank;
    i = j;
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double average_precision(std::span<const double> scores, const std::vector<bool>& labels) {
  check_sizes(scores, labels);
  const auto total_pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  if (total_pos == 0.0) throw std::invalid_argument("average precision needs at least one positive");
  const auto order = descending(scores);
  double tp = 0.0, seen = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) tp += 1.0;
      seen += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

MetricReport evaluate_scores(const std::vector<VideoScores>& videos, std::size_t frames_per_snippet) {
  if (frames_per_snippet == 0) throw std::invalid_argument("frames_per_snippet must be positive");
  Pool all, abnormal;
  Pool normal_only;
  std::map<std::string, Pool> per_class;
  for (const auto& v : videos) {
    if (!v.snippet_labels) throw std::invalid_argument("evaluation requires snippet labels");
    if (v.snippet_labels->size() != v.scores.size())
      throw std::invalid_argument("video " + v.id + ": score and label counts differ");
    all.add(v, frames_per_snippet);
    if (v.label == VideoLabel::Abnormal) {
      abnormal.add(v, frames_per_snippet);
      if (v.class_name) per_class[*v.class_name].add(v, frames_per_snippet);
    } else {
      normal_only.add(v, frames_per_snippet);
    }
  }
  if (abnormal.scores.empty()) throw std::invalid_argument("evaluation needs at least one abnormal video");

  MetricReport report;
  report.auc = roc_auc(all.scores, all.labels);
  report.ap = average_precision(all.scores, all.labels);
  report.auc_abn = roc_auc(abnormal.scores, abnormal.labels);
  report.ap_abn = average_precision(abnormal.scores, abnormal.labels);
  for (auto& [name, pool] : per_class) {
    pool.scores.insert(pool.scores.end(), normal_only.scores.begin(), normal_only.scores.end());
    pool.labels.insert(pool.labels.end(), normal_only.labels.begin(), normal_only.labels.end());
    report.classwise_ap[name] = average_precision(pool.scores, pool.labels);
  }
  return report;
}

std::string to_json(const MetricReport& report, int indent) {
  nlohmann::json j = {{"auc", report.auc},
                      {"ap", report.ap},
                      {"auc_abn", report.auc_abn},
                      {"ap_abn", report.ap_abn},
                      {"classwise_ap", report.classwise_ap}};
  return j.dump(indent);
}

}  // namespace bnwvad
