#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "support.hpp"

#include "bnwvad/eval.hpp"

using namespace bnwvad;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

// Sweep every distinct threshold from the top, counting {score >= thr}.
double sweep_ap(const std::vector<double>& s, const std::vector<bool>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  const double positives = static_cast<double>(std::count(y.begin(), y.end(), true));
  double ap = 0.0, prev_recall = 0.0;
  for (double thr : thresholds) {
    double tp = 0.0, n = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= thr) {
        n += 1.0;
        tp += y[i];
      }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / n);
    prev_recall = recall;
  }
  return ap;
}

std::vector<bool> random_labels(std::mt19937_64& rng, std::size_t n, double p) {
  std::bernoulli_distribution d(p);
  std::vector<bool> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = d(rng);
  y[0] = true;
  y[1] = false;
  return y;
}

VideoScores video(std::string id, VideoLabel label, std::optional<std::string> cls,
                  std::vector<double> s, std::vector<bool> y) {
  return {std::move(id), label, std::move(cls), std::move(s), std::move(y)};
}

}  // namespace

TEST_CASE("roc_auc examples") {
  const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
  const std::vector<bool> y{false, false, true, true};
  CHECK(roc_auc(sep, y) == 1.0);
  const std::vector<double> same(4, 0.3);
  CHECK(roc_auc(same, y) == 0.5);
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  CHECK(roc_auc(s, y) == doctest::Approx(0.75));
  CHECK_THROWS_WITH(roc_auc(s, {true, true, true, true}), "undefined AUC");
}

TEST_CASE("average_precision examples") {
  const std::vector<double> s{0.9, 0.8, 0.1};
  CHECK(average_precision(s, {true, true, false}) == 1.0);
  const std::vector<double> two{0.9, 0.1};
  CHECK(average_precision(two, {false, true}) == doctest::Approx(0.5));
  CHECK_THROWS(average_precision(two, {false, false}));
  // a tie group enters together
  const std::vector<double> tie{0.5, 0.5};
  CHECK(average_precision(tie, {false, true}) == doctest::Approx(0.5));
}

TEST_CASE("metrics match brute-force oracles") {
  std::mt19937_64 rng(60);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 20;
    std::vector<double> s(n);
    for (double& v : s) v = trial % 2 ? std::uniform_real_distribution<double>(0, 1)(rng) : coarse(rng);
    const auto y = random_labels(rng, n, 0.4);
    REQUIRE(roc_auc(s, y) == doctest::Approx(pairwise_auc(s, y)).epsilon(1e-12));
    REQUIRE(std::abs(average_precision(s, y) - sweep_ap(s, y)) < 1e-9);
  }
}

TEST_CASE("metric invariants") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = testing::uniform_vector(rng, 30, 0, 1);
    const auto y = random_labels(rng, 30, 0.3);
    std::vector<double> neg(s.size()), mono(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      neg[i] = -s[i];
      mono[i] = std::log(s[i] + 0.01) * 3.0 + 1.0;
    }
    CHECK(roc_auc(s, y) + roc_auc(neg, y) == doctest::Approx(1.0));
    CHECK(roc_auc(mono, y) == roc_auc(s, y));
    CHECK(average_precision(mono, y) == doctest::Approx(average_precision(s, y)).epsilon(1e-14));
  }
}

TEST_CASE("random scores give AP near the prevalence") {
  std::mt19937_64 rng(62);
  double mean_ap = 0.0;
  const double prevalence = 0.3;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = testing::uniform_vector(rng, 500, 0, 1);
    std::vector<bool> y(500);
    for (std::size_t i = 0; i < 500; ++i) y[i] = i < 150;
    mean_ap += average_precision(s, y) / 200.0;
  }
  CHECK(std::abs(mean_ap - prevalence) < 0.05);
}

TEST_CASE("evaluate_scores on a hand-labelled fixture") {
  const std::vector<VideoScores> vids{
      video("n1", VideoLabel::Normal, std::nullopt, {0.1, 0.2}, {false, false}),
      video("a1", VideoLabel::Abnormal, "x", {0.9, 0.3}, {true, false}),
      video("a2", VideoLabel::Abnormal, "y", {0.85, 0.35}, {false, true})};
  const auto r = evaluate_scores(vids);
  CHECK(r.auc == doctest::Approx(7.0 / 8.0));
  CHECK(r.ap == doctest::Approx(5.0 / 6.0));
  CHECK(r.auc_abn == doctest::Approx(0.75));
  CHECK(r.ap_abn == doctest::Approx(5.0 / 6.0));
  REQUIRE(r.classwise_ap.size() == 2);
  CHECK(r.classwise_ap.at("x") == doctest::Approx(1.0));
  CHECK(r.classwise_ap.at("y") == doctest::Approx(0.5));

  const auto r4 = evaluate_scores(vids, 4);
  CHECK(r4.auc == doctest::Approx(r.auc));
  CHECK(r4.ap == doctest::Approx(r.ap));

  const std::string js = to_json(r);
  CHECK(js.find("\"classwise_ap\"") != std::string::npos);
}

TEST_CASE("abnormal-only data: pooled equals subset") {
  const std::vector<VideoScores> vids{
      video("a1", VideoLabel::Abnormal, std::nullopt, {0.9, 0.3, 0.2}, {true, false, false}),
      video("a2", VideoLabel::Abnormal, std::nullopt, {0.4, 0.6}, {false, true})};
  const auto r = evaluate_scores(vids);
  CHECK(r.auc == r.auc_abn);
  CHECK(r.ap == r.ap_abn);
  CHECK(r.classwise_ap.empty());
}

TEST_CASE("evaluate_scores errors") {
  std::vector<VideoScores> vids{
      video("n1", VideoLabel::Normal, std::nullopt, {0.1, 0.2}, {false, false}),
      video("a1", VideoLabel::Abnormal, std::nullopt, {0.9, 0.3}, {true, false})};
  vids[1].snippet_labels.reset();
  CHECK_THROWS_WITH(evaluate_scores(vids), "evaluation requires snippet labels");
  vids.pop_back();
  CHECK_THROWS(evaluate_scores(vids));
}
