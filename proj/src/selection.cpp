#include "bnwvad/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bnwvad {

namespace {

void check_ratio(double ratio, const char* name) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw std::invalid_argument(std::string(name) + " selection ratio must be in [0, 1]");
}

// Indices of the `k` largest values of `values`, ties to the lower index.
std::vector<std::size_t> top_k(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return values[a] > values[b] || (values[a] == values[b] && a < b);
                    });
  order.resize(k);
  return order;
}

void check_finite(const ScoreGrid& scores) {
  for (double v : scores.flat())
    if (!std::isfinite(v)) throw std::domain_error("non-finite selection score");
}

}  // namespace

void SelectionMask::mark(std::size_t b, std::size_t t, Provenance source) {
  auto& cell = cells_[b * snippets_ + t];
  if (cell == Provenance::None && source != Provenance::None) ++count_;
  cell = static_cast<Provenance>(static_cast<std::uint8_t>(cell) | static_cast<std::uint8_t>(source));
}

std::vector<std::size_t> SelectionMask::cells() const {
  std::vector<std::size_t> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < cells_.size(); ++i)
    if (cells_[i] != Provenance::None) out.push_back(i);
  return out;
}

void SelectionRatios::validate() const {
  check_ratio(sample, "sample-level");
  check_ratio(batch, "batch-level");
  if (sample == 0.0 && batch == 0.0)
    throw std::invalid_argument("at least one selection ratio must be positive");
}

std::size_t selection_count(double ratio, std::size_t n) {
  if (ratio <= 0.0 || n == 0) return 0;
  // The small slack keeps products like 0.1 * 200 from rounding up to 21.
  const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

SelectionMask select_sls(const ScoreGrid& scores, double ratio) {
  check_ratio(ratio, "sample-level");
  check_finite(scores);
  SelectionMask mask(scores.rows(), scores.cols());
  const std::size_t k = selection_count(ratio, scores.cols());
  for (std::size_t b = 0; b < scores.rows(); ++b)
    for (std::size_t t : top_k(scores.row(b), k)) mask.mark(b, t, Provenance::Sample);
  return mask;
}

SelectionMask select_bls(const ScoreGrid& scores, double ratio) {
  check_ratio(ratio, "batch-level");
  check_finite(scores);
  SelectionMask mask(scores.rows(), scores.cols());
  const std::size_t k = selection_count(ratio, scores.size());
  for (std::size_t flat : top_k(scores.flat(), k))
    mask.mark(flat / scores.cols(), flat % scores.cols(), Provenance::Batch);
  return mask;
}

SelectionMask select_sbs(const ScoreGrid& scores, const SelectionRatios& ratios) {
  ratios.validate();
  SelectionMask mask = select_sls(scores, ratios.sample);
  const SelectionMask batch = select_bls(scores, ratios.batch);
  for (std::size_t b = 0; b < scores.rows(); ++b)
    for (std::size_t t = 0; t < scores.cols(); ++t)
      if (batch.selected(b, t)) mask.mark(b, t, Provenance::Batch);
  return mask;
}

SelectionMask select_normal_matched(const ScoreGrid& scores, std::size_t total) {
  check_finite(scores);
  const std::size_t videos = scores.rows(), snippets = scores.cols();
  if (total > videos * snippets) throw std::invalid_argument("insufficient normal snippets");
  SelectionMask mask(videos, snippets);
  if (total == 0) return mask;
  const std::size_t quota = total / videos;
  for (std::size_t b = 0; b < videos; ++b)
    for (std::size_t t : top_k(scores.row(b), quota)) mask.mark(b, t, Provenance::Sample);

  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!mask.selected(i / snippets, i % snippets)) rest.push_back(i);
  const std::size_t remainder = total - quota * videos;
  const auto flat = scores.flat();
  std::partial_sort(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(remainder), rest.end(),
                    [&](std::size_t a, std::size_t b) {
                      return flat[a] > flat[b] || (flat[a] == flat[b] && a < b);
                    });
  for (std::size_t i = 0; i < remainder; ++i)
    mask.mark(rest[i] / snippets, rest[i] % snippets, Provenance::Batch);
  return mask;
}

}  // namespace bnwvad
