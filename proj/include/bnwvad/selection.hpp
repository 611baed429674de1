#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bnwvad/tensor.hpp"

namespace bnwvad {

/// Which strategy picked a snippet.
enum class Provenance : std::uint8_t { None = 0, Sample = 1, Batch = 2, Both = 3 };

/// Boolean [videos, snippets] mask with per-cell provenance.
class SelectionMask {
 public:
  SelectionMask() = default;
  SelectionMask(std::size_t videos, std::size_t snippets)
      : videos_(videos), snippets_(snippets), cells_(videos * snippets, Provenance::None) {}

  std::size_t videos() const { return videos_; }
  std::size_t snippets() const { return snippets_; }
  std::size_t count() const { return count_; }

  bool selected(std::size_t b, std::size_t t) const { return at(b, t) != Provenance::None; }
  Provenance at(std::size_t b, std::size_t t) const { return cells_[b * snippets_ + t]; }

  /// ORs `source` into the cell's provenance.
  void mark(std::size_t b, std::size_t t, Provenance source);

  /// Selected cells in row-major order, as flat indices b * snippets + t.
  std::vector<std::size_t> cells() const;

  bool operator==(const SelectionMask&) const = default;

 private:
  std::size_t videos_ = 0;
  std::size_t snippets_ = 0;
  std::size_t count_ = 0;
  std::vector<Provenance> cells_;
};

/// Sample-level and batch-level selection ratios. A ratio of 0 disables the
/// corresponding strategy.
struct SelectionRatios {
  double sample = 0.1;
  double batch = 0.2;
  void validate() const;
};

/// Number of cells a ratio selects out of `n`: 0 when the ratio is 0,
/// otherwise max(1, ceil(ratio * n)).
std::size_t selection_count(double ratio, std::size_t n);

/// Per video, the top ceil(ratio * T) snippets; ties go to the lower index.
SelectionMask select_sls(const ScoreGrid& scores, double ratio);

/// The top ceil(ratio * B * T) cells of the whole grid; ties go to the
/// lower (video, snippet) index.
SelectionMask select_bls(const ScoreGrid& scores, double ratio);

/// Union of SLS and BLS.
SelectionMask select_sbs(const ScoreGrid& scores, const SelectionRatios& ratios);

/// Exactly `total` cells from normal videos: floor(total / B) per video, the
/// remainder going to the globally highest leftovers. Throws
/// "insufficient normal snippets" when total > B * T.
SelectionMask select_normal_matched(const ScoreGrid& scores, std::size_t total);

}  // namespace bnwvad
