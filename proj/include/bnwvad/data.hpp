#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bnwvad/tensor.hpp"

namespace bnwvad {

enum class VideoLabel { Normal, Abnormal };

std::string to_string(VideoLabel label);
VideoLabel parse_label(std::string_view name);

/// One manifest entry. `payload` is relative to the manifest directory.
struct VideoRecord {
  std::string id;
  VideoLabel label = VideoLabel::Normal;
  std::optional<std::string> class_name;
  std::size_t crops = 1;
  std::size_t snippets = 0;
  std::size_t channels = 0;
  std::optional<std::vector<bool>> snippet_labels;
  std::string payload;

  void validate() const;
  bool operator==(const VideoRecord&) const = default;
};

struct Video {
  VideoRecord record;
  /// [crops, snippets, channels] row-major.
  std::vector<float> features;

  std::span<const float> crop(std::size_t k) const;
  bool abnormal() const { return record.label == VideoLabel::Abnormal; }
  bool operator==(const Video&) const = default;
};

struct Dataset {
  std::vector<Video> videos;

  std::vector<std::size_t> indices(VideoLabel label) const;
  /// Channel count shared by all videos; throws if they disagree.
  std::size_t channels() const;
  bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------------------
// On-disk format: `manifest.json` plus one header-free payload per video,
// little-endian float32 [crops, snippets, channels]. A payload ending in
// `.csv` is read as one snippet per row instead.

/// `path` is either a manifest file or a directory holding manifest.json.
Dataset load_dataset(const std::filesystem::path& path);
/// Writes `dir/manifest.json` and `dir/features/<id>.f32`.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------

/// Per-channel linear interpolation of a [T0, C] block onto `length` snippets,
/// mapping [0, T0 - 1] onto [0, length - 1].
std::vector<float> interpolate(std::span<const float> x, std::size_t channels, std::size_t length);

/// Interpolates every video (all crops) to `length` snippets. Snippet labels
/// follow the nearest source snippet.
Dataset resample(const Dataset& ds, std::size_t length);

/// Arithmetic mean over the crop axis of a [crops, T] grid.
std::vector<double> crop_average(const Grid& scores);

// ---------------------------------------------------------------------------
// Synthetic generator

enum class AnomalyMode {
  /// Abnormal snippets are displaced by the shift vector.
  Shift,
  /// Abnormal snippets keep the norm of the normal mean but point elsewhere.
  Rotate,
};

struct SynthClass {
  std::string name;
  /// Relative frequency among abnormal videos.
  double weight = 1.0;
  /// Multiplier on the class's own shift vector.
  double shift_scale = 1.0;
  /// Abnormality ratio drawn uniformly from [ratio_lo, ratio_hi].
  double ratio_lo = 0.1;
  double ratio_hi = 0.3;
};

struct SynthConfig {
  std::size_t n_normal = 64;
  std::size_t n_abnormal = 64;
  std::size_t snippets = 200;
  std::size_t channels = 16;
  std::size_t crops = 1;
  /// Empty: zeros, or a random direction of norm `mean_norm`.
  std::vector<double> normal_mean;
  double mean_norm = 0.0;
  /// Empty: all ones, or log-spread over [e^-a, e^a] when `anisotropy` = a > 0.
  std::vector<double> normal_var;
  double anisotropy = 0.0;
  /// Empty: shift_magnitude * sigma_c with a random sign per channel.
  std::vector<double> anomaly_shift;
  double shift_magnitude = 2.0;
  AnomalyMode mode = AnomalyMode::Shift;
  /// Beta(a, b) distribution of the per-video abnormality ratio.
  double ratio_a = 2.0;
  double ratio_b = 8.0;
  /// 1 gives one contiguous abnormal segment per video.
  std::size_t segments = 1;
  /// Std of a per-video offset, in units of the channel sigma.
  double video_offset_std = 0.0;
  /// Shift shared by every snippet of an abnormal video, anomalous or not, in
  /// units of the channel sigma with a random sign per channel.
  double context_shift = 0.0;
  std::vector<SynthClass> classes;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic in (cfg, stream). The structural draws (mean direction, shift
/// vectors) depend only on cfg.seed, so different streams are train/test
/// splits of the same distribution.
Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t stream = 0);

// ---------------------------------------------------------------------------

struct Batch {
  Tensor3 normal;    // [b_nor, T, C]
  Tensor3 abnormal;  // [b_abn, T, C]
  std::vector<std::size_t> normal_videos;
  std::vector<std::size_t> abnormal_videos;
};

/// Balanced mini-batches: b_nor normal and b_abn abnormal videos per batch,
/// without replacement within a batch, walking a seeded per-class permutation
/// that is reshuffled at every epoch boundary. Multi-crop videos contribute one
/// uniformly drawn crop.
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, std::size_t b_nor, std::size_t b_abn, std::uint64_t seed);
  Batch next();

 private:
  struct Pool {
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };
  std::vector<std::size_t> draw(Pool& pool, std::size_t n);
  Tensor3 gather(const std::vector<std::size_t>& ids);

  const Dataset& ds_;
  std::size_t b_nor_;
  std::size_t b_abn_;
  std::size_t snippets_;
  std::size_t channels_;
  std::mt19937_64 rng_;
  Pool normal_;
  Pool abnormal_;
};

}  // namespace bnwvad
