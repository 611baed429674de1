#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnwvad {

/// Dense row-major [videos, snippets, channels] array.
///
/// Feature payloads are stored as float; hidden activations inside the model
/// are kept in double so gradient checks stay meaningful.
template <typename T>
class BasicTensor3 {
 public:
  using value_type = T;

  BasicTensor3() = default;
  BasicTensor3(std::size_t videos, std::size_t snippets, std::size_t channels, T fill = T{})
      : videos_(videos), snippets_(snippets), channels_(channels),
        data_(videos * snippets * channels, fill) {}
  BasicTensor3(std::size_t videos, std::size_t snippets, std::size_t channels, std::vector<T> data)
      : videos_(videos), snippets_(snippets), channels_(channels), data_(std::move(data)) {
    if (data_.size() != videos * snippets * channels)
      throw std::invalid_argument("tensor data size does not match shape");
  }

  std::size_t videos() const { return videos_; }
  std::size_t snippets() const { return snippets_; }
  std::size_t channels() const { return channels_; }
  /// Number of snippet rows (videos * snippets).
  std::size_t rows() const { return videos_ * snippets_; }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t b, std::size_t t, std::size_t c) {
    return data_[(b * snippets_ + t) * channels_ + c];
  }
  const T& operator()(std::size_t b, std::size_t t, std::size_t c) const {
    return data_[(b * snippets_ + t) * channels_ + c];
  }

  std::span<T> row(std::size_t b, std::size_t t) {
    return {data_.data() + (b * snippets_ + t) * channels_, channels_};
  }
  std::span<const T> row(std::size_t b, std::size_t t) const {
    return {data_.data() + (b * snippets_ + t) * channels_, channels_};
  }
  std::span<T> row(std::size_t flat) { return {data_.data() + flat * channels_, channels_}; }
  std::span<const T> row(std::size_t flat) const {
    return {data_.data() + flat * channels_, channels_};
  }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  template <typename U>
  BasicTensor3<U> cast() const {
    return BasicTensor3<U>(videos_, snippets_, channels_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const BasicTensor3&) const = default;

 private:
  std::size_t videos_ = 0;
  std::size_t snippets_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

using FeatureTensor = BasicTensor3<float>;
using Tensor3 = BasicTensor3<double>;

/// Row-major [rows, cols] grid of doubles; used for per-snippet scores [B, T]
/// and for weight matrices [out, in].
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Grid(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw std::invalid_argument("grid data size does not match shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Per-snippet scalar scores, [videos, snippets].
using ScoreGrid = Grid;

}  // namespace bnwvad
