// Serial copies of the OpenMP kernels. Same accumulation order per output
// element, so results must match the parallel versions bit for bit.

#include <cmath>
#include <stdexcept>

#include "bnwvad/kernels.hpp"

namespace bnwvad::kernels::reference {

namespace {

std::size_t row_count(std::size_t size, std::size_t cols) { return cols == 0 ? 0 : size / cols; }

template <typename T>
void channel_moments_impl(std::span<const T> x, std::size_t cols, std::span<double> mean,
                          std::span<double> var) {
  const std::size_t rows = row_count(x.size(), cols);
  const double inv = rows ? 1.0 / static_cast<double>(rows) : 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) sum += static_cast<double>(x[r * cols + c]);
    const double m = sum * inv;
    double sq = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = static_cast<double>(x[r * cols + c]) - m;
      sq += d * d;
    }
    mean[c] = m;
    var[c] = sq * inv;
  }
}

template <typename T>
void dfm_rows_impl(std::span<const T> x, std::size_t cols, std::span<const double> mean,
                   std::span<const double> var, double eps, DfmMetric metric,
                   std::span<double> out) {
  const std::size_t rows = row_count(x.size(), cols);
  for (std::size_t r = 0; r < rows; ++r) {
    bool undefined = false;
    out[r] = kernels::dfm_row<T>(x.subspan(r * cols, cols), mean, var, eps, metric, undefined);
    if (undefined) throw std::domain_error("undefined cosine");
  }
}

}  // namespace

void linear_forward(std::span<const double> in, std::size_t in_cols, const Grid& weight,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t rows = row_count(in.size(), in_cols);
  const std::size_t out_cols = weight.rows();
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t j = 0; j < out_cols; ++j) {
      double acc = bias[j];
      for (std::size_t i = 0; i < in_cols; ++i) acc += weight(j, i) * in[n * in_cols + i];
      out[n * out_cols + j] = acc;
    }
  }
}

void linear_backward(std::span<const double> in, std::size_t in_cols, const Grid& weight,
                     std::span<const double> dout, Grid& dweight, std::span<double> dbias,
                     std::span<double> din) {
  const std::size_t rows = row_count(in.size(), in_cols);
  const std::size_t out_cols = weight.rows();
  for (std::size_t j = 0; j < out_cols; ++j) {
    double db = 0.0;
    for (std::size_t n = 0; n < rows; ++n) {
      const double g = dout[n * out_cols + j];
      if (g == 0.0) continue;
      db += g;
      for (std::size_t i = 0; i < in_cols; ++i) dweight(j, i) += g * in[n * in_cols + i];
    }
    dbias[j] += db;
  }
  if (din.empty()) return;
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t i = 0; i < in_cols; ++i) din[n * in_cols + i] = 0.0;
    for (std::size_t j = 0; j < out_cols; ++j) {
      const double g = dout[n * out_cols + j];
      if (g == 0.0) continue;
      for (std::size_t i = 0; i < in_cols; ++i) din[n * in_cols + i] += g * weight(j, i);
    }
  }
}

void channel_moments(std::span<const float> x, std::size_t cols, std::span<double> mean,
                     std::span<double> var) {
  channel_moments_impl(x, cols, mean, var);
}
void channel_moments(std::span<const double> x, std::size_t cols, std::span<double> mean,
                     std::span<double> var) {
  channel_moments_impl(x, cols, mean, var);
}

void dfm_rows(std::span<const float> x, std::size_t cols, std::span<const double> mean,
              std::span<const double> var, double eps, DfmMetric metric, std::span<double> out) {
  dfm_rows_impl(x, cols, mean, var, eps, metric, out);
}
void dfm_rows(std::span<const double> x, std::size_t cols, std::span<const double> mean,
              std::span<const double> var, double eps, DfmMetric metric, std::span<double> out) {
  dfm_rows_impl(x, cols, mean, var, eps, metric, out);
}

void normalize(std::span<const double> x, std::size_t cols, std::span<const double> mean,
               std::span<const double> var, double eps, std::span<double> out) {
  const std::size_t rows = row_count(x.size(), cols);
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t c = 0; c < cols; ++c)
      out[n * cols + c] = (x[n * cols + c] - mean[c]) / std::sqrt(var[c] + eps);
}

void batchnorm_backward(std::span<const double> dn, std::span<const double> normalized,
                        std::size_t cols, std::span<const double> var, double eps,
                        std::span<double> dx) {
  const std::size_t rows = row_count(dn.size(), cols);
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    double sum_dn = 0.0, sum_dn_n = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      sum_dn += dn[r * cols + c];
      sum_dn_n += dn[r * cols + c] * normalized[r * cols + c];
    }
    const double mean_dn = sum_dn * inv;
    const double mean_dn_n = sum_dn_n * inv;
    const double inv_std = 1.0 / std::sqrt(var[c] + eps);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t k = r * cols + c;
      dx[k] = (dn[k] - mean_dn - normalized[k] * mean_dn_n) * inv_std;
    }
  }
}

}  // namespace bnwvad::kernels::reference
