#include "bnwvad/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace bnwvad::kernels {

namespace {

using Index = std::ptrdiff_t;

std::size_t row_count(std::size_t size, std::size_t cols) { return cols == 0 ? 0 : size / cols; }

template <typename T>
void channel_moments_impl(std::span<const T> x, std::size_t cols, std::span<double> mean,
                          std::span<double> var) {
  const std::size_t rows = row_count(x.size(), cols);
  const double inv = rows ? 1.0 / static_cast<double>(rows) : 0.0;
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < static_cast<Index>(cols); ++c) {
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
  bool undefined = false;
#pragma omp parallel for schedule(static) reduction(|| : undefined)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    bool bad = false;
    out[r] = dfm_row<T>(x.subspan(r * cols, cols), mean, var, eps, metric, bad);
    undefined = undefined || bad;
  }
  if (undefined) throw std::domain_error("undefined cosine");
}

}  // namespace

template <typename T>
double dfm_row(std::span<const T> x, std::span<const double> mean, std::span<const double> var,
               double eps, DfmMetric metric, bool& undefined) {
  const std::size_t n = x.size();
  switch (metric) {
    case DfmMetric::Mahalanobis: {
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double d = static_cast<double>(x[c]) - mean[c];
        acc += d * d / (var[c] + eps);
      }
      return std::sqrt(acc);
    }
    case DfmMetric::Euclidean: {
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double d = static_cast<double>(x[c]) - mean[c];
        acc += d * d;
      }
      return std::sqrt(acc);
    }
    case DfmMetric::Cosine: {
      double dot = 0.0, xx = 0.0, mm = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double v = static_cast<double>(x[c]);
        dot += v * mean[c];
        xx += v * v;
        mm += mean[c] * mean[c];
      }
      if (xx == 0.0 || mm == 0.0) {
        undefined = true;
        return 0.0;
      }
      return 1.0 - dot / (std::sqrt(xx) * std::sqrt(mm));
    }
    case DfmMetric::FeatureMagnitude: {
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double v = static_cast<double>(x[c]);
        acc += v * v;
      }
      return std::sqrt(acc);
    }
  }
  return 0.0;
}

template double dfm_row<float>(std::span<const float>, std::span<const double>,
                               std::span<const double>, double, DfmMetric, bool&);
template double dfm_row<double>(std::span<const double>, std::span<const double>,
                                std::span<const double>, double, DfmMetric, bool&);

void linear_forward(std::span<const double> in, std::size_t in_cols, const Grid& weight,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t rows = row_count(in.size(), in_cols);
  const std::size_t out_cols = weight.rows();
#pragma omp parallel for schedule(static)
  for (Index n = 0; n < static_cast<Index>(rows); ++n) {
    const double* x = in.data() + n * in_cols;
    double* y = out.data() + n * out_cols;
    for (std::size_t j = 0; j < out_cols; ++j) {
      const double* w = weight.row(j).data();
      double acc = bias[j];
      for (std::size_t i = 0; i < in_cols; ++i) acc += w[i] * x[i];
      y[j] = acc;
    }
  }
}

void linear_backward(std::span<const double> in, std::size_t in_cols, const Grid& weight,
                     std::span<const double> dout, Grid& dweight, std::span<double> dbias,
                     std::span<double> din) {
  const std::size_t rows = row_count(in.size(), in_cols);
  const std::size_t out_cols = weight.rows();
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < static_cast<Index>(out_cols); ++j) {
    double* dw = dweight.row(j).data();
    double db = 0.0;
    for (std::size_t n = 0; n < rows; ++n) {
      const double g = dout[n * out_cols + j];
      if (g == 0.0) continue;
      db += g;
      const double* x = in.data() + n * in_cols;
      for (std::size_t i = 0; i < in_cols; ++i) dw[i] += g * x[i];
    }
    dbias[j] += db;
  }
  if (din.empty()) return;
#pragma omp parallel for schedule(static)
  for (Index n = 0; n < static_cast<Index>(rows); ++n) {
    double* dx = din.data() + n * in_cols;
    for (std::size_t i = 0; i < in_cols; ++i) dx[i] = 0.0;
    for (std::size_t j = 0; j < out_cols; ++j) {
      const double g = dout[n * out_cols + j];
      if (g == 0.0) continue;
      const double* w = weight.row(j).data();
      for (std::size_t i = 0; i < in_cols; ++i) dx[i] += g * w[i];
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
#pragma omp parallel for schedule(static)
  for (Index n = 0; n < static_cast<Index>(rows); ++n) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t k = n * cols + c;
      out[k] = (x[k] - mean[c]) / std::sqrt(var[c] + eps);
    }
  }
}

void batchnorm_backward(std::span<const double> dn, std::span<const double> normalized,
                        std::size_t cols, std::span<const double> var, double eps,
                        std::span<double> dx) {
  const std::size_t rows = row_count(dn.size(), cols);
  const double inv = 1.0 / static_cast<double>(rows);
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < static_cast<Index>(cols); ++c) {
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

}  // namespace bnwvad::kernels
