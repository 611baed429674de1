#pragma once

// Data-parallel inner loops of the model and the statistics code.
//
// Every kernel in `bnwvad::kernels` is OpenMP-parallel over independent
// outputs; each output element is accumulated serially by one thread, so the
// result is bit-identical to the serial copy in `bnwvad::kernels::reference`
// regardless of thread count. The reference copies exist for tests and the
// benchmark.

#include <cstddef>
#include <span>

#include "bnwvad/metric.hpp"
#include "bnwvad/tensor.hpp"

namespace bnwvad::kernels {

/// out[n, :] = weight * in[n, :] + bias, for n in [0, rows).
/// `weight` is [out_cols, in_cols].
void linear_forward(std::span<const double> in, std::size_t in_cols, const Grid& weight,
                    std::span<const double> bias, std::span<double> out);

/// Accumulates dweight += dout^T in, dbias += colsum(dout), and overwrites
/// din = dout * weight when `din` is non-empty.
void linear_backward(std::span<const double> in, std::size_t in_cols, const Grid& weight,
                     std::span<const double> dout, Grid& dweight, std::span<double> dbias,
                     std::span<double> din);

/// Per-column mean and population variance of a [rows, cols] block, two-pass,
/// accumulated in double.
void channel_moments(std::span<const float> x, std::size_t cols, std::span<double> mean,
                     std::span<double> var);
void channel_moments(std::span<const double> x, std::size_t cols, std::span<double> mean,
                     std::span<double> var);

/// Per-row abnormality criterion. Throws std::domain_error("undefined cosine")
/// when a Cosine row or the mean has zero norm.
void dfm_rows(std::span<const float> x, std::size_t cols, std::span<const double> mean,
              std::span<const double> var, double eps, DfmMetric metric, std::span<double> out);
void dfm_rows(std::span<const double> x, std::size_t cols, std::span<const double> mean,
              std::span<const double> var, double eps, DfmMetric metric, std::span<double> out);

/// out = (x - mean) / sqrt(var + eps), column-wise.
void normalize(std::span<const double> x, std::size_t cols, std::span<const double> mean,
               std::span<const double> var, double eps, std::span<double> out);

/// Input gradient of batch normalization through the batch mean and variance:
/// dx = (dn - mean(dn) - n * mean(dn * n)) / sqrt(var + eps), per column.
void batchnorm_backward(std::span<const double> dn, std::span<const double> normalized,
                        std::size_t cols, std::span<const double> var, double eps,
                        std::span<double> dx);

namespace reference {

void linear_forward(std::span<const double> in, std::size_t in_cols, const Grid& weight,
                    std::span<const double> bias, std::span<double> out);
void linear_backward(std::span<const double> in, std::size_t in_cols, const Grid& weight,
                     std::span<const double> dout, Grid& dweight, std::span<double> dbias,
                     std::span<double> din);
void channel_moments(std::span<const float> x, std::size_t cols, std::span<double> mean,
                     std::span<double> var);
void channel_moments(std::span<const double> x, std::size_t cols, std::span<double> mean,
                     std::span<double> var);
void dfm_rows(std::span<const float> x, std::size_t cols, std::span<const double> mean,
              std::span<const double> var, double eps, DfmMetric metric, std::span<double> out);
void dfm_rows(std::span<const double> x, std::size_t cols, std::span<const double> mean,
              std::span<const double> var, double eps, DfmMetric metric, std::span<double> out);
void normalize(std::span<const double> x, std::size_t cols, std::span<const double> mean,
               std::span<const double> var, double eps, std::span<double> out);
void batchnorm_backward(std::span<const double> dn, std::span<const double> normalized,
                        std::size_t cols, std::span<const double> var, double eps,
                        std::span<double> dx);

}  // namespace reference

/// Criterion for a single row; shared by both kernel flavours.
template <typename T>
double dfm_row(std::span<const T> x, std::span<const double> mean, std::span<const double> var,
               double eps, DfmMetric metric, bool& undefined);

}  // namespace bnwvad::kernels
