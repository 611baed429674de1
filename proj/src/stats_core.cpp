#include "bnwvad/stats_core.hpp"

#include <cmath>
#include <stdexcept>

#include "bnwvad/kernels.hpp"

namespace bnwvad {

RunningStats RunningStats::fresh(std::size_t channels, double momentum, double eps) {
  RunningStats rs;
  rs.mean.assign(channels, 0.0);
  rs.var.assign(channels, 1.0);
  rs.momentum = momentum;
  rs.eps = eps;
  rs.validate();
  return rs;
}

void RunningStats::validate() const {
  if (mean.size() != var.size()) throw std::invalid_argument("running mean/var size mismatch");
  if (!(momentum > 0.0 && momentum <= 1.0)) throw std::invalid_argument("momentum must be in (0, 1]");
  if (!(eps >= 0.0)) throw std::invalid_argument("eps must be non-negative");
  for (double v : var)
    if (!(v >= 0.0)) throw std::invalid_argument("running variance must be non-negative");
}

template <typename T>
BatchStats batch_stats(const BasicTensor3<T>& x) {
  if (x.empty()) throw std::invalid_argument("empty batch");
  for (T v : x.flat())
    if (!std::isfinite(v)) throw std::domain_error("non-finite feature");
  BatchStats bs;
  bs.mean.resize(x.channels());
  bs.var.resize(x.channels());
  kernels::channel_moments(x.flat(), x.channels(), bs.mean, bs.var);
  return bs;
}

template BatchStats batch_stats<float>(const FeatureTensor&);
template BatchStats batch_stats<double>(const Tensor3&);

RunningStats ema_update(const RunningStats& rs, const BatchStats& batch) {
  if (rs.mean.size() != batch.mean.size() || rs.var.size() != batch.var.size())
    throw std::invalid_argument("dimension mismatch between running and batch statistics");
  RunningStats out = rs;
  const double a = rs.momentum;
  for (std::size_t c = 0; c < rs.mean.size(); ++c) {
    out.mean[c] = (1.0 - a) * rs.mean[c] + a * batch.mean[c];
    out.var[c] = (1.0 - a) * rs.var[c] + a * batch.var[c];
  }
  return out;
}

template <typename T>
double dfm(std::span<const T> x, const RunningStats& rs, DfmMetric metric) {
  if (x.size() != rs.channels()) throw std::invalid_argument("feature/statistics dimension mismatch");
  for (T v : x)
    if (!std::isfinite(v)) throw std::domain_error("non-finite feature");
  bool undefined = false;
  const double d = kernels::dfm_row<T>(x, rs.mean, rs.var, rs.eps, metric, undefined);
  if (undefined) throw std::domain_error("undefined cosine");
  return d;
}

template double dfm<float>(std::span<const float>, const RunningStats&, DfmMetric);
template double dfm<double>(std::span<const double>, const RunningStats&, DfmMetric);

template <typename T>
ScoreGrid dfm_batch(const BasicTensor3<T>& x, const RunningStats& rs, DfmMetric metric) {
  if (x.channels() != rs.channels())
    throw std::invalid_argument("feature/statistics dimension mismatch");
  ScoreGrid out(x.videos(), x.snippets());
  kernels::dfm_rows(x.flat(), x.channels(), rs.mean, rs.var, rs.eps, metric, out.flat());
  return out;
}

template ScoreGrid dfm_batch<float>(const FeatureTensor&, const RunningStats&, DfmMetric);
template ScoreGrid dfm_batch<double>(const Tensor3&, const RunningStats&, DfmMetric);

void dfm_gradient(std::span<const double> x, const RunningStats& rs, DfmMetric metric,
                  std::span<double> grad) {
  const std::size_t n = x.size();
  if (n != rs.channels() || grad.size() != n)
    throw std::invalid_argument("feature/statistics dimension mismatch");
  switch (metric) {
    case DfmMetric::Mahalanobis:
    case DfmMetric::Euclidean: {
      const bool scaled = metric == DfmMetric::Mahalanobis;
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double d = x[c] - rs.mean[c];
        acc += scaled ? d * d / (rs.var[c] + rs.eps) : d * d;
      }
      const double dist = std::sqrt(acc);
      for (std::size_t c = 0; c < n; ++c) {
        const double d = x[c] - rs.mean[c];
        grad[c] = dist == 0.0 ? 0.0 : (scaled ? d / (rs.var[c] + rs.eps) : d) / dist;
      }
      return;
    }
    case DfmMetric::Cosine: {
      double dot = 0.0, xx = 0.0, mm = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        dot += x[c] * rs.mean[c];
        xx += x[c] * x[c];
        mm += rs.mean[c] * rs.mean[c];
      }
      if (xx == 0.0 || mm == 0.0) throw std::domain_error("undefined cosine");
      const double nx = std::sqrt(xx), nm = std::sqrt(mm);
      for (std::size_t c = 0; c < n; ++c)
        grad[c] = -(rs.mean[c] / (nx * nm) - dot * x[c] / (xx * nx * nm));
      return;
    }
    case DfmMetric::FeatureMagnitude: {
      double xx = 0.0;
      for (std::size_t c = 0; c < n; ++c) xx += x[c] * x[c];
      const double nx = std::sqrt(xx);
      for (std::size_t c = 0; c < n; ++c) grad[c] = nx == 0.0 ? 0.0 : x[c] / nx;
      return;
    }
  }
}

}  // namespace bnwvad
