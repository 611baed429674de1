#include "bnwvad/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace bnwvad {

MppResult mpp_loss(std::span<const double> normal, std::span<const double> abnormal,
                   std::size_t channels, const RunningStats& rs, const MppConfig& cfg) {
  if (cfg.margin < 0.0) throw std::invalid_argument("margin must be non-negative");
  if (channels == 0 || normal.size() % channels != 0 || abnormal.size() != normal.size())
    throw std::invalid_argument("mpp_loss expects two [K, C] blocks of equal shape");
  const std::size_t k = normal.size() / channels;
  if (k == 0) throw std::invalid_argument("empty selection");

  MppResult out;
  out.grad_normal.assign(normal.size(), 0.0);
  out.grad_abnormal.assign(abnormal.size(), 0.0);
  const double inv_k = 1.0 / static_cast<double>(k);
  std::vector<double> g(channels);
  for (std::size_t i = 0; i < k; ++i) {
    const auto xn = normal.subspan(i * channels, channels);
    const auto xa = abnormal.subspan(i * channels, channels);
    const double term = cfg.margin + dfm(xn, rs, cfg.metric) - dfm(xa, rs, cfg.metric);
    if (cfg.hinge && term <= 0.0) continue;
    out.value += term;
    dfm_gradient(xn, rs, cfg.metric, g);
    for (std::size_t c = 0; c < channels; ++c) out.grad_normal[i * channels + c] = g[c] * inv_k;
    dfm_gradient(xa, rs, cfg.metric, g);
    for (std::size_t c = 0; c < channels; ++c) out.grad_abnormal[i * channels + c] = -g[c] * inv_k;
  }
  out.value *= inv_k;
  return out;
}

LossResult normal_loss(const Grid& preds) {
  LossResult out;
  out.grad.assign(preds.size(), 0.0);
  for (std::size_t b = 0; b < preds.rows(); ++b) {
    double sq = 0.0;
    for (double p : preds.row(b)) {
      if (!std::isfinite(p)) throw std::domain_error("non-finite prediction");
      sq += p * p;
    }
    const double norm = std::sqrt(sq);
    out.value += norm;
    if (norm == 0.0) continue;
    for (std::size_t t = 0; t < preds.cols(); ++t) out.grad[b * preds.cols() + t] = preds(b, t) / norm;
  }
  return out;
}

LossResult abnormal_loss(std::span<const double> preds) {
  if (preds.empty()) throw std::invalid_argument("empty selection");
  LossResult out;
  out.grad.resize(preds.size());
  const double inv_k = 1.0 / static_cast<double>(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = preds[i];
    if (!(p > 0.0 && p <= 1.0)) throw std::domain_error("abnormal_loss requires predictions in (0, 1]");
    out.value -= std::log(p) * inv_k;
    out.grad[i] = -inv_k / p;
  }
  return out;
}

double total_loss(double normal, double mpp1, double mpp2, const LossWeights& weights) {
  return normal + weights.lambda1 * mpp1 + weights.lambda2 * mpp2;
}

}  // namespace bnwvad
