#include "bnwvad/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bnwvad {

AdamState AdamState::for_params(const Trainables& params, const AdamHyper& hyper) {
  return AdamState{hyper, params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(Trainables& params, const Gradients& grads, AdamState& state) {
  auto p = params.blocks();
  auto g = grads.blocks();
  auto m = state.first.blocks();
  auto v = state.second.blocks();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw std::invalid_argument("adam: block count mismatch");
  for (std::size_t i = 0; i < p.size(); ++i)
    if (g[i].size() != p[i].size() || m[i].size() != p[i].size() || v[i].size() != p[i].size())
      throw std::invalid_argument("adam: shape mismatch");
  if (state.step == std::numeric_limits<std::uint64_t>::max())
    throw std::overflow_error("adam: step counter overflow");

  const AdamHyper& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < p[i].size(); ++k) {
      const double grad = g[i][k] + h.weight_decay * p[i][k];
      m[i][k] = h.beta1 * m[i][k] + (1.0 - h.beta1) * grad;
      v[i][k] = h.beta2 * v[i][k] + (1.0 - h.beta2) * grad * grad;
      const double m_hat = m[i][k] / correction1;
      const double v_hat = v[i][k] / correction2;
      p[i][k] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

}  // namespace bnwvad
