#pragma once

#include <cstdint>

#include "bnwvad/model.hpp"

namespace bnwvad {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Coupled L2: decay * param is added to the gradient before the moments.
  double weight_decay = 5e-5;
  bool operator==(const AdamHyper&) const = default;
};

struct AdamState {
  AdamHyper hyper;
  Trainables first;
  Trainables second;
  std::uint64_t step = 0;

  static AdamState for_params(const Trainables& params, const AdamHyper& hyper = {});
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(Trainables& params, const Gradients& grads, AdamState& state);

}  // namespace bnwvad
