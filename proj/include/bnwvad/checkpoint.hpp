#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "bnwvad/model.hpp"
#include "bnwvad/optim.hpp"

namespace bnwvad {

// Binary checkpoint layout (all integers and floats little-endian):
//
//   "BNWVADCK"                      8-byte magic
//   u32 version                     currently 1
//   model config                    u64 input, u32 enhancer, u64 enhanced,
//                                   u64 hidden1, u64 hidden2, u32 normalization,
//                                   u32 classifier input, f64 momentum, f64 eps
//   12 parameter blocks             each u64 count + f64[count]
//   running stats x2                u64 C, f64[C] mean, f64[C] var, f64 momentum, f64 eps
//   u8 has_optimizer
//   [optimizer]                     f64 lr, beta1, beta2, eps, weight_decay; u64 step;
//                                   12 first-moment blocks; 12 second-moment blocks
//
// The JSON form holds the same fields by name.

struct Checkpoint {
  ModelParams model;
  std::optional<AdamState> optimizer;
  bool operator==(const Checkpoint&) const = default;
};

enum class CheckpointFormat { Binary, Json };

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                     CheckpointFormat format = CheckpointFormat::Binary);
/// Detects the format from the leading bytes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bnwvad
