#pragma once

#include <string>

#include "json.hpp"

#include "bnwvad/data.hpp"
#include "bnwvad/trainer.hpp"

namespace bnwvad {

/// Flat key/value form. Unknown keys are rejected. A "preset" key ("paper" or
/// "desk") picks the starting point; other keys override it. "metric" sets the
/// loss/score metric and the selection metric together, "selection_metric"
/// then overrides the latter alone.
TrainConfig train_config_from_json(const nlohmann::json& j);
/// Applies the keys of `j` on top of `cfg`.
void apply_train_overrides(TrainConfig& cfg, const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthConfig& cfg);

/// Reads and parses a JSON file; throws std::runtime_error naming the path.
nlohmann::json read_json_file(const std::string& path);

}  // namespace bnwvad
