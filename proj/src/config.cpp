#include "bnwvad/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bnwvad {

using nlohmann::json;

namespace {

template <class T>
T get(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw std::invalid_argument("config key '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

AnomalyMode parse_mode(const std::string& s) {
  if (s == "shift") return AnomalyMode::Shift;
  if (s == "rotate") return AnomalyMode::Rotate;
  throw std::invalid_argument("unknown anomaly mode: " + s);
}

}  // namespace

void apply_train_overrides(TrainConfig& cfg, const json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  // "metric" first so that "selection_metric" can refine it.
  if (j.contains("metric")) {
    const DfmMetric m = parse_metric(get<std::string>(j.at("metric"), "metric"));
    cfg.mpp.metric = m;
    cfg.selection_metric = m;
  }
  for (const auto& [key, v] : j.items()) {
    if (key == "preset" || key == "metric") continue;
    if (key == "iterations") cfg.iterations = get_count(v, key);
    else if (key == "b_nor") cfg.b_nor = get_count(v, key);
    else if (key == "b_abn") cfg.b_abn = get_count(v, key);
    else if (key == "rho_s") cfg.ratios.sample = get<double>(v, key);
    else if (key == "rho_b") cfg.ratios.batch = get<double>(v, key);
    else if (key == "lambda1") cfg.weights.lambda1 = get<double>(v, key);
    else if (key == "lambda2") cfg.weights.lambda2 = get<double>(v, key);
    else if (key == "margin") cfg.mpp.margin = get<double>(v, key);
    else if (key == "hinge") cfg.mpp.hinge = get<bool>(v, key);
    else if (key == "selection_metric") cfg.selection_metric = parse_metric(get<std::string>(v, key));
    else if (key == "momentum") cfg.momentum = get<double>(v, key);
    else if (key == "lr") cfg.adam.lr = get<double>(v, key);
    else if (key == "beta1") cfg.adam.beta1 = get<double>(v, key);
    else if (key == "beta2") cfg.adam.beta2 = get<double>(v, key);
    else if (key == "adam_eps") cfg.adam.eps = get<double>(v, key);
    else if (key == "weight_decay") cfg.adam.weight_decay = get<double>(v, key);
    else if (key == "hidden1") cfg.hidden1 = get_count(v, key);
    else if (key == "hidden2") cfg.hidden2 = get_count(v, key);
    else if (key == "enhancer") cfg.enhancer = parse_enhancer(get<std::string>(v, key));
    else if (key == "snippets") cfg.snippets = get_count(v, key);
    else if (key == "use_sls") cfg.use_sls = get<bool>(v, key);
    else if (key == "use_bls") cfg.use_bls = get<bool>(v, key);
    else if (key == "use_mpp") cfg.use_mpp = get<bool>(v, key);
    else if (key == "use_abn_loss") cfg.use_abn_loss = get<bool>(v, key);
    else if (key == "abn_loss_weight") cfg.abn_loss_weight = get<double>(v, key);
    else if (key == "normalization") cfg.normalization = parse_normalization(get<std::string>(v, key));
    else if (key == "classifier_input")
      cfg.classifier_input = parse_classifier_input(get<std::string>(v, key));
    else if (key == "dfm_stats") cfg.dfm_stats = parse_stats_order(get<std::string>(v, key));
    else if (key == "selection_layer")
      cfg.selection_layer = parse_selection_layer(get<std::string>(v, key));
    else if (key == "checkpoint_every") cfg.checkpoint_every = get_count(v, key);
    else if (key == "seed") cfg.seed = get<std::uint64_t>(v, key);
    else throw std::invalid_argument("unknown train config key: " + key);
  }
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig cfg;
  if (j.contains("preset")) {
    const auto preset = get<std::string>(j.at("preset"), "preset");
    if (preset == "desk") cfg = TrainConfig::desk();
    else if (preset != "paper") throw std::invalid_argument("unknown preset: " + preset);
  }
  apply_train_overrides(cfg, j);
  cfg.validate();
  return cfg;
}

json to_json(const TrainConfig& c) {
  return json{{"iterations", c.iterations},
              {"b_nor", c.b_nor},
              {"b_abn", c.b_abn},
              {"rho_s", c.ratios.sample},
              {"rho_b", c.ratios.batch},
              {"lambda1", c.weights.lambda1},
              {"lambda2", c.weights.lambda2},
              {"margin", c.mpp.margin},
              {"hinge", c.mpp.hinge},
              {"metric", to_string(c.mpp.metric)},
              {"selection_metric", to_string(c.selection_metric)},
              {"momentum", c.momentum},
              {"lr", c.adam.lr},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"adam_eps", c.adam.eps},
              {"weight_decay", c.adam.weight_decay},
              {"hidden1", c.hidden1},
              {"hidden2", c.hidden2},
              {"enhancer", to_string(c.enhancer)},
              {"snippets", c.snippets},
              {"use_sls", c.use_sls},
              {"use_bls", c.use_bls},
              {"use_mpp", c.use_mpp},
              {"use_abn_loss", c.use_abn_loss},
              {"abn_loss_weight", c.abn_loss_weight},
              {"normalization", to_string(c.normalization)},
              {"classifier_input", to_string(c.classifier_input)},
              {"dfm_stats", to_string(c.dfm_stats)},
              {"selection_layer", to_string(c.selection_layer)},
              {"checkpoint_every", c.checkpoint_every},
              {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("synth config must be a JSON object");
  SynthConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "n_normal") cfg.n_normal = get_count(v, key);
    else if (key == "n_abnormal") cfg.n_abnormal = get_count(v, key);
    else if (key == "snippets") cfg.snippets = get_count(v, key);
    else if (key == "channels") cfg.channels = get_count(v, key);
    else if (key == "crops") cfg.crops = get_count(v, key);
    else if (key == "normal_mean") cfg.normal_mean = get<std::vector<double>>(v, key);
    else if (key == "mean_norm") cfg.mean_norm = get<double>(v, key);
    else if (key == "normal_var") cfg.normal_var = get<std::vector<double>>(v, key);
    else if (key == "anisotropy") cfg.anisotropy = get<double>(v, key);
    else if (key == "anomaly_shift") cfg.anomaly_shift = get<std::vector<double>>(v, key);
    else if (key == "shift_magnitude") cfg.shift_magnitude = get<double>(v, key);
    else if (key == "mode") cfg.mode = parse_mode(get<std::string>(v, key));
    else if (key == "ratio_a") cfg.ratio_a = get<double>(v, key);
    else if (key == "ratio_b") cfg.ratio_b = get<double>(v, key);
    else if (key == "segments") cfg.segments = get_count(v, key);
    else if (key == "video_offset_std") cfg.video_offset_std = get<double>(v, key);
    else if (key == "context_shift") cfg.context_shift = get<double>(v, key);
    else if (key == "seed") cfg.seed = get<std::uint64_t>(v, key);
    else if (key == "classes") {
      if (!v.is_array()) throw std::invalid_argument("config key 'classes' must be an array");
      for (const auto& c : v) {
        SynthClass sc;
        for (const auto& [ck, cv] : c.items()) {
          if (ck == "name") sc.name = get<std::string>(cv, ck);
          else if (ck == "weight") sc.weight = get<double>(cv, ck);
          else if (ck == "shift_scale") sc.shift_scale = get<double>(cv, ck);
          else if (ck == "ratio_lo") sc.ratio_lo = get<double>(cv, ck);
          else if (ck == "ratio_hi") sc.ratio_hi = get<double>(cv, ck);
          else throw std::invalid_argument("unknown synthetic class key: " + ck);
        }
        cfg.classes.push_back(sc);
      }
    } else {
      throw std::invalid_argument("unknown synth config key: " + key);
    }
  }
  cfg.validate();
  return cfg;
}

json to_json(const SynthConfig& c) {
  json classes = json::array();
  for (const auto& sc : c.classes)
    classes.push_back({{"name", sc.name},
                       {"weight", sc.weight},
                       {"shift_scale", sc.shift_scale},
                       {"ratio_lo", sc.ratio_lo},
                       {"ratio_hi", sc.ratio_hi}});
  return json{{"n_normal", c.n_normal},
              {"n_abnormal", c.n_abnormal},
              {"snippets", c.snippets},
              {"channels", c.channels},
              {"crops", c.crops},
              {"normal_mean", c.normal_mean},
              {"mean_norm", c.mean_norm},
              {"normal_var", c.normal_var},
              {"anisotropy", c.anisotropy},
              {"anomaly_shift", c.anomaly_shift},
              {"shift_magnitude", c.shift_magnitude},
              {"mode", c.mode == AnomalyMode::Rotate ? "rotate" : "shift"},
              {"ratio_a", c.ratio_a},
              {"ratio_b", c.ratio_b},
              {"segments", c.segments},
              {"video_offset_std", c.video_offset_std},
              {"context_shift", c.context_shift},
              {"classes", classes},
              {"seed", c.seed}};
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace bnwvad
