#include "bnwvad/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"

#include "bnwvad/checkpoint.hpp"
#include "bnwvad/config.hpp"
#include "bnwvad/eval.hpp"

namespace bnwvad::cli {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

// `--set key=value`: the value is taken as JSON when it parses, else as a string.
json parse_assignments(const std::vector<std::string>& sets) {
  json j = json::object();
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value: " + s);
    const std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    j[key] = parsed.is_discarded() ? json(value) : parsed;
  }
  return j;
}

struct TrainOptions {
  std::string config;
  std::string preset = "paper";
  std::vector<std::string> sets;
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--config", o.config, "Training config JSON");
  cmd->add_option("--preset", o.preset, "Base schedule")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--set", o.sets, "Override a config key (key=value), repeatable");
}

TrainConfig build_train_config(const TrainOptions& o) {
  json j = o.config.empty() ? json::object() : read_json_file(o.config);
  if (!j.contains("preset")) j["preset"] = o.preset;
  TrainConfig cfg = train_config_from_json(j);
  apply_train_overrides(cfg, parse_assignments(o.sets));
  cfg.validate();
  return cfg;
}

std::vector<std::vector<double>> align_scores(const Dataset& ds,
                                              const std::map<std::string, std::vector<double>>& by_id) {
  std::vector<std::vector<double>> scores;
  scores.reserve(ds.videos.size());
  for (const auto& v : ds.videos) {
    const auto it = by_id.find(v.record.id);
    if (it == by_id.end()) throw std::runtime_error("no scores for video " + v.record.id);
    if (it->second.size() != v.record.snippets)
      throw std::runtime_error("score count mismatch for video " + v.record.id);
    scores.push_back(it->second);
  }
  return scores;
}

void apply_axis(TrainConfig& cfg, const std::string& axis, const std::string& value) {
  try {
    if (axis == "rho_s") cfg.ratios.sample = std::stod(value);
    else if (axis == "rho_b") cfg.ratios.batch = std::stod(value);
    else if (axis == "momentum") cfg.momentum = std::stod(value);
    else if (axis == "metric") cfg.selection_metric = parse_metric(value);
    else if (axis == "batch") cfg.b_nor = cfg.b_abn = std::stoul(value);
    else if (axis == "selection") {
      if (value == "sbs") cfg.use_sls = cfg.use_bls = true;
      else if (value == "sls") cfg.use_sls = true, cfg.use_bls = false;
      else if (value == "bls") cfg.use_sls = false, cfg.use_bls = true;
      else throw std::invalid_argument("selection value must be sbs, sls or bls");
    }
  } catch (const std::logic_error& e) {
    throw std::invalid_argument("bad value '" + value + "' for axis " + axis + ": " + e.what());
  }
}

}  // namespace

std::string score_csv(const Dataset& ds, const std::vector<ScoredVideo>& scored) {
  if (scored.size() != ds.videos.size()) throw std::invalid_argument("score/video count mismatch");
  std::string out = "video_id,snippet_index,pred,dfm1,dfm2,score\n";
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const ScoredVideo& s = scored[i];
    for (std::size_t t = 0; t < s.score.size(); ++t) {
      out += ds.videos[i].record.id;
      out += ',' + std::to_string(t) + ',' + fmt(s.pred[t]) + ',' + fmt(s.dfm1[t]) + ',' +
             fmt(s.dfm2[t]) + ',' + fmt(s.score[t]) + '\n';
    }
  }
  return out;
}

std::map<std::string, std::vector<double>> read_score_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty score CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  std::size_t id_col = header.size(), idx_col = header.size(), score_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "video_id") id_col = i;
    if (header[i] == "snippet_index") idx_col = i;
    if (header[i] == "score") score_col = i;
  }
  if (id_col == header.size() || idx_col == header.size() || score_col == header.size())
    throw std::runtime_error("score CSV needs video_id, snippet_index and score columns");

  std::map<std::string, std::map<std::size_t, double>> cells;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size())
      throw std::runtime_error("score CSV line " + std::to_string(lineno) + ": wrong field count");
    try {
      const std::size_t t = std::stoul(f[idx_col]);
      if (!cells[f[id_col]].emplace(t, std::stod(f[score_col])).second)
        throw std::runtime_error("duplicate snippet");
    } catch (const std::exception& e) {
      throw std::runtime_error("score CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::map<std::string, std::vector<double>> out;
  for (auto& [id, m] : cells) {
    std::vector<double> v;
    v.reserve(m.size());
    std::size_t expect = 0;
    for (const auto& [t, s] : m) {
      if (t != expect++) throw std::runtime_error("score CSV: gap in snippets of " + id);
      v.push_back(s);
    }
    out.emplace(id, std::move(v));
  }
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly supervised video anomaly detection on snippet features", "bnwvad"};
  app.require_subcommand(1, 1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic feature dataset");
  std::string synth_config, synth_out;
  std::uint64_t split_stream = 0;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "Generator config JSON");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--split", split_stream, "Sample stream; splits share means and shifts");
  synth->add_option("--seed", synth_seed, "Override the config seed");

  // train
  auto* train = app.add_subcommand("train", "Fit a model");
  TrainOptions train_opts;
  std::string train_data, train_out, curve_out, ckpt_format = "binary";
  std::optional<std::uint64_t> train_seed;
  add_train_options(train, train_opts);
  train->add_option("--data", train_data, "Dataset directory or manifest")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--curve", curve_out, "Training curve CSV path");
  train->add_option("--format", ckpt_format, "Checkpoint encoding")
      ->check(CLI::IsMember({"binary", "json"}));
  train->add_option("--seed", train_seed, "Override the config seed");

  // score
  auto* score = app.add_subcommand("score", "Write per-snippet scores");
  std::string score_ckpt, score_data, score_out, score_metric = "mahalanobis";
  score->add_option("--ckpt", score_ckpt, "Checkpoint")->required();
  score->add_option("--data", score_data, "Dataset directory or manifest")->required();
  score->add_option("--out", score_out, "Score CSV path (stdout when omitted)");
  score->add_option("--metric", score_metric, "DFM metric of the score");

  // eval
  auto* eval = app.add_subcommand("eval", "Report AUC / AP");
  std::string eval_scores, eval_ckpt, eval_data, eval_out, eval_metric = "mahalanobis";
  std::size_t fps = 1;
  auto* scores_opt = eval->add_option("--scores", eval_scores, "Score CSV");
  auto* ckpt_opt = eval->add_option("--ckpt", eval_ckpt, "Checkpoint");
  scores_opt->excludes(ckpt_opt);
  eval->add_option("--data", eval_data, "Dataset directory or manifest")->required();
  eval->add_option("--out", eval_out, "Report path (stdout when omitted)");
  eval->add_option("--metric", eval_metric, "DFM metric of the score");
  eval->add_option("--frames-per-snippet", fps, "Frame expansion of snippet labels")
      ->check(CLI::PositiveNumber);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over one config axis");
  TrainOptions sweep_opts;
  std::string sweep_data, sweep_eval_data, sweep_synth, sweep_axis, sweep_values, sweep_out;
  std::size_t sweep_seeds = 1;
  std::uint64_t sweep_seed = 0;
  add_train_options(sweep, sweep_opts);
  sweep->add_option("--data", sweep_data, "Training dataset");
  sweep->add_option("--eval-data", sweep_eval_data, "Evaluation dataset (defaults to --data)");
  sweep->add_option("--synth", sweep_synth, "Generator config; trains on split 0, evaluates on split 1");
  sweep->add_option("--axis", sweep_axis, "Swept key")
      ->required()
      ->check(CLI::IsMember({"rho_s", "rho_b", "momentum", "metric", "batch", "selection"}));
  sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
  sweep->add_option("--seeds", sweep_seeds, "Training seeds per value")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", sweep_seed, "First training seed");
  sweep->add_option("--out", sweep_out, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      SynthConfig cfg = synth_config.empty() ? SynthConfig{} : synth_config_from_json(read_json_file(synth_config));
      if (synth_seed) cfg.seed = *synth_seed;
      save_dataset(generate_synthetic(cfg, split_stream), synth_out);
    } else if (*train) {
      TrainConfig cfg = build_train_config(train_opts);
      if (train_seed) cfg.seed = *train_seed;
      const Dataset ds = load_dataset(train_data);
      const auto format = ckpt_format == "json" ? CheckpointFormat::Json : CheckpointFormat::Binary;
      const FitResult r = fit(cfg, ds, [&](std::size_t it, const TrainState& st) {
        const Checkpoint ck{st.model, st.optimizer};
        if (it == cfg.iterations) save_checkpoint(train_out, ck, format);
        else save_checkpoint(train_out + "." + std::to_string(it), ck, format);
      });
      if (!curve_out.empty()) write_text(curve_out, curve_csv(r.curve), out);
      const auto& last = r.curve.back();
      err << "trained " << cfg.iterations << " iterations, final loss " << last.total << '\n';
    } else if (*score) {
      const Checkpoint ck = load_checkpoint(score_ckpt);
      const Dataset ds = load_dataset(score_data);
      write_text(score_out, score_csv(ds, score_dataset(ck.model, ds, parse_metric(score_metric))), out);
    } else if (*eval) {
      if (eval_scores.empty() && eval_ckpt.empty()) {
        err << "eval: one of --scores or --ckpt is required\n";
        return 2;
      }
      const Dataset ds = load_dataset(eval_data);
      MetricReport report;
      if (!eval_scores.empty())
        report = evaluate_scores(attach_labels(ds, align_scores(ds, read_score_csv(read_text(eval_scores)))), fps);
      else
        report = evaluate(load_checkpoint(eval_ckpt).model, ds, parse_metric(eval_metric), fps);
      write_text(eval_out, to_json(report) + "\n", out);
    } else if (*sweep) {
      const TrainConfig base = build_train_config(sweep_opts);
      Dataset train_ds, eval_ds;
      if (!sweep_synth.empty()) {
        const SynthConfig sc = synth_config_from_json(read_json_file(sweep_synth));
        train_ds = generate_synthetic(sc, 0);
        eval_ds = generate_synthetic(sc, 1);
      } else if (!sweep_data.empty()) {
        train_ds = load_dataset(sweep_data);
        eval_ds = sweep_eval_data.empty() ? train_ds : load_dataset(sweep_eval_data);
      } else {
        err << "sweep: one of --data or --synth is required\n";
        return 2;
      }
      const auto values = split(sweep_values, ',');
      if (values.empty()) {
        err << "sweep: --values is empty\n";
        return 2;
      }
      std::string table = sweep_axis + ",seed,auc,ap,auc_abn,ap_abn\n";
      for (const auto& value : values) {
        for (std::size_t s = 0; s < sweep_seeds; ++s) {
          TrainConfig cfg = base;
          apply_axis(cfg, sweep_axis, value);
          cfg.seed = sweep_seed + s;
          cfg.validate();
          const FitResult r = fit(cfg, train_ds);
          const MetricReport m = evaluate(r.state.model, eval_ds, cfg.mpp.metric);
          table += value + ',' + std::to_string(cfg.seed) + ',' + fmt(m.auc) + ',' + fmt(m.ap) + ',' +
                   fmt(m.auc_abn) + ',' + fmt(m.ap_abn) + '\n';
        }
      }
      write_text(sweep_out, table, out);
    }
  } catch (const CLI::Error& e) {
    err << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"bnwvad"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace bnwvad::cli
