#include "bnwvad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <stdexcept>

namespace bnwvad {

std::string to_string(StatsOrder o) { return o == StatsOrder::Pre ? "pre" : "post"; }
std::string to_string(SelectionLayer s) {
  switch (s) {
    case SelectionLayer::Sum: return "sum";
    case SelectionLayer::Hidden1: return "hidden1";
    case SelectionLayer::Hidden2: return "hidden2";
    case SelectionLayer::Enhanced: return "enhanced";
  }
  return "sum";
}
StatsOrder parse_stats_order(std::string_view name) {
  if (name == "pre") return StatsOrder::Pre;
  if (name == "post") return StatsOrder::Post;
  throw std::invalid_argument("unknown dfm stats order: " + std::string(name));
}
SelectionLayer parse_selection_layer(std::string_view name) {
  if (name == "sum") return SelectionLayer::Sum;
  if (name == "hidden1" || name == "h1" || name == "1") return SelectionLayer::Hidden1;
  if (name == "hidden2" || name == "h2" || name == "2") return SelectionLayer::Hidden2;
  if (name == "enhanced") return SelectionLayer::Enhanced;
  throw std::invalid_argument("unknown selection layer: " + std::string(name));
}

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.b_nor = 8;
  cfg.b_abn = 8;
  cfg.adam.lr = 1e-3;
  return cfg;
}

SelectionRatios TrainConfig::effective_ratios() const {
  return {use_sls ? ratios.sample : 0.0, use_bls ? ratios.batch : 0.0};
}

ModelConfig TrainConfig::model_config(std::size_t input_channels) const {
  ModelConfig m;
  m.input_channels = input_channels;
  m.enhancer = enhancer;
  m.hidden1 = hidden1;
  m.hidden2 = hidden2;
  m.normalization = normalization;
  m.classifier_input = classifier_input;
  m.momentum = momentum;
  return m;
}

void TrainConfig::validate() const {
  if (iterations == 0) throw std::invalid_argument("iterations must be at least 1");
  if (b_nor == 0 || b_abn == 0) throw std::invalid_argument("batch sizes must be positive");
  if (weights.lambda1 < 0.0 || weights.lambda2 < 0.0)
    throw std::invalid_argument("loss weights must be non-negative");
  if (mpp.margin < 0.0) throw std::invalid_argument("margin must be non-negative");
  if (abn_loss_weight < 0.0) throw std::invalid_argument("abnormal loss weight must be non-negative");
  if (!(momentum > 0.0 && momentum <= 1.0)) throw std::invalid_argument("momentum must be in (0, 1]");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (normalization == Normalization::BatchNorm) effective_ratios().validate();
  if (selection_layer == SelectionLayer::Enhanced && selection_metric != DfmMetric::FeatureMagnitude)
    throw std::invalid_argument("enhanced-feature selection needs the fm metric");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

constexpr double kBceClamp = 1e-7;

struct Assembly {
  double normal = 0.0, mpp1 = 0.0, mpp2 = 0.0, abnormal = 0.0, total = 0.0;
  Grid d_preds;
  Tensor3 d_hidden1;
  Tensor3 d_hidden2;
};

double mpp_term(const Tensor3& hidden, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                const RunningStats& stats, const MppConfig& mpp, double weight, Tensor3* grad) {
  if (pairs.empty()) return 0.0;
  const std::size_t C = hidden.channels();
  std::vector<double> xn(pairs.size() * C), xa(pairs.size() * C);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto rn = hidden.row(pairs[k].first);
    const auto ra = hidden.row(pairs[k].second);
    std::copy(rn.begin(), rn.end(), xn.begin() + static_cast<std::ptrdiff_t>(k * C));
    std::copy(ra.begin(), ra.end(), xa.begin() + static_cast<std::ptrdiff_t>(k * C));
  }
  const MppResult r = mpp_loss(xn, xa, C, stats, mpp);
  if (grad) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      auto gn = grad->row(pairs[k].first);
      auto ga = grad->row(pairs[k].second);
      for (std::size_t c = 0; c < C; ++c) {
        gn[c] += weight * r.grad_normal[k * C + c];
        ga[c] += weight * r.grad_abnormal[k * C + c];
      }
    }
  }
  return r.value;
}

// Loss terms of one step given a train-mode cache and a frozen context.
Assembly assemble(const ForwardCache& cache, const StepContext& ctx, const TrainConfig& cfg,
                  bool with_grads) {
  Assembly a;
  const std::size_t T = cache.preds.cols();
  if (with_grads) {
    a.d_preds = Grid(cache.preds.rows(), T);
    a.d_hidden1 = Tensor3(cache.hidden1.videos(), T, cache.hidden1.channels());
    a.d_hidden2 = Tensor3(cache.hidden2.videos(), T, cache.hidden2.channels());
  }

  const Grid normal_preds(ctx.b_nor, T,
                          std::vector<double>(cache.preds.flat().begin(),
                                              cache.preds.flat().begin() +
                                                  static_cast<std::ptrdiff_t>(ctx.b_nor * T)));
  const LossResult nor = normal_loss(normal_preds);
  a.normal = nor.value;
  if (with_grads) std::copy(nor.grad.begin(), nor.grad.end(), a.d_preds.flat().begin());

  a.mpp1 = mpp_term(cache.hidden1, ctx.pairs1, ctx.stats1, cfg.mpp, cfg.weights.lambda1,
                    with_grads ? &a.d_hidden1 : nullptr);
  a.mpp2 = mpp_term(cache.hidden2, ctx.pairs2, ctx.stats2, cfg.mpp, cfg.weights.lambda2,
                    with_grads ? &a.d_hidden2 : nullptr);

  if (cfg.use_abn_loss && !ctx.abnormal_cells.empty()) {
    std::vector<double> p(ctx.abnormal_cells.size());
    for (std::size_t i = 0; i < p.size(); ++i)
      p[i] = std::clamp(cache.preds.flat()[ctx.abnormal_cells[i]], kBceClamp, 1.0 - kBceClamp);
    const LossResult abn = abnormal_loss(p);
    a.abnormal = abn.value;
    if (with_grads) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double raw = cache.preds.flat()[ctx.abnormal_cells[i]];
        if (raw > kBceClamp && raw < 1.0 - kBceClamp)
          a.d_preds.flat()[ctx.abnormal_cells[i]] += cfg.abn_loss_weight * abn.grad[i];
      }
    }
  }
  a.total = total_loss(a.normal, a.mpp1, a.mpp2, cfg.weights) + cfg.abn_loss_weight * a.abnormal;
  return a;
}

// Selected cells of `mask` (rows offset by `row_offset`) ordered by descending
// `dfm`, ties to the lower cell.
std::vector<std::size_t> ranked_cells(const SelectionMask& mask, std::size_t row_offset,
                                      const ScoreGrid& dfm) {
  std::vector<std::size_t> cells = mask.cells();
  for (auto& c : cells) c += row_offset * mask.snippets();
  std::stable_sort(cells.begin(), cells.end(), [&](std::size_t a, std::size_t b) {
    return dfm.flat()[a] > dfm.flat()[b];
  });
  return cells;
}

ScoreGrid rows_of(const ScoreGrid& g, std::size_t first, std::size_t count) {
  const auto begin = g.flat().begin() + static_cast<std::ptrdiff_t>(first * g.cols());
  return ScoreGrid(count, g.cols(),
                   std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * g.cols())));
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Tensor3 concat_batch(const Batch& batch) {
  const Tensor3& n = batch.normal;
  const Tensor3& a = batch.abnormal;
  if (n.snippets() != a.snippets() || n.channels() != a.channels())
    throw std::invalid_argument("normal and abnormal halves differ in shape");
  std::vector<double> data(n.storage());
  data.insert(data.end(), a.storage().begin(), a.storage().end());
  return Tensor3(n.videos() + a.videos(), n.snippets(), n.channels(), std::move(data));
}

TrainState init_state(const TrainConfig& cfg, std::size_t input_channels) {
  TrainState st;
  st.model = init_params(cfg.model_config(input_channels), derive_seed(cfg.seed, 1));
  st.optimizer = AdamState::for_params(st.model.weights, cfg.adam);
  return st;
}

StepLog train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                   StepContext* context) {
  cfg.validate();
  const Tensor3 x = concat_batch(batch);
  const std::size_t b_nor = batch.normal.videos();
  const std::size_t b_abn = batch.abnormal.videos();
  ModelParams& model = state.model;

  const RunningStats pre1 = model.stats1, pre2 = model.stats2;
  const ForwardCache cache = forward(x, model, Mode::Train);
  update_running_stats(model, cache);

  StepContext ctx;
  ctx.b_nor = b_nor;
  const bool post = cfg.dfm_stats == StatsOrder::Post;
  ctx.stats1 = post ? model.stats1 : pre1;
  ctx.stats2 = post ? model.stats2 : pre2;

  StepLog log;
  if (model.config.normalization == Normalization::BatchNorm) {
    const ScoreGrid sel1 = dfm_batch(cache.hidden1, ctx.stats1, cfg.selection_metric);
    const ScoreGrid sel2 = dfm_batch(cache.hidden2, ctx.stats2, cfg.selection_metric);
    ScoreGrid selection;
    switch (cfg.selection_layer) {
      case SelectionLayer::Sum:
        selection = sel1;
        for (std::size_t i = 0; i < selection.size(); ++i) selection.flat()[i] += sel2.flat()[i];
        break;
      case SelectionLayer::Hidden1: selection = sel1; break;
      case SelectionLayer::Hidden2: selection = sel2; break;
      case SelectionLayer::Enhanced:
        selection = dfm_batch(cache.enhanced, RunningStats::fresh(cache.enhanced.channels()),
                              DfmMetric::FeatureMagnitude);
        break;
    }
    const ScoreGrid nor_scores = rows_of(selection, 0, b_nor);
    const ScoreGrid abn_scores = rows_of(selection, b_nor, b_abn);
    log.mean_dfm_nor = mean_of(nor_scores.flat());
    log.mean_dfm_abn = mean_of(abn_scores.flat());

    ctx.abnormal_mask = select_sbs(abn_scores, cfg.effective_ratios());
    const std::size_t k = ctx.abnormal_mask.count();
    if (k == 0) throw std::logic_error("selection produced no abnormal snippets");
    const SelectionMask normal_mask = select_normal_matched(nor_scores, k);
    log.selected = k;

    std::vector<std::size_t> abn_cells = ctx.abnormal_mask.cells();
    for (auto& c : abn_cells) c += b_nor * x.snippets();
    ctx.abnormal_cells = abn_cells;

    if (cfg.use_mpp) {
      const bool reuse = cfg.mpp.metric == cfg.selection_metric;
      const ScoreGrid m1 = reuse ? sel1 : dfm_batch(cache.hidden1, ctx.stats1, cfg.mpp.metric);
      const ScoreGrid m2 = reuse ? sel2 : dfm_batch(cache.hidden2, ctx.stats2, cfg.mpp.metric);
      auto pair_up = [&](const ScoreGrid& layer) {
        const auto a = ranked_cells(ctx.abnormal_mask, b_nor, layer);
        const auto n = ranked_cells(normal_mask, 0, layer);
        std::vector<std::pair<std::size_t, std::size_t>> pairs(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) pairs[i] = {n[i], a[i]};
        return pairs;
      };
      ctx.pairs1 = pair_up(m1);
      ctx.pairs2 = pair_up(m2);
    }
  }

  Assembly a = assemble(cache, ctx, cfg, true);
  log.total = a.total;
  log.normal = a.normal;
  log.mpp1 = a.mpp1;
  log.mpp2 = a.mpp2;
  log.abnormal = a.abnormal;

  const Gradients grads = backward(cache, model, a.d_preds, &a.d_hidden1, &a.d_hidden2);
  adam_step(model.weights, grads, state.optimizer);
  if (context) *context = std::move(ctx);
  return log;
}

double step_objective(const ModelParams& params, const Tensor3& x, const StepContext& context,
                      const TrainConfig& cfg) {
  const ForwardCache cache = forward(x, params, Mode::Train);
  return assemble(cache, context, cfg, false).total;
}

Gradients step_gradients(const ModelParams& params, const Tensor3& x, const StepContext& context,
                         const TrainConfig& cfg) {
  const ForwardCache cache = forward(x, params, Mode::Train);
  const Assembly a = assemble(cache, context, cfg, true);
  return backward(cache, params, a.d_preds, &a.d_hidden1, &a.d_hidden2);
}

FitResult fit(const TrainConfig& cfg, const Dataset& ds, const CheckpointHook& on_checkpoint) {
  cfg.validate();
  Dataset resampled;
  const Dataset* data = &ds;
  if (cfg.snippets != 0) {
    resampled = resample(ds, cfg.snippets);
    data = &resampled;
  }
  FitResult result;
  result.state = init_state(cfg, data->channels());
  BatchSampler sampler(*data, cfg.b_nor, cfg.b_abn, derive_seed(cfg.seed, 2));
  result.curve.reserve(cfg.iterations);
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const Batch batch = sampler.next();
    StepLog log = train_step(result.state, batch, cfg);
    log.iteration = it;
    result.curve.push_back(log);
    const bool due = cfg.checkpoint_every != 0 && it % cfg.checkpoint_every == 0;
    if (on_checkpoint && (due || it == cfg.iterations)) on_checkpoint(it, result.state);
  }
  return result;
}

std::vector<ScoredVideo> score_dataset(const ModelParams& params, const Dataset& ds,
                                       DfmMetric metric) {
  std::vector<ScoredVideo> out(ds.videos.size());
  std::exception_ptr failure;
  const bool with_dfm = params.config.normalization == Normalization::BatchNorm;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ds.videos.size()); ++i) {
    try {
      const Video& v = ds.videos[i];
      const std::size_t crops = v.record.crops, T = v.record.snippets, C = v.record.channels;
      const Tensor3 x(crops, T, C, std::vector<double>(v.features.begin(), v.features.end()));
      const ForwardCache cache = forward(x, params, Mode::Eval);
      ScoredVideo s;
      s.pred = crop_average(cache.preds);
      if (with_dfm) {
        const LayerDfm d = layer_dfm(cache, params, metric);
        s.dfm1 = crop_average(d.layer1);
        s.dfm2 = crop_average(d.layer2);
        s.score = crop_average(fuse_scores(cache.preds, d));
      } else {
        s.dfm1.assign(T, 0.0);
        s.dfm2.assign(T, 0.0);
        s.score = s.pred;
      }
      out[i] = std::move(s);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<VideoScores> attach_labels(const Dataset& ds,
                                       const std::vector<std::vector<double>>& scores) {
  if (scores.size() != ds.videos.size()) throw std::invalid_argument("score/video count mismatch");
  std::vector<VideoScores> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const VideoRecord& r = ds.videos[i].record;
    out.push_back({r.id, r.label, r.class_name, scores[i], r.snippet_labels});
  }
  return out;
}

MetricReport evaluate(const ModelParams& params, const Dataset& ds, DfmMetric metric,
                      std::size_t frames_per_snippet) {
  for (const auto& v : ds.videos)
    if (!v.record.snippet_labels) throw std::invalid_argument("evaluation requires snippet labels");
  const auto scored = score_dataset(params, ds, metric);
  std::vector<std::vector<double>> scores;
  scores.reserve(scored.size());
  for (const auto& s : scored) scores.push_back(s.score);
  return evaluate_scores(attach_labels(ds, scores), frames_per_snippet);
}

std::string curve_csv(const std::vector<StepLog>& curve) {
  std::string out = "iteration,L,L_nor,L_mpp1,L_mpp2,selected_K,mean_DFM_abn,mean_DFM_nor\n";
  char line[512];
  for (const auto& s : curve) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g,%zu,%.17g,%.17g\n", s.iteration,
                  s.total, s.normal, s.mpp1, s.mpp2, s.selected, s.mean_dfm_abn, s.mean_dfm_nor);
    out += line;
  }
  return out;
}

}  // namespace bnwvad
