#include "bnwvad/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "bnwvad/kernels.hpp"

namespace bnwvad {

std::string to_string(Normalization n) {
  return n == Normalization::BatchNorm ? "batchnorm" : "identity";
}
std::string to_string(ClassifierInput c) {
  return c == ClassifierInput::Hidden1 ? "hidden1" : "hidden2";
}
std::string to_string(Enhancer e) { return e == Enhancer::None ? "none" : "linear"; }

Normalization parse_normalization(std::string_view name) {
  if (name == "batchnorm" || name == "bn") return Normalization::BatchNorm;
  if (name == "identity" || name == "none") return Normalization::Identity;
  throw std::invalid_argument("unknown normalization: " + std::string(name));
}
ClassifierInput parse_classifier_input(std::string_view name) {
  if (name == "hidden1" || name == "h1" || name == "1") return ClassifierInput::Hidden1;
  if (name == "hidden2" || name == "h2" || name == "2") return ClassifierInput::Hidden2;
  throw std::invalid_argument("unknown classifier input: " + std::string(name));
}
Enhancer parse_enhancer(std::string_view name) {
  if (name == "none" || name == "identity") return Enhancer::None;
  if (name == "linear") return Enhancer::Linear;
  throw std::invalid_argument("unknown enhancer: " + std::string(name));
}

void ModelConfig::validate() const {
  if (input_channels == 0 || hidden1 == 0 || hidden2 == 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (!(momentum > 0.0 && momentum <= 1.0)) throw std::invalid_argument("momentum must be in (0, 1]");
  if (!(eps >= 0.0)) throw std::invalid_argument("eps must be non-negative");
}

std::vector<std::span<double>> Trainables::blocks() {
  return {enhancer.weight.flat(), enhancer.bias, proj1.weight.flat(), proj1.bias,
          bn1.gamma,              bn1.beta,      proj2.weight.flat(), proj2.bias,
          bn2.gamma,              bn2.beta,      clf.weight.flat(),   clf.bias};
}

std::vector<std::span<const double>> Trainables::blocks() const {
  return {enhancer.weight.flat(), enhancer.bias, proj1.weight.flat(), proj1.bias,
          bn1.gamma,              bn1.beta,      proj2.weight.flat(), proj2.bias,
          bn2.gamma,              bn2.beta,      clf.weight.flat(),   clf.bias};
}

Trainables Trainables::zeros_like() const {
  auto zero_linear = [](const Linear& l) {
    return Linear{Grid(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)};
  };
  auto zero_affine = [](const Affine& a) {
    return Affine{std::vector<double>(a.gamma.size(), 0.0), std::vector<double>(a.beta.size(), 0.0)};
  };
  return {zero_linear(enhancer), zero_linear(proj1), zero_affine(bn1),
          zero_linear(proj2),    zero_affine(bn2),   zero_linear(clf)};
}

std::size_t Trainables::parameter_count() const {
  std::size_t n = 0;
  for (auto b : blocks()) n += b.size();
  return n;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto make_linear = [&rng](std::size_t out, std::size_t in) {
    Linear l{Grid(out, in), std::vector<double>(out, 0.0)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : l.weight.flat()) w = dist(rng);
    return l;
  };
  auto make_affine = [](std::size_t n) {
    return Affine{std::vector<double>(n, 1.0), std::vector<double>(n, 0.0)};
  };

  ModelParams p;
  p.config = config;
  const std::size_t width = config.enhancer_width();
  if (config.enhancer == Enhancer::Linear)
    p.weights.enhancer = make_linear(width, config.input_channels);
  p.weights.proj1 = make_linear(config.hidden1, width);
  p.weights.bn1 = make_affine(config.hidden1);
  p.weights.proj2 = make_linear(config.hidden2, config.hidden1);
  p.weights.bn2 = make_affine(config.hidden2);
  p.weights.clf = make_linear(1, config.classifier_width());
  p.stats1 = RunningStats::fresh(config.hidden1, config.momentum, config.eps);
  p.stats2 = RunningStats::fresh(config.hidden2, config.momentum, config.eps);
  return p;
}

namespace {

Tensor3 apply_linear(const Tensor3& in, const Linear& layer) {
  Tensor3 out(in.videos(), in.snippets(), layer.weight.rows());
  kernels::linear_forward(in.flat(), in.channels(), layer.weight, layer.bias, out.flat());
  return out;
}

// Normalizes `hidden` into `normalized` and writes relu(gamma * n + beta) to `act`.
void normalize_block(const Tensor3& hidden, const Affine& affine, const RunningStats& running,
                     Normalization norm, Mode mode, BatchStats& batch, Tensor3& normalized,
                     Tensor3& act) {
  const std::size_t cols = hidden.channels();
  normalized = Tensor3(hidden.videos(), hidden.snippets(), cols);
  if (norm == Normalization::Identity) {
    normalized = hidden;
  } else if (mode == Mode::Train) {
    batch = batch_stats(hidden);
    kernels::normalize(hidden.flat(), cols, batch.mean, batch.var, running.eps, normalized.flat());
  } else {
    kernels::normalize(hidden.flat(), cols, running.mean, running.var, running.eps,
                       normalized.flat());
  }
  act = Tensor3(hidden.videos(), hidden.snippets(), cols);
  auto n = normalized.flat();
  auto a = act.flat();
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::size_t c = i % cols;
    const double y = affine.gamma[c] * n[i] + affine.beta[c];
    a[i] = y > 0.0 ? y : 0.0;
  }
}

// Back through relu and the affine; returns the gradient at the normalized
// activations and accumulates d_gamma / d_beta.
std::vector<double> affine_relu_backward(std::span<const double> d_act, const Tensor3& normalized,
                                         const Tensor3& act, const Affine& affine, Affine& grad) {
  const std::size_t cols = normalized.channels();
  auto n = normalized.flat();
  auto a = act.flat();
  std::vector<double> dn(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::size_t c = i % cols;
    const double dy = a[i] > 0.0 ? d_act[i] : 0.0;
    grad.gamma[c] += dy * n[i];
    grad.beta[c] += dy;
    dn[i] = dy * affine.gamma[c];
  }
  return dn;
}

std::vector<double> normalization_backward(std::span<const double> dn, const Tensor3& normalized,
                                           const BatchStats& batch, const RunningStats& running,
                                           Normalization norm) {
  if (norm == Normalization::Identity) return {dn.begin(), dn.end()};
  std::vector<double> dh(dn.size());
  kernels::batchnorm_backward(dn, normalized.flat(), normalized.channels(), batch.var, running.eps,
                              dh);
  return dh;
}

}  // namespace

ForwardCache forward(const Tensor3& x, const ModelParams& params, Mode mode) {
  const ModelConfig& cfg = params.config;
  if (x.channels() != cfg.input_channels) throw std::invalid_argument("input channel mismatch");
  if (mode == Mode::Train && x.rows() < 2)
    throw std::invalid_argument("degenerate batch statistics");
  for (double v : x.flat())
    if (!std::isfinite(v)) throw std::domain_error("non-finite feature");

  ForwardCache cache;
  cache.mode = mode;
  cache.input = x;
  if (cfg.enhancer == Enhancer::Linear) {
    cache.enhanced = apply_linear(x, params.weights.enhancer);
    if (cache.enhanced.channels() == x.channels()) {
      auto e = cache.enhanced.flat();
      auto in = x.flat();
      for (std::size_t i = 0; i < e.size(); ++i) e[i] += in[i];
    }
  } else {
    cache.enhanced = x;
  }

  cache.hidden1 = apply_linear(cache.enhanced, params.weights.proj1);
  normalize_block(cache.hidden1, params.weights.bn1, params.stats1, cfg.normalization, mode,
                  cache.batch1, cache.normalized1, cache.act1);
  cache.hidden2 = apply_linear(cache.act1, params.weights.proj2);
  normalize_block(cache.hidden2, params.weights.bn2, params.stats2, cfg.normalization, mode,
                  cache.batch2, cache.normalized2, cache.act2);

  const Tensor3& head_in =
      cfg.classifier_input == ClassifierInput::Hidden1 ? cache.act1 : cache.act2;
  const Tensor3 logits = apply_linear(head_in, params.weights.clf);
  cache.preds = Grid(x.videos(), x.snippets());
  auto z = logits.flat();
  auto p = cache.preds.flat();
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-z[i]));
  return cache;
}

void update_running_stats(ModelParams& params, const ForwardCache& cache) {
  if (cache.mode != Mode::Train) throw std::invalid_argument("running statistics need a train-mode cache");
  if (params.config.normalization == Normalization::Identity) return;
  params.stats1 = ema_update(params.stats1, cache.batch1);
  params.stats2 = ema_update(params.stats2, cache.batch2);
}

ForwardCache forward_train(const Tensor3& x, ModelParams& params) {
  ForwardCache cache = forward(x, params, Mode::Train);
  update_running_stats(params, cache);
  return cache;
}

Gradients backward(const ForwardCache& cache, const ModelParams& params, const Grid& d_preds,
                   const Tensor3* d_hidden1, const Tensor3* d_hidden2) {
  if (cache.mode != Mode::Train) throw std::invalid_argument("backward requires a train-mode cache");
  const ModelConfig& cfg = params.config;
  const Trainables& w = params.weights;
  if (d_preds.rows() != cache.preds.rows() || d_preds.cols() != cache.preds.cols())
    throw std::invalid_argument("prediction gradient shape mismatch");
  if ((d_hidden1 && d_hidden1->storage().size() != cache.hidden1.storage().size()) ||
      (d_hidden2 && d_hidden2->storage().size() != cache.hidden2.storage().size()))
    throw std::invalid_argument("hidden gradient shape mismatch");

  Gradients g = w.zeros_like();

  // sigmoid
  std::vector<double> dz(d_preds.size());
  auto p = cache.preds.flat();
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = d_preds.flat()[i] * p[i] * (1.0 - p[i]);

  const bool head_on_1 = cfg.classifier_input == ClassifierInput::Hidden1;
  const Tensor3& head_in = head_on_1 ? cache.act1 : cache.act2;
  std::vector<double> d_head(head_in.storage().size());
  kernels::linear_backward(head_in.flat(), head_in.channels(), w.clf.weight, dz, g.clf.weight,
                           g.clf.bias, d_head);

  // block 2
  std::vector<double> d_act2 =
      head_on_1 ? std::vector<double>(cache.act2.storage().size(), 0.0) : d_head;
  std::vector<double> dn2 = affine_relu_backward(d_act2, cache.normalized2, cache.act2, w.bn2, g.bn2);
  std::vector<double> dh2 =
      normalization_backward(dn2, cache.normalized2, cache.batch2, params.stats2, cfg.normalization);
  if (d_hidden2)
    for (std::size_t i = 0; i < dh2.size(); ++i) dh2[i] += d_hidden2->flat()[i];
  std::vector<double> d_act1(cache.act1.storage().size());
  kernels::linear_backward(cache.act1.flat(), cache.act1.channels(), w.proj2.weight, dh2,
                           g.proj2.weight, g.proj2.bias, d_act1);
  if (head_on_1)
    for (std::size_t i = 0; i < d_act1.size(); ++i) d_act1[i] += d_head[i];

  // block 1
  std::vector<double> dn1 = affine_relu_backward(d_act1, cache.normalized1, cache.act1, w.bn1, g.bn1);
  std::vector<double> dh1 =
      normalization_backward(dn1, cache.normalized1, cache.batch1, params.stats1, cfg.normalization);
  if (d_hidden1)
    for (std::size_t i = 0; i < dh1.size(); ++i) dh1[i] += d_hidden1->flat()[i];

  const bool has_enhancer = cfg.enhancer == Enhancer::Linear;
  std::vector<double> d_enhanced(has_enhancer ? cache.enhanced.storage().size() : 0);
  kernels::linear_backward(cache.enhanced.flat(), cache.enhanced.channels(), w.proj1.weight, dh1,
                           g.proj1.weight, g.proj1.bias, d_enhanced);
  if (has_enhancer)
    kernels::linear_backward(cache.input.flat(), cache.input.channels(), w.enhancer.weight,
                             d_enhanced, g.enhancer.weight, g.enhancer.bias, {});
  return g;
}

LayerDfm layer_dfm(const ForwardCache& cache, const ModelParams& params, DfmMetric metric) {
  return {dfm_batch(cache.hidden1, params.stats1, metric),
          dfm_batch(cache.hidden2, params.stats2, metric)};
}

ScoreGrid fuse_scores(const Grid& preds, const LayerDfm& dfm) {
  ScoreGrid out(preds.rows(), preds.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.flat()[i] = preds.flat()[i] * (dfm.layer1.flat()[i] + dfm.layer2.flat()[i]);
  return out;
}

ScoreGrid anomaly_score(const ForwardCache& cache, const ModelParams& params, DfmMetric metric) {
  if (params.config.normalization == Normalization::Identity) return cache.preds;
  return fuse_scores(cache.preds, layer_dfm(cache, params, metric));
}

}  // namespace bnwvad
