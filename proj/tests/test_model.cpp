#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"

#include "bnwvad/losses.hpp"
#include "bnwvad/model.hpp"

using namespace bnwvad;

namespace {

ModelConfig small_config(std::size_t c_in = 6, std::size_t h1 = 4, std::size_t h2 = 3) {
  ModelConfig cfg;
  cfg.input_channels = c_in;
  cfg.hidden1 = h1;
  cfg.hidden2 = h2;
  return cfg;
}

// Random, non-degenerate affine parameters so relu masks are mixed.
void perturb_affine(ModelParams& p, std::mt19937_64& rng) {
  for (Affine* a : {&p.weights.bn1, &p.weights.bn2}) {
    a->gamma = testing::uniform_vector(rng, a->gamma.size(), 0.5, 1.5);
    a->beta = testing::uniform_vector(rng, a->beta.size(), -0.3, 0.3);
  }
}

// Linear test objective: <wp, preds> + <w1, hidden1> + <w2, hidden2>.
struct Probe {
  Grid wp;
  Tensor3 w1, w2;
  double operator()(const ForwardCache& c, bool use_hidden) const {
    double s = 0.0;
    for (std::size_t i = 0; i < wp.size(); ++i) s += wp.flat()[i] * c.preds.flat()[i];
    if (use_hidden) {
      for (std::size_t i = 0; i < w1.storage().size(); ++i) s += w1.flat()[i] * c.hidden1.flat()[i];
      for (std::size_t i = 0; i < w2.storage().size(); ++i) s += w2.flat()[i] * c.hidden2.flat()[i];
    }
    return s;
  }
};

void check_gradients(ModelParams params, const Tensor3& x, std::mt19937_64& rng, bool use_hidden) {
  const ForwardCache cache = forward(x, params, Mode::Train);
  Probe probe{testing::random_grid(rng, x.videos(), x.snippets()),
              testing::random_tensor(rng, x.videos(), x.snippets(), params.config.hidden1),
              testing::random_tensor(rng, x.videos(), x.snippets(), params.config.hidden2)};
  const Gradients g = use_hidden ? backward(cache, params, probe.wp, &probe.w1, &probe.w2)
                                 : backward(cache, params, probe.wp);
  auto blocks = params.weights.blocks();
  const auto gblocks = g.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto num = testing::numeric_gradient(
        [&] { return probe(forward(x, params, Mode::Train), use_hidden); }, blocks[b], 1e-6);
    for (std::size_t i = 0; i < num.size(); ++i) {
      CAPTURE(b);
      CAPTURE(i);
      REQUIRE(testing::close(gblocks[b][i], num[i], 1e-3, 1e-6));
    }
  }
}

}  // namespace

TEST_CASE("init_params") {
  ModelConfig cfg = small_config(4, 5, 3);
  const auto a = init_params(cfg, 7), b = init_params(cfg, 7), c = init_params(cfg, 8);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (double g : a.weights.bn1.gamma) CHECK(g == 1.0);
  for (double v : a.weights.bn2.beta) CHECK(v == 0.0);
  for (double v : a.weights.proj1.bias) CHECK(v == 0.0);
  for (double v : a.weights.proj1.weight.flat()) CHECK(std::abs(v) <= 0.5);  // fan_in 4
  for (double v : a.weights.proj2.weight.flat()) CHECK(std::abs(v) <= 1.0 / std::sqrt(5.0));
  CHECK(a.stats1.mean == std::vector<double>(5, 0.0));
  CHECK(a.stats1.var == std::vector<double>(5, 1.0));
  CHECK(a.weights.enhancer.weight.size() == 0);

  cfg.hidden2 = 0;
  CHECK_THROWS(init_params(cfg, 1));
}

TEST_CASE("eval forward at the running mean gives zero activations") {
  ModelConfig cfg = small_config(3, 2, 2);
  ModelParams p = init_params(cfg, 1);
  p.weights.proj1.weight = Grid(2, 3, 0.0);
  p.weights.proj1.bias = {0.7, -0.2};
  p.stats1.mean = {0.7, -0.2};
  std::mt19937_64 rng(40);
  const auto cache = forward(testing::random_tensor(rng, 2, 3, 3), p, Mode::Eval);
  for (double v : cache.normalized1.flat()) CHECK(v == 0.0);
  for (double v : cache.act1.flat()) CHECK(v == 0.0);
}

TEST_CASE("train forward normalizes to zero mean and unit variance") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams p = init_params(small_config(), trial);
    const Tensor3 x = testing::random_tensor(rng, 3, 8, 6, 2.0);
    const auto cache = forward(x, p, Mode::Train);
    const std::pair<const Tensor3*, const BatchStats*> layers[] = {
        {&cache.normalized1, &cache.batch1}, {&cache.normalized2, &cache.batch2}};
    for (const auto& [n, batch] : layers) {
      const auto s = batch_stats(*n);
      for (std::size_t c = 0; c < n->channels(); ++c) {
        CHECK(std::abs(s.mean[c]) < 1e-5);
        // eps in the denominator keeps this a hair below one
        const double hv = batch->var[c];
        CHECK(s.var[c] == doctest::Approx(hv / (hv + 1e-5)).epsilon(1e-9));
        if (hv > 0.1) CHECK(std::abs(s.var[c] - 1.0) < 1e-4);
      }
    }
  }
  ModelParams p = init_params(small_config(), 0);
  CHECK_THROWS_WITH(forward(Tensor3(1, 1, 6, 0.5), p, Mode::Train), "degenerate batch statistics");
}

TEST_CASE("hand-set tiny network matches a layer-by-layer oracle") {
  ModelConfig cfg = small_config(3, 2, 2);
  ModelParams p = init_params(cfg, 0);
  p.weights.proj1.weight = Grid(2, 3, std::vector<double>{0.5, -1.0, 0.25, 1.0, 0.5, -0.5});
  p.weights.proj1.bias = {0.1, -0.2};
  p.weights.bn1.gamma = {1.5, 0.5};
  p.weights.bn1.beta = {0.2, -0.1};
  p.weights.proj2.weight = Grid(2, 2, std::vector<double>{1.0, -2.0, 0.5, 0.75});
  p.weights.proj2.bias = {0.0, 0.3};
  p.weights.bn2.gamma = {1.0, 2.0};
  p.weights.bn2.beta = {0.0, 0.5};
  p.weights.clf.weight = Grid(1, 2, std::vector<double>{-1.0, 0.8});
  p.weights.clf.bias = {0.05};
  p.stats1.mean = {0.2, -0.3};
  p.stats1.var = {0.5, 2.0};
  p.stats2.mean = {0.1, 0.4};
  p.stats2.var = {1.5, 0.25};

  const Tensor3 x(1, 2, 3, std::vector<double>{1.0, 2.0, -1.0, 0.5, -0.5, 3.0});
  const auto cache = forward(x, p, Mode::Eval);

  const double eps = 1e-5;
  for (std::size_t t = 0; t < 2; ++t) {
    const double* in = &x.storage()[t * 3];
    double a1[2], a2[2];
    for (int j = 0; j < 2; ++j) {
      double h = p.weights.proj1.bias[j];
      for (int k = 0; k < 3; ++k) h += p.weights.proj1.weight(j, k) * in[k];
      const double n = (h - p.stats1.mean[j]) / std::sqrt(p.stats1.var[j] + eps);
      a1[j] = std::max(0.0, p.weights.bn1.gamma[j] * n + p.weights.bn1.beta[j]);
    }
    for (int j = 0; j < 2; ++j) {
      double h = p.weights.proj2.bias[j];
      for (int k = 0; k < 2; ++k) h += p.weights.proj2.weight(j, k) * a1[k];
      const double n = (h - p.stats2.mean[j]) / std::sqrt(p.stats2.var[j] + eps);
      a2[j] = std::max(0.0, p.weights.bn2.gamma[j] * n + p.weights.bn2.beta[j]);
    }
    const double z = p.weights.clf.bias[0] + p.weights.clf.weight(0, 0) * a2[0] +
                     p.weights.clf.weight(0, 1) * a2[1];
    CHECK(cache.preds(0, t) == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-9));
  }
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  std::mt19937_64 rng(42);
  ModelParams p = init_params(small_config(), 3);
  const Tensor3 x = testing::random_tensor(rng, 2, 3, 6);
  const auto cache = forward(x, p, Mode::Train);
  const auto g = backward(cache, p, Grid(2, 3, 0.0));
  for (auto b : g.blocks())
    for (double v : b) CHECK(v == 0.0);
  CHECK_THROWS_WITH(backward(forward(x, p, Mode::Eval), p, Grid(2, 3, 0.0)),
                    "backward requires a train-mode cache");
}

TEST_CASE("backward matches finite differences across configurations") {
  std::mt19937_64 rng(43);
  SUBCASE("batch norm over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(seed);
      ModelParams p = init_params(small_config(), seed);
      perturb_affine(p, rng);
      check_gradients(p, testing::random_tensor(rng, 2, 3, 6), rng, true);
    }
  }
  SUBCASE("identity normalization") {
    ModelConfig cfg = small_config();
    cfg.normalization = Normalization::Identity;
    check_gradients(init_params(cfg, 5), testing::random_tensor(rng, 2, 3, 6), rng, true);
  }
  SUBCASE("classifier on the first block") {
    ModelConfig cfg = small_config();
    cfg.classifier_input = ClassifierInput::Hidden1;
    ModelParams p = init_params(cfg, 6);
    perturb_affine(p, rng);
    check_gradients(p, testing::random_tensor(rng, 2, 3, 6), rng, true);
  }
  SUBCASE("residual and projecting enhancer") {
    for (std::size_t width : {0u, 5u}) {
      ModelConfig cfg = small_config();
      cfg.enhancer = Enhancer::Linear;
      cfg.enhanced_channels = width;
      ModelParams p = init_params(cfg, 7);
      perturb_affine(p, rng);
      check_gradients(p, testing::random_tensor(rng, 2, 3, 6), rng, true);
    }
  }
}

TEST_CASE("prediction path alone reproduces the normal loss gradient") {
  std::mt19937_64 rng(44);
  ModelParams p = init_params(small_config(), 9);
  perturb_affine(p, rng);
  const Tensor3 x = testing::random_tensor(rng, 2, 4, 6);
  const auto cache = forward(x, p, Mode::Train);
  const auto nl = normal_loss(cache.preds);
  const Grid dp(2, 4, nl.grad);
  const Tensor3 z1(2, 4, 4), z2(2, 4, 3);
  const auto g_a = backward(cache, p, dp);
  const auto g_b = backward(cache, p, dp, &z1, &z2);
  CHECK(g_a == g_b);
  auto blocks = p.weights.blocks();
  const auto gb = g_a.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto num = testing::numeric_gradient(
        [&] { return normal_loss(forward(x, p, Mode::Train).preds).value; }, blocks[b], 1e-6);
    for (std::size_t i = 0; i < num.size(); ++i) REQUIRE(testing::close(gb[b][i], num[i], 1e-3, 1e-6));
  }
}

TEST_CASE("running statistics follow the batch statistics") {
  std::mt19937_64 rng(45);
  ModelParams p = init_params(small_config(), 1);
  const Tensor3 x = testing::random_tensor(rng, 2, 5, 6);
  const ModelParams before = p;
  const auto cache = forward_train(x, p);
  CHECK(p.stats1 == ema_update(before.stats1, cache.batch1));
  CHECK(p.stats2 == ema_update(before.stats2, cache.batch2));
  CHECK(p.weights == before.weights);
  forward(x, p, Mode::Eval);
  CHECK(p.stats1 == ema_update(before.stats1, cache.batch1));
}

TEST_CASE("anomaly_score") {
  SUBCASE("fusion arithmetic") {
    LayerDfm d{Grid(1, 2, std::vector<double>{1.2, 5.0}), Grid(1, 2, std::vector<double>{0.8, 3.0})};
    const auto s = fuse_scores(Grid(1, 2, std::vector<double>{0.5, 0.0}), d);
    CHECK(s(0, 0) == doctest::Approx(1.0));
    CHECK(s(0, 1) == 0.0);
  }
  SUBCASE("zero divergence gives zero score") {
    ModelParams p = init_params(small_config(3, 2, 2), 2);
    p.weights.proj1.weight = Grid(2, 3, 0.0);
    p.weights.proj2.weight = Grid(2, 2, 0.0);
    p.weights.proj1.bias = {0.3, 0.4};
    p.weights.proj2.bias = {-0.1, 0.2};
    p.stats1.mean = {0.3, 0.4};
    p.stats2.mean = {-0.1, 0.2};
    std::mt19937_64 rng(46);
    const auto cache = forward(testing::random_tensor(rng, 2, 3, 3), p, Mode::Eval);
    const ScoreGrid s = anomaly_score(cache, p);
    for (double v : s.flat()) CHECK(v == 0.0);
  }
  SUBCASE("non-negative and finite") {
    std::mt19937_64 rng(47);
    for (int i = 0; i < 20; ++i) {
      const ModelParams p = init_params(small_config(), i);
      const auto cache = forward(testing::random_tensor(rng, 3, 4, 6, 5.0), p, Mode::Eval);
      const ScoreGrid s = anomaly_score(cache, p);
      for (double v : s.flat()) CHECK((std::isfinite(v) && v >= 0.0));
    }
  }
  SUBCASE("identity model scores by prediction") {
    ModelConfig cfg = small_config();
    cfg.normalization = Normalization::Identity;
    const ModelParams p = init_params(cfg, 3);
    std::mt19937_64 rng(48);
    const auto cache = forward(testing::random_tensor(rng, 2, 3, 6), p, Mode::Eval);
    CHECK(anomaly_score(cache, p) == cache.preds);
  }
}

TEST_CASE("eval forward is deterministic") {
  std::mt19937_64 rng(49);
  const ModelParams p = init_params(small_config(), 4);
  const Tensor3 x = testing::random_tensor(rng, 2, 3, 6);
  CHECK(forward(x, p, Mode::Eval).preds == forward(x, p, Mode::Eval).preds);
}
