// One PASS/FAIL line per acceptance criterion; exits 1 when any fails.
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

#include "bnwvad/checkpoint.hpp"
#include "bnwvad/config.hpp"
#include "bnwvad/losses.hpp"
#include "bnwvad/model.hpp"
#include "bnwvad/selection.hpp"
#include "bnwvad/stats_core.hpp"
#include "bnwvad/trainer.hpp"

using namespace bnwvad;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

// ---------------------------------------------------------------- oracles

long double dfm_oracle(const std::vector<double>& x, const std::vector<double>& mu,
                       const std::vector<double>& var, double eps, DfmMetric m) {
  long double s = 0, dot = 0, nx = 0, nm = 0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    const long double d = static_cast<long double>(x[c]) - mu[c];
    switch (m) {
      case DfmMetric::Mahalanobis: s += d * d / (static_cast<long double>(var[c]) + eps); break;
      case DfmMetric::Euclidean: s += d * d; break;
      case DfmMetric::FeatureMagnitude: s += static_cast<long double>(x[c]) * x[c]; break;
      case DfmMetric::Cosine:
        dot += static_cast<long double>(x[c]) * mu[c];
        nx += static_cast<long double>(x[c]) * x[c];
        nm += static_cast<long double>(mu[c]) * mu[c];
        break;
    }
  }
  if (m == DfmMetric::Cosine) return 1.0L - dot / (std::sqrt(nx) * std::sqrt(nm));
  return std::sqrt(s);
}

Outcome dfm_oracle_check() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::size_t> width(1, 64);
  std::uniform_real_distribution<double> scale(0.01, 10.0);
  int bad = 0, total = 0;
  for (DfmMetric m : {DfmMetric::Mahalanobis, DfmMetric::Euclidean, DfmMetric::Cosine,
                      DfmMetric::FeatureMagnitude}) {
    for (int i = 0; i < 1000; ++i) {
      const std::size_t C = width(rng);
      const double s = scale(rng);
      RunningStats rs = RunningStats::fresh(C);
      rs.mean = testing::uniform_vector(rng, C, -s, s);
      rs.var = testing::uniform_vector(rng, C, 1e-3, s * s);
      // a few rows per triple to exercise the batched path as well
      Tensor3 x(1, 3, C);
      for (double& v : x.flat()) v = std::uniform_real_distribution<double>(-3 * s, 3 * s)(rng);
      const ScoreGrid batched = dfm_batch(x, rs, m);
      for (std::size_t t = 0; t < 3; ++t) {
        const auto row = x.row(t);
        const std::vector<double> xv(row.begin(), row.end());
        const double want = static_cast<double>(dfm_oracle(xv, rs.mean, rs.var, rs.eps, m));
        const double single = dfm(std::span<const double>(xv), rs, m);
        bad += !testing::close(single, want, 1e-6, 1e-12);
        bad += !testing::close(batched(0, t), want, 1e-6, 1e-12);
        total += 2;
      }
    }
  }
  return {bad == 0, std::to_string(total - bad) + "/" + std::to_string(total) + " values agree"};
}

// Cells ordered by descending score, ties to the lower flat index.
std::vector<std::size_t> ranked(const std::vector<double>& s, const std::vector<std::size_t>& cells) {
  std::vector<std::size_t> out = cells;
  std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
    return s[a] != s[b] ? s[a] > s[b] : a < b;
  });
  return out;
}

std::size_t count_for(double ratio, std::size_t n) {
  if (ratio == 0.0) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratio * n - 1e-9)));
}

Outcome selection_oracle_check() {
  std::mt19937_64 rng(1002);
  std::uniform_int_distribution<std::size_t> vids(1, 8), snips(1, 32);
  std::uniform_real_distribution<double> ratio(0.0, 1.0);
  int bad = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t B = vids(rng), T = snips(rng);
    ScoreGrid g = testing::random_grid(rng, B, T);
    if (trial % 3 == 0)  // coarse values force ties
      for (double& v : g.flat()) v = std::round(v * 4.0) / 4.0;
    const std::vector<double> s(g.flat().begin(), g.flat().end());
    const double rs = trial % 7 == 0 ? 0.0 : ratio(rng), rb = trial % 11 == 0 ? 0.0 : ratio(rng);

    std::vector<bool> sls(B * T, false), bls(B * T, false);
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<std::size_t> row(T);
      std::iota(row.begin(), row.end(), b * T);
      const auto order = ranked(s, row);
      for (std::size_t i = 0; i < count_for(rs, T); ++i) sls[order[i]] = true;
    }
    std::vector<std::size_t> all(B * T);
    std::iota(all.begin(), all.end(), 0);
    const auto order = ranked(s, all);
    for (std::size_t i = 0; i < count_for(rb, B * T); ++i) bls[order[i]] = true;

    const SelectionMask m_sls = select_sls(g, rs), m_bls = select_bls(g, rb);
    for (std::size_t i = 0; i < B * T; ++i) {
      bad += m_sls.selected(i / T, i % T) != sls[i];
      bad += m_bls.selected(i / T, i % T) != bls[i];
    }
    if (rs > 0.0 || rb > 0.0) {
      const SelectionMask m_sbs = select_sbs(g, {rs, rb});
      for (std::size_t i = 0; i < B * T; ++i)
        bad += m_sbs.selected(i / T, i % T) != (sls[i] || bls[i]);
    }

    // matched normal selection
    const std::size_t total = std::uniform_int_distribution<std::size_t>(1, B * T)(rng);
    std::vector<bool> want(B * T, false);
    std::vector<std::size_t> leftovers;
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<std::size_t> row(T);
      std::iota(row.begin(), row.end(), b * T);
      const auto ord = ranked(s, row);
      for (std::size_t i = 0; i < T; ++i) {
        if (i < total / B)
          want[ord[i]] = true;
        else
          leftovers.push_back(ord[i]);
      }
    }
    const auto rest = ranked(s, leftovers);
    for (std::size_t i = 0; i < total % B; ++i) want[rest[i]] = true;
    const SelectionMask nm = select_normal_matched(g, total);
    for (std::size_t i = 0; i < B * T; ++i) bad += nm.selected(i / T, i % T) != want[i];
    bad += nm.count() != total;
  }
  return {bad == 0, bad == 0 ? "500 grids match" : std::to_string(bad) + " mismatching cells"};
}

// ---------------------------------------------------------------- gradients

constexpr double kH = 1e-4;

int compare(std::span<const double> analytic, const std::vector<double>& numeric) {
  int bad = 0;
  for (std::size_t i = 0; i < numeric.size(); ++i) bad += !testing::close(analytic[i], numeric[i], 1e-3, 1e-6);
  return bad;
}

Outcome gradient_check() {
  std::mt19937_64 rng(1003);
  int instances = 0, failed = 0;
  auto tally = [&](int bad) {
    ++instances;
    failed += bad != 0;
  };

  const DfmMetric metrics[] = {DfmMetric::Mahalanobis, DfmMetric::Euclidean, DfmMetric::Cosine};
  for (int i = 0; i < 45; ++i) {
    const std::size_t K = 1 + rng() % 6, C = 2 + rng() % 8;
    RunningStats rs = RunningStats::fresh(C);
    rs.mean = testing::uniform_vector(rng, C, -1.0, 1.0);
    rs.var = testing::uniform_vector(rng, C, 0.2, 2.0);
    MppConfig cfg;
    cfg.metric = metrics[i % 3];
    cfg.margin = i % 2 ? 50.0 : 1.0;  // large margin keeps every hinge open
    std::vector<double> xn = testing::uniform_vector(rng, K * C, -2.0, 2.0);
    std::vector<double> xa = testing::uniform_vector(rng, K * C, -4.0, 4.0);
    const MppResult r = mpp_loss(xn, xa, C, rs, cfg);
    auto f = [&] { return mpp_loss(xn, xa, C, rs, cfg).value; };
    tally(compare(r.grad_normal, testing::numeric_gradient(f, xn, kH)) +
          compare(r.grad_abnormal, testing::numeric_gradient(f, xa, kH)));
  }
  for (int i = 0; i < 20; ++i) {
    Grid p = testing::random_grid(rng, 1 + rng() % 4, 1 + rng() % 10);
    const LossResult r = normal_loss(p);
    tally(compare(r.grad, testing::numeric_gradient([&] { return normal_loss(p).value; }, p.flat(), kH)));
  }
  for (int i = 0; i < 20; ++i) {
    std::vector<double> p = testing::uniform_vector(rng, 1 + rng() % 12, 0.05, 0.95);
    const LossResult r = abnormal_loss(p);
    tally(compare(r.grad, testing::numeric_gradient([&] { return abnormal_loss(p).value; }, p, kH)));
  }
  // whole training objective, through selection-frozen MPP terms and the model
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    SynthConfig sc;
    sc.n_normal = sc.n_abnormal = 6;
    sc.snippets = 4;
    sc.channels = 6;
    sc.seed = seed;
    const Dataset ds = generate_synthetic(sc);
    TrainConfig cfg = TrainConfig::desk();
    cfg.b_nor = cfg.b_abn = 2;
    cfg.hidden1 = 4;
    cfg.hidden2 = 3;
    cfg.ratios = {0.5, 0.5};
    cfg.seed = seed;
    cfg.use_abn_loss = seed % 2 == 1;
    if (seed % 5 == 4) cfg.enhancer = Enhancer::Linear;
    TrainState st = init_state(cfg, sc.channels);
    BatchSampler sampler(ds, 2, 2, seed);
    for (int k = 0; k < 3; ++k) train_step(st, sampler.next(), cfg);
    const Batch batch = sampler.next();
    const Tensor3 x = concat_batch(batch);
    ModelParams p = st.model;
    StepContext ctx;
    TrainState probe = st;
    train_step(probe, batch, cfg, &ctx);
    const Gradients g = step_gradients(p, x, ctx, cfg);
    const auto gb = g.blocks();
    auto pb = p.weights.blocks();
    int bad = 0;
    for (std::size_t k = 0; k < pb.size(); ++k)
      bad += compare(gb[k], testing::numeric_gradient([&] { return step_objective(p, x, ctx, cfg); }, pb[k], kH));
    tally(bad);
  }
  return {failed == 0, std::to_string(instances - failed) + "/" + std::to_string(instances) + " instances agree"};
}

// ---------------------------------------------------------------- batchnorm

Outcome batchnorm_check() {
  std::mt19937_64 rng(1004);
  // The normalizer divides by sqrt(v + eps), so the normalized variance is
  // v / (v + eps): exact on every channel, within 1e-4 of 1 once v >= 0.1.
  double worst_mean = 0.0, worst_var = 0.0, worst_identity = 0.0;
  std::size_t small = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelConfig mc;
    mc.input_channels = 16;
    const ModelParams p = init_params(mc, seed);
    const Tensor3 x = testing::random_tensor(rng, 4, 25, 16, 2.0);
    const ForwardCache c = forward(x, p, Mode::Train);
    for (const auto& [z, h] : {std::pair{&c.normalized1, &c.hidden1}, std::pair{&c.normalized2, &c.hidden2}}) {
      const BatchStats bs = batch_stats(*z), hs = batch_stats(*h);
      for (double m : bs.mean) worst_mean = std::max(worst_mean, std::abs(m));
      for (std::size_t ch = 0; ch < bs.var.size(); ++ch) {
        const double v = hs.var[ch];
        worst_identity = std::max(worst_identity, std::abs(bs.var[ch] - v / (v + 1e-5)));
        if (v >= 0.1)
          worst_var = std::max(worst_var, std::abs(bs.var[ch] - 1.0));
        else
          ++small;
      }
    }
  }
  double worst_ema = 0.0;
  for (double alpha : {0.01, 0.1, 0.5, 1.0}) {
    RunningStats rs = RunningStats::fresh(5, alpha);
    rs.mean = testing::uniform_vector(rng, 5);
    rs.var = testing::uniform_vector(rng, 5, 0.5, 2.0);
    BatchStats b{testing::uniform_vector(rng, 5), testing::uniform_vector(rng, 5, 0.5, 2.0)};
    RunningStats run = rs;
    for (int k = 0; k < 10; ++k) run = ema_update(run, b);
    const double keep = std::pow(1.0 - alpha, 10);
    for (std::size_t c = 0; c < 5; ++c) {
      worst_ema = std::max(worst_ema, std::abs(run.mean[c] - (keep * rs.mean[c] + (1 - keep) * b.mean[c])));
      worst_ema = std::max(worst_ema, std::abs(run.var[c] - (keep * rs.var[c] + (1 - keep) * b.var[c])));
    }
  }
  const bool pass = worst_mean < 1e-5 && worst_var <= 1e-4 && worst_identity <= 1e-12 && worst_ema <= 1e-10;
  std::ostringstream d;
  d << "max |mean| " << worst_mean << ", max |var-1| " << worst_var << " (" << small
    << " channels below variance 0.1 held to v/(v+eps) instead, max error " << worst_identity
    << "), max ema error " << worst_ema;
  return {pass, d.str()};
}

// ---------------------------------------------------------------- experiments

struct Run {
  double auc = 0.0, ap = 0.0;
  std::map<std::string, double> classwise;
  double seconds = 0.0;
};

Run experiment(json synth, const json& overrides, std::uint64_t seed) {
  synth["seed"] = seed;
  const SynthConfig sc = synth_config_from_json(synth);
  TrainConfig cfg = TrainConfig::desk();
  cfg.seed = seed;
  apply_train_overrides(cfg, overrides);
  const auto t0 = Clock::now();
  const FitResult fitted = fit(cfg, generate_synthetic(sc, 0));
  const MetricReport m = evaluate(fitted.state.model, generate_synthetic(sc, 1), cfg.mpp.metric);
  return {m.auc, m.ap, m.classwise_ap, seconds_since(t0)};
}

constexpr std::uint64_t kSeeds = 5;

std::vector<Run> sweep(const json& synth, const json& overrides) {
  std::vector<Run> out;
  for (std::uint64_t s = 0; s < kSeeds; ++s) out.push_back(experiment(synth, overrides, s));
  return out;
}

std::string series(const std::vector<Run>& runs, double Run::*field) {
  std::string s = "[";
  for (std::size_t i = 0; i < runs.size(); ++i) s += fmt(i ? " %.3f" : "%.3f", runs[i].*field);
  return s + "]";
}

const json kDefaultData = {{"snippets", 50}};

std::vector<Run> baseline;  // default data, default config; shared by two criteria

Outcome end_to_end_check() {
  baseline = sweep(kDefaultData, json::object());
  bool pass = true;
  double slowest = 0.0;
  for (const Run& r : baseline) {
    pass = pass && r.auc >= 0.95 && r.ap >= 0.90 && r.seconds < 120.0;
    slowest = std::max(slowest, r.seconds);
  }
  return {pass, "auc " + series(baseline, &Run::auc) + " ap " + series(baseline, &Run::ap) +
                    fmt(", slowest run %.1fs", slowest)};
}

Outcome identity_check() {
  const auto ident = sweep(kDefaultData, {{"normalization", "identity"}});
  int wins = 0;
  for (std::size_t i = 0; i < kSeeds; ++i) wins += baseline[i].auc - ident[i].auc >= 0.05;
  return {wins >= 4, "identity auc " + series(ident, &Run::auc) + ", " + std::to_string(wins) +
                         "/5 seeds lose >= 5 points"};
}

Outcome criterion_check() {
  const json data = {{"snippets", 50}, {"mode", "rotate"}, {"anisotropy", 1.5}, {"mean_norm", 4.0},
                     {"shift_magnitude", 4.0}};
  const auto dfm_runs = sweep(data, json::object());
  const auto fm_runs = sweep(data, {{"selection_metric", "fm"}, {"selection_layer", "enhanced"}});
  int wins = 0;
  for (std::size_t i = 0; i < kSeeds; ++i) wins += dfm_runs[i].ap - fm_runs[i].ap >= 0.03;
  return {wins >= 4, "dfm ap " + series(dfm_runs, &Run::ap) + " fm ap " + series(fm_runs, &Run::ap) + ", " +
                         std::to_string(wins) + "/5 seeds ahead by >= 3 points"};
}

Outcome sbs_check() {
  const json mixed = {{"snippets", 50}, {"ratio_a", 1.0}, {"ratio_b", 1.0}, {"shift_magnitude", 0.75}};
  const auto sbs = sweep(mixed, json::object());
  const auto sls = sweep(mixed, {{"use_bls", false}});
  const auto bls = sweep(mixed, {{"use_sls", false}});
  int wins = 0;
  for (std::size_t i = 0; i < kSeeds; ++i) wins += sbs[i].ap >= sls[i].ap && sbs[i].ap >= bls[i].ap;

  const json classes = {{"snippets", 50},
                        {"shift_magnitude", 1.0},
                        {"classes",
                         {{{"name", "common"}, {"weight", 0.75}, {"shift_scale", 2.5}, {"ratio_lo", 0.3}, {"ratio_hi", 0.9}},
                          {{"name", "rare"}, {"weight", 0.25}, {"shift_scale", 1.2}, {"ratio_lo", 0.04}, {"ratio_hi", 0.12}}}}};
  const auto c_sls = sweep(classes, {{"use_bls", false}});
  const auto c_bls = sweep(classes, {{"use_sls", false}});
  int rare = 0;
  std::string rare_detail;
  for (std::size_t i = 0; i < kSeeds; ++i) {
    const double a = c_bls[i].classwise.at("rare"), b = c_sls[i].classwise.at("rare");
    rare += a < b;
    rare_detail += fmt(i ? " %.3f/%.3f" : "%.3f/%.3f", a, b);
  }
  return {wins >= 4 && rare >= 4,
          "sbs/sls/bls ap " + series(sbs, &Run::ap) + series(sls, &Run::ap) + series(bls, &Run::ap) + ", sbs best on " +
              std::to_string(wins) + "/5; rare-class bls/sls ap [" + rare_detail + "], bls lower on " +
              std::to_string(rare) + "/5"};
}

Outcome momentum_check() {
  const json data = {{"snippets", 50}, {"shift_magnitude", 1.0}, {"video_offset_std", 1.0}};
  const auto a001 = sweep(data, {{"momentum", 0.01}});
  const auto a01 = sweep(data, {{"momentum", 0.1}});
  const auto a1 = sweep(data, {{"momentum", 1.0}});
  int wins = 0;
  for (std::size_t i = 0; i < kSeeds; ++i) wins += a1[i].auc < a001[i].auc && a1[i].auc < a01[i].auc;
  return {wins >= 4, "auc 0.01 " + series(a001, &Run::auc) + " 0.1 " + series(a01, &Run::auc) + " 1 " +
                         series(a1, &Run::auc) + ", alpha=1 worst on " + std::to_string(wins) + "/5"};
}

Outcome abnormal_loss_check() {
  const json data = {{"snippets", 50}, {"shift_magnitude", 1.0}, {"context_shift", 1.0}};
  const auto plain = sweep(data, json::object());
  const auto with = sweep(data, {{"use_abn_loss", true}});
  int wins = 0;
  for (std::size_t i = 0; i < kSeeds; ++i) wins += with[i].ap < plain[i].ap;
  return {wins >= 4, "ap without " + series(plain, &Run::ap) + " with " + series(with, &Run::ap) +
                         ", lower on " + std::to_string(wins) + "/5"};
}

Outcome determinism_check() {
  SynthConfig sc;
  sc.n_normal = sc.n_abnormal = 16;
  sc.snippets = 20;
  sc.seed = 7;
  const Dataset ds = generate_synthetic(sc);
  TrainConfig cfg = TrainConfig::desk();
  cfg.iterations = 100;
  cfg.seed = 7;
  const FitResult a = fit(cfg, ds), b = fit(cfg, ds);
  const bool same_ckpt = encode_checkpoint({a.state.model, a.state.optimizer}) ==
                         encode_checkpoint({b.state.model, b.state.optimizer});
  const bool same_csv = curve_csv(a.curve) == curve_csv(b.curve);
  return {same_ckpt && same_csv, std::string("checkpoints ") + (same_ckpt ? "identical" : "differ") +
                                     ", curves " + (same_csv ? "identical" : "differ")};
}

}  // namespace

int main() {
  omp_set_num_threads(1);
  struct Criterion {
    const char* name;
    double budget;  // seconds; 0 means no limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"dfm matches elementwise oracle", 5.0, dfm_oracle_check},
      {"selection matches sort oracle", 5.0, selection_oracle_check},
      {"gradients match finite differences", 60.0, gradient_check},
      {"batchnorm statistics and ema recursion", 0.0, batchnorm_check},
      {"end-to-end learning on separable data", 0.0, end_to_end_check},
      {"identity normalization loses to batchnorm", 0.0, identity_check},
      {"dfm selection beats fm selection", 0.0, criterion_check},
      {"sbs selection beats sls and bls", 0.0, sbs_check},
      {"momentum 1 is worst", 0.0, momentum_check},
      {"abnormal loss lowers ap", 0.0, abnormal_loss_check},
      {"fit is deterministic", 0.0, determinism_check},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (c.budget > 0.0 && secs >= c.budget) {
      o.pass = false;
      o.detail += fmt(" (over the %.0fs budget)", c.budget);
    }
    failures += !o.pass;
    std::printf("%s  %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
