#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "bnwvad/data.hpp"

namespace bnwvad {

namespace {

double sample_beta(double a, double b, std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng), y = gb(rng);
  const double r = x / (x + y);
  // Beta samples can round to the closed interval endpoints.
  return std::clamp(r, 1e-12, 1.0 - 1e-12);
}

std::vector<double> random_direction(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> d(n);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : d) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : d) x /= norm;
  return d;
}

std::vector<double> signed_shift(const std::vector<double>& sigma, double magnitude,
                                 std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<double> s(sigma.size());
  for (std::size_t c = 0; c < s.size(); ++c) s[c] = (coin(rng) ? 1.0 : -1.0) * magnitude * sigma[c];
  return s;
}

// Abnormal mean for Rotate mode: direction of (mean + shift), norm of mean.
std::vector<double> rotated_mean(const std::vector<double>& mean, const std::vector<double>& shift) {
  double norm_mean = 0.0, norm_target = 0.0;
  std::vector<double> target(mean.size());
  for (std::size_t c = 0; c < mean.size(); ++c) {
    target[c] = mean[c] + shift[c];
    norm_mean += mean[c] * mean[c];
    norm_target += target[c] * target[c];
  }
  norm_mean = std::sqrt(norm_mean);
  norm_target = std::sqrt(norm_target);
  if (norm_target == 0.0) throw std::invalid_argument("rotate mode: degenerate shift");
  for (double& x : target) x *= norm_mean / norm_target;
  return target;
}

// Marks `count` of `length` snippets abnormal in `segments` runs separated by
// random gaps.
std::vector<bool> place_segments(std::size_t length, std::size_t count, std::size_t segments,
                                 std::mt19937_64& rng) {
  segments = std::clamp<std::size_t>(segments, 1, count);
  std::vector<std::size_t> lengths(segments, count / segments);
  for (std::size_t i = 0; i < count % segments; ++i) ++lengths[i];
  // Distribute the free snippets over segments + 1 gaps (stars and bars).
  const std::size_t free = length - count;
  std::uniform_int_distribution<std::size_t> pick(0, free);
  std::vector<std::size_t> cuts(segments);
  for (auto& c : cuts) c = pick(rng);
  std::sort(cuts.begin(), cuts.end());
  std::vector<bool> labels(length, false);
  std::size_t pos = 0, prev_cut = 0;
  for (std::size_t s = 0; s < segments; ++s) {
    pos += cuts[s] - prev_cut;
    prev_cut = cuts[s];
    for (std::size_t i = 0; i < lengths[s]; ++i) labels[pos++] = true;
  }
  return labels;
}

}  // namespace

void SynthConfig::validate() const {
  if (snippets == 0 || channels == 0 || crops == 0)
    throw std::invalid_argument("synthetic config: snippets, channels and crops must be positive");
  if (!(ratio_a > 0.0 && ratio_b > 0.0 && std::isfinite(ratio_a) && std::isfinite(ratio_b)))
    throw std::invalid_argument("invalid Beta parameters");
  if (!normal_mean.empty() && normal_mean.size() != channels)
    throw std::invalid_argument("synthetic config: normal_mean has wrong length");
  if (!normal_var.empty() && normal_var.size() != channels)
    throw std::invalid_argument("synthetic config: normal_var has wrong length");
  for (double v : normal_var)
    if (!(v > 0.0)) throw std::invalid_argument("synthetic config: variances must be positive");
  if (!anomaly_shift.empty() && anomaly_shift.size() != channels)
    throw std::invalid_argument("synthetic config: anomaly_shift has wrong length");
  if (segments == 0) throw std::invalid_argument("synthetic config: segments must be positive");
  if (video_offset_std < 0.0) throw std::invalid_argument("synthetic config: negative offset std");
  if (!std::isfinite(context_shift)) throw std::invalid_argument("synthetic config: non-finite context shift");
  for (const auto& c : classes) {
    if (c.name.empty()) throw std::invalid_argument("synthetic class needs a name");
    if (!(c.weight > 0.0)) throw std::invalid_argument("synthetic class weight must be positive");
    if (c.shift_scale == 0.0) throw std::invalid_argument("abnormal class shift must be nonzero");
    if (!(c.ratio_lo > 0.0 && c.ratio_lo <= c.ratio_hi && c.ratio_hi < 1.0))
      throw std::invalid_argument("synthetic class ratio range must satisfy 0 < lo <= hi < 1");
  }
}

Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t stream) {
  cfg.validate();
  const std::size_t C = cfg.channels, T = cfg.snippets;

  // Structure: depends on the seed only.
  std::seed_seq structure_seed{static_cast<std::uint32_t>(cfg.seed),
                               static_cast<std::uint32_t>(cfg.seed >> 32), 0x5eedu};
  std::mt19937_64 srng(structure_seed);

  std::vector<double> var = cfg.normal_var;
  if (var.empty()) {
    var.assign(C, 1.0);
    if (cfg.anisotropy > 0.0) {
      for (std::size_t c = 0; c < C; ++c) {
        const double u = C == 1 ? 0.0 : 2.0 * static_cast<double>(c) / static_cast<double>(C - 1) - 1.0;
        var[c] = std::exp(cfg.anisotropy * u);
      }
    }
  }
  std::vector<double> sigma(C);
  for (std::size_t c = 0; c < C; ++c) sigma[c] = std::sqrt(var[c]);

  std::vector<double> mean = cfg.normal_mean;
  if (mean.empty()) {
    mean.assign(C, 0.0);
    if (cfg.mean_norm > 0.0) {
      const auto d = random_direction(C, srng);
      for (std::size_t c = 0; c < C; ++c) mean[c] = cfg.mean_norm * d[c];
    }
  }
  if (cfg.mode == AnomalyMode::Rotate &&
      std::all_of(mean.begin(), mean.end(), [](double m) { return m == 0.0; }))
    throw std::invalid_argument("rotate mode needs a nonzero normal mean");

  const std::vector<double> base_shift =
      cfg.anomaly_shift.empty() ? signed_shift(sigma, cfg.shift_magnitude, srng) : cfg.anomaly_shift;

  struct ClassModel {
    std::string name;
    std::vector<double> abnormal_mean;
    double ratio_lo, ratio_hi;
  };
  auto abnormal_mean_for = [&](const std::vector<double>& shift) {
    if (cfg.mode == AnomalyMode::Rotate) return rotated_mean(mean, shift);
    std::vector<double> m(C);
    for (std::size_t c = 0; c < C; ++c) m[c] = mean[c] + shift[c];
    return m;
  };
  std::vector<ClassModel> classes;
  std::vector<double> class_weights;
  for (const auto& sc : cfg.classes) {
    auto shift = signed_shift(sigma, cfg.shift_magnitude * sc.shift_scale, srng);
    classes.push_back({sc.name, abnormal_mean_for(shift), sc.ratio_lo, sc.ratio_hi});
    class_weights.push_back(sc.weight);
  }
  const std::vector<double> default_abnormal_mean = abnormal_mean_for(base_shift);
  const std::vector<double> context = cfg.context_shift != 0.0
                                          ? signed_shift(sigma, cfg.context_shift, srng)
                                          : std::vector<double>(C, 0.0);

  // Samples: depend on the seed and the stream.
  std::seed_seq sample_seed{static_cast<std::uint32_t>(cfg.seed),
                            static_cast<std::uint32_t>(cfg.seed >> 32),
                            static_cast<std::uint32_t>(stream),
                            static_cast<std::uint32_t>(stream >> 32), 0xda7au};
  std::mt19937_64 rng(sample_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<std::size_t> class_pick(class_weights.begin(), class_weights.end());

  Dataset ds;
  const std::size_t total = cfg.n_normal + cfg.n_abnormal;
  ds.videos.reserve(total);
  for (std::size_t v = 0; v < total; ++v) {
    const bool abnormal = v >= cfg.n_normal;
    Video video;
    VideoRecord& r = video.record;
    char id[48];
    std::snprintf(id, sizeof(id), "%s_%04zu", abnormal ? "abnormal" : "normal",
                  abnormal ? v - cfg.n_normal : v);
    r.id = id;
    r.label = abnormal ? VideoLabel::Abnormal : VideoLabel::Normal;
    r.crops = cfg.crops;
    r.snippets = T;
    r.channels = C;

    std::vector<bool> labels(T, false);
    const std::vector<double>* anomaly_mean = &default_abnormal_mean;
    if (abnormal) {
      double ratio;
      if (!classes.empty()) {
        const ClassModel& cm = classes[class_pick(rng)];
        r.class_name = cm.name;
        anomaly_mean = &cm.abnormal_mean;
        ratio = std::uniform_real_distribution<double>(cm.ratio_lo, cm.ratio_hi)(rng);
      } else {
        ratio = sample_beta(cfg.ratio_a, cfg.ratio_b, rng);
      }
      const auto count = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::lround(ratio * static_cast<double>(T))), 1, T);
      labels = place_segments(T, count, cfg.segments, rng);
    }
    r.snippet_labels = labels;

    std::vector<double> offset(C, 0.0);
    if (cfg.video_offset_std > 0.0)
      for (std::size_t c = 0; c < C; ++c) offset[c] = cfg.video_offset_std * sigma[c] * normal(rng);
    if (abnormal)
      for (std::size_t c = 0; c < C; ++c) offset[c] += context[c];

    video.features.resize(cfg.crops * T * C);
    for (std::size_t k = 0; k < cfg.crops; ++k) {
      for (std::size_t t = 0; t < T; ++t) {
        const std::vector<double>& mu = labels[t] ? *anomaly_mean : mean;
        for (std::size_t c = 0; c < C; ++c) {
          const double x = mu[c] + offset[c] + sigma[c] * normal(rng);
          video.features[(k * T + t) * C + c] = static_cast<float>(x);
        }
      }
    }
    ds.videos.push_back(std::move(video));
  }
  return ds;
}

}  // namespace bnwvad
