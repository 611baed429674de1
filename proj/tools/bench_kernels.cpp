// Times each parallel kernel against its serial reference on a paper-sized
// batch (128 videos x 200 snippets) and checks the outputs agree bit for bit.
//
//   bench_kernels [--reps N] [--threads N]
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bnwvad/kernels.hpp"

using namespace bnwvad;

namespace {

double best_of(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

std::vector<double> noise(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

struct Row {
  std::string name;
  double parallel, serial;
  bool equal;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmark: parallel vs serial reference"};
  int reps = 5, threads = 0;
  app.add_option("--reps", reps, "repetitions per kernel, best time reported")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "OpenMP threads (default: runtime choice)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  const std::size_t rows = 128 * 200, in = 1024, out = 32;
  std::mt19937_64 rng(5);
  const std::vector<double> x = noise(rng, rows * in);
  const std::vector<float> xf(x.begin(), x.end());
  Grid w(out, in, noise(rng, out * in, -0.03, 0.03));
  const std::vector<double> bias = noise(rng, out);
  const std::vector<double> dout = noise(rng, rows * out);
  const std::vector<double> mean = noise(rng, in), var = noise(rng, in, 0.5, 2.0);

  std::vector<Row> table;
  auto bench = [&](const std::string& name, std::size_t n, const std::function<void(std::span<double>)>& par,
                   const std::function<void(std::span<double>)>& ser) {
    std::vector<double> a(n), b(n);
    const double tp = best_of(reps, [&] { par(a); });
    const double ts = best_of(reps, [&] { ser(b); });
    table.push_back({name, tp, ts, a == b});
  };

  bench("linear_forward", rows * out,
        [&](std::span<double> o) { kernels::linear_forward(x, in, w, bias, o); },
        [&](std::span<double> o) { kernels::reference::linear_forward(x, in, w, bias, o); });
  bench("linear_backward", out * in + out + rows * in,
        [&](std::span<double> o) {
          Grid dw(out, in);
          kernels::linear_backward(x, in, w, dout, dw, o.subspan(0, out), o.subspan(out, rows * in));
          std::copy(dw.flat().begin(), dw.flat().end(), o.begin() + static_cast<std::ptrdiff_t>(out + rows * in));
        },
        [&](std::span<double> o) {
          Grid dw(out, in);
          kernels::reference::linear_backward(x, in, w, dout, dw, o.subspan(0, out), o.subspan(out, rows * in));
          std::copy(dw.flat().begin(), dw.flat().end(), o.begin() + static_cast<std::ptrdiff_t>(out + rows * in));
        });
  bench("channel_moments(float)", 2 * in,
        [&](std::span<double> o) { kernels::channel_moments(std::span<const float>(xf), in, o.subspan(0, in), o.subspan(in)); },
        [&](std::span<double> o) {
          kernels::reference::channel_moments(std::span<const float>(xf), in, o.subspan(0, in), o.subspan(in));
        });
  for (DfmMetric m : {DfmMetric::Mahalanobis, DfmMetric::Cosine}) {
    bench("dfm_rows(" + to_string(m) + ")", rows,
          [&](std::span<double> o) { kernels::dfm_rows(std::span<const double>(x), in, mean, var, 1e-5, m, o); },
          [&](std::span<double> o) {
            kernels::reference::dfm_rows(std::span<const double>(x), in, mean, var, 1e-5, m, o);
          });
  }
  bench("normalize", rows * in, [&](std::span<double> o) { kernels::normalize(x, in, mean, var, 1e-5, o); },
        [&](std::span<double> o) { kernels::reference::normalize(x, in, mean, var, 1e-5, o); });
  bench("batchnorm_backward", rows * in,
        [&](std::span<double> o) { kernels::batchnorm_backward(x, x, in, var, 1e-5, o); },
        [&](std::span<double> o) { kernels::reference::batchnorm_backward(x, x, in, var, 1e-5, o); });

  std::printf("threads %d, %zu rows x %zu channels, best of %d\n", omp_get_max_threads(), rows, in, reps);
  std::printf("%-26s %12s %12s %8s  %s\n", "kernel", "parallel ms", "serial ms", "speedup", "equal");
  bool all_equal = true;
  for (const Row& r : table) {
    std::printf("%-26s %12.2f %12.2f %8.2f  %s\n", r.name.c_str(), 1e3 * r.parallel, 1e3 * r.serial,
                r.serial / r.parallel, r.equal ? "yes" : "NO");
    all_equal = all_equal && r.equal;
  }
  return all_equal ? 0 : 1;
}
