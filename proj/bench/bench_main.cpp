// Wall-clock comparison of the OpenMP kernels against the serial reference
// path (thread budget 1). Both paths produce identical bits; the table checks
// that and reports the speedup.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "switchgeo/fisher.hpp"
#include "switchgeo/louis.hpp"
#include "switchgeo/parallel.hpp"
#include "switchgeo/rng.hpp"
#include "switchgeo/toy_ar1.hpp"
#include "switchgeo/train.hpp"

using namespace switchgeo;

namespace {

AlrnnParams bench_params(std::uint64_t seed, int M, int P, int N) {
  RngStream rng(seed, "bench/params");
  AlrnnParams p;
  p.P = P;
  p.a.resize(M);
  p.W.resize(M, M);
  p.h.resize(M);
  p.E.resize(M, N);
  for (int i = 0; i < M; ++i) {
    p.a[i] = rng.uniform(0.1, 0.7);
    p.h[i] = 0.2 * rng.normal();
    for (int j = 0; j < M; ++j) p.W(i, j) = 0.25 * rng.normal() / std::sqrt(M);
    for (int j = 0; j < N; ++j) p.E(i, j) = 0.5 * rng.normal();
  }
  return p;
}

double time_of(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void report(const char* name, const std::function<double()>& run) {
  par::set_threads(1);
  double serial_value = 0.0, parallel_value = 0.0;
  const double t_serial = time_of([&] { serial_value = run(); });
  par::set_threads(0);  // environment / hardware budget
  const double t_parallel = time_of([&] { parallel_value = run(); });
  std::printf("%-28s serial %7.3f s   parallel %7.3f s   speedup %4.2fx   %s\n",
              name, t_serial, t_parallel, t_serial / t_parallel,
              serial_value == parallel_value ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads available: %d\n", [] {
    par::set_threads(0);
    return par::max_threads();
  }());

  {
    const auto p = bench_params(1, 20, 6, 3);
    PalrnnNoise noise{0.2, 0.2, 0.5};
    RngStream rng(2, "bench/window");
    Mat x(201, 3);
    for (int t = 0; t < 201; ++t)
      for (int j = 0; j < 3; ++j) x(t, j) = rng.normal();
    report("rbpf_filter (512p x 200)", [&] {
      return rbpf_filter(p, noise, x, 512, 0.5, 7).log_evidence();
    });
    report("backward_sample (64 draws)", [&] {
      const ParticleCloud cloud = rbpf_filter(p, noise, x, 256, 0.5, 7);
      const auto draws = backward_sample(cloud, p, noise, 64, 8);
      double acc = 0.0;
      for (const auto& d : draws) acc += d.states.sum();
      return acc;
    });
    report("louis draws (64)", [&] {
      const ParticleCloud cloud = rbpf_filter(p, noise, x, 256, 0.5, 7);
      const auto draws = backward_sample(cloud, p, noise, 64, 8);
      return louis_observed_info(draws, p, noise).i_obs.trace();
    });
  }

  {
    const auto p = bench_params(3, 30, 10, 3);
    RngStream rng(4, "bench/seqs");
    std::vector<Mat> seqs;
    for (int s = 0; s < 8; ++s) {
      Mat x(201, 3);
      for (int t = 0; t < 201; ++t)
        for (int j = 0; j < 3; ++j) x(t, j) = rng.normal();
      seqs.push_back(x);
    }
    report("itf_fisher_batch (8 x 200)", [&] {
      return itf_fisher_batch(p, seqs, 16, 0.1).trace();
    });
  }

  {
    TrajectoryBundle bundle = simulate_lorenz({1, 1, 1}, 10000, {}, {});
    bundle = standardize(bundle);
    report("train (M=16, 2 epochs)", [&] {
      TrainConfig cfg;
      cfg.M = 16;
      cfg.P = 5;
      cfg.tau = 8;
      cfg.batch_size = 16;
      cfg.bptt_len = 150;
      cfg.epochs = 2;
      cfg.batches_per_epoch = 25;
      cfg.seed = 5;
      return train(cfg, bundle).history.back().mean_loss;
    });
  }

  {
    report("toy_experiment (25 x 20)", [&] {
      ToySweepConfig cfg;
      cfg.seed = 6;
      double acc = 0.0;
      for (const auto& row : toy_experiment(cfg).rows) acc += row.mir;
      return acc;
    });
  }

  par::set_threads(0);
  return 0;
}
