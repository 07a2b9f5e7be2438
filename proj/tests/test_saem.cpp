#include <doctest.h>

#include <cmath>

#include "switchgeo/parallel.hpp"
#include "switchgeo/rng.hpp"
#include "switchgeo/saem.hpp"

using namespace switchgeo;

namespace {

AlrnnParams stable_params(std::uint64_t seed, int M, int P, int N) {
  RngStream rng(seed, "saem/test-params");
  AlrnnParams p;
  p.P = P;
  p.a.resize(M);
  p.W.resize(M, M);
  p.h.resize(M);
  p.E.resize(M, N);
  for (int i = 0; i < M; ++i) {
    p.a[i] = rng.uniform(0.2, 0.7);
    p.h[i] = 0.2 * rng.normal();
    for (int j = 0; j < M; ++j) p.W(i, j) = 0.25 * rng.normal() / std::sqrt(M);
    for (int j = 0; j < N; ++j) p.E(i, j) = 0.5 * rng.normal();
  }
  return p;
}

// trajectories from the PAL-RNN itself (probit gates, Gaussian noise)
Mat self_generated(const AlrnnParams& p, const PalrnnNoise& noise, int T,
                   std::uint64_t seed) {
  RngStream rng(seed, "saem/test-data");
  const int M = p.M(), N = p.N(), P = p.P;
  Vec z(M);
  for (int i = 0; i < M; ++i) z[i] = 0.5 * rng.normal();
  Mat x(T, N);
  for (int j = 0; j < N; ++j) x(0, j) = z[j] + noise.sigma_obs * rng.normal();
  for (int t = 1; t < T; ++t) {
    SwitchingCode c(P);
    for (int j = 0; j < P; ++j)
      c[j] = rng.uniform() < norm_cdf(z[M - P + j] / noise.sigma_g) ? 1 : 0;
    z = step_jacobian(p, c) * z + p.h;
    for (int i = 0; i < M; ++i) z[i] += noise.sigma_proc * rng.normal();
    for (int j = 0; j < N; ++j) x(t, j) = z[j] + noise.sigma_obs * rng.normal();
  }
  return x;
}

SmoothedDraw exact_draw(const AlrnnParams& p, int T, std::uint64_t seed,
                        double proc_std) {
  // states from the gated map plus optional process noise, codes by sign
  RngStream rng(seed, "saem/test-draw");
  const int M = p.M(), P = p.P;
  SmoothedDraw d;
  d.states.resize(T, M);
  d.codes.resize(T - 1, P);
  Vec z(M);
  for (int i = 0; i < M; ++i) z[i] = rng.normal();
  d.states.row(0) = z.transpose();
  for (int t = 0; t + 1 < T; ++t) {
    const SwitchingCode c = switching_code(z, P);
    d.codes.row(t) = c.transpose();
    z = step_jacobian(p, c) * z + p.h;
    for (int i = 0; i < M; ++i) z[i] += proc_std * rng.normal();
    d.states.row(t + 1) = z.transpose();
  }
  return d;
}

}  // namespace

TEST_CASE("make_windows: stride arithmetic, partition, held-out placement") {
  std::vector<Mat> seqs = {Mat::Zero(4000, 3), Mat::Zero(4000, 3)};
  const WindowSplit split = make_windows(seqs, 200, 10);
  // (4000 - 1) / 200 = 19 windows per sequence
  CHECK(split.train.size() + split.heldout.size() == 38);
  CHECK(split.heldout.size() == 10);
  // trailing windows per sequence are held out
  for (const auto& w : split.heldout) CHECK(w.start >= 200 * 13);
  // partition: all starts distinct and every start a valid stride point
  std::vector<std::vector<int>> seen(2);
  for (const auto& w : split.train) seen[static_cast<std::size_t>(w.seq)].push_back(w.start);
  for (const auto& w : split.heldout) seen[static_cast<std::size_t>(w.seq)].push_back(w.start);
  for (const auto& s : seen) {
    CHECK(s.size() == 19);
    for (int start : s) CHECK(start % 200 == 0);
  }

  // L = T-1 gives a single window
  std::vector<Mat> tiny = {Mat::Zero(9, 2)};
  const WindowSplit one = make_windows(tiny, 4, 0);
  CHECK(one.train.size() == 2);
  CHECK_THROWS_AS(make_windows(tiny, 5, 0), config_error);

  // window block covers the boundary plus L observations
  const Mat blk = window_block(seqs[0], split.train[0], 200);
  CHECK(blk.rows() == 201);
}

TEST_CASE("sufficient statistics recover an identifiable model's rows") {
  // P = M keeps the a-column and the W diagonal distinguishable (ReLU vs
  // identity features); non-gated coordinates make them exactly collinear
  const int M = 3, P = 3, N = 2;
  const auto p = stable_params(3, M, P, N);
  std::vector<SmoothedDraw> draws;
  for (std::uint64_t s = 0; s < 4; ++s)
    draws.push_back(exact_draw(p, 400, s, 0.0));
  Mat x_win = Mat::Zero(400, N);  // irrelevant for the drift blocks
  const SuffStats stats = window_suff_stats(draws, x_win);

  SaemConfig cfg;
  cfg.window_len = 399;
  cfg.mode = SaemMode::full;
  cfg.ridge = 0.0;
  SaemParams cur;
  cur.params = stable_params(99, M, P, N);  // wrong start; solve must recover
  cur.params.E = p.E;
  cur.noise = PalrnnNoise{0.1, 0.1, 0.5};
  const SaemParams fit = m_step(stats, cur, cfg);
  CHECK((fit.params.a - p.a).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((fit.params.W - p.W).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((fit.params.h - p.h).cwiseAbs().maxCoeff() < 1e-6);
  // zero residuals: both noise scales land on the floor exactly
  CHECK(fit.noise.sigma_proc == cfg.sigma_min);

  // statistics are additive
  SuffStats sum = SuffStats::zeros(M);
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto one = window_suff_stats({exact_draw(p, 400, s, 0.0)}, x_win);
    sum.add(one);
  }
  CHECK(sum.n_pairs == stats.n_pairs);
  for (int i = 0; i < M; ++i)
    CHECK((sum.C[static_cast<std::size_t>(i)] - stats.C[static_cast<std::size_t>(i)])
              .cwiseAbs()
              .maxCoeff() < 1e-9);
}

TEST_CASE("lambda = 0 on a non-gated coordinate is rejected as rank-deficient") {
  // M > P: the a-feature equals the W-diagonal feature on non-gated rows
  const int M = 3, P = 1, N = 2;
  const auto p = stable_params(5, M, P, N);
  std::vector<SmoothedDraw> draws = {exact_draw(p, 200, 1, 0.05)};
  const SuffStats stats = window_suff_stats(draws, Mat::Zero(200, N));
  SaemConfig cfg;
  cfg.window_len = 199;
  cfg.mode = SaemMode::full;
  cfg.ridge = 0.0;
  SaemParams cur;
  cur.params = p;
  cur.noise = PalrnnNoise{0.1, 0.1, 0.5};
  CHECK_THROWS_AS(m_step(stats, cur, cfg), numerical_error);
  // any positive ridge restores solvability
  cfg.ridge = 1e-8;
  const SaemParams fit = m_step(stats, cur, cfg);
  CHECK(fit.params.W.allFinite());
}

TEST_CASE("m_step consistency: error shrinks as data grows") {
  // process noise large enough that every coordinate keeps crossing zero,
  // so the identity and ReLU features stay jointly identifiable
  const int M = 3, P = 3, N = 2;
  auto p = stable_params(7, M, P, N);
  p.h.setZero();
  const double proc = 0.3;
  auto fit_error = [&](int T, std::uint64_t seed) {
    std::vector<SmoothedDraw> draws;
    for (std::uint64_t s = 0; s < 8; ++s)
      draws.push_back(exact_draw(p, T, seed * 100 + s, proc));
    const SuffStats stats = window_suff_stats(draws, Mat::Zero(T, N));
    SaemConfig cfg;
    cfg.window_len = T - 1;
    cfg.mode = SaemMode::full;
    cfg.ridge = 0.0;
    SaemParams cur;
    cur.params = p;
    cur.noise = PalrnnNoise{0.1, 0.1, 0.5};
    const SaemParams fit = m_step(stats, cur, cfg);
    return (fit.params.W - p.W).cwiseAbs().maxCoeff() +
           (fit.params.a - p.a).cwiseAbs().maxCoeff();
  };
  const double small_err = fit_error(200, 1);
  const double big_err = fit_error(3200, 2);
  CHECK(big_err < 0.5 * small_err);
}

TEST_CASE("calib keeps the drift bit-identical; floors respected") {
  const int M = 3, P = 1, N = 2;
  const auto p = stable_params(11, M, P, N);
  std::vector<SmoothedDraw> draws = {exact_draw(p, 50, 1, 0.1),
                                     exact_draw(p, 50, 2, 0.1)};
  const SuffStats stats = window_suff_stats(draws, Mat::Zero(50, N));
  SaemConfig cfg;
  cfg.window_len = 49;
  cfg.mode = SaemMode::calib;
  SaemParams cur;
  cur.params = stable_params(12, M, P, N);
  cur.noise = PalrnnNoise{0.2, 0.2, 0.5};
  const SaemParams fit = m_step(stats, cur, cfg);
  CHECK((fit.params.a - cur.params.a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fit.params.W - cur.params.W).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fit.params.h - cur.params.h).cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.noise.sigma_proc >= cfg.sigma_min);
  CHECK(fit.noise.sigma_obs >= cfg.sigma_min);
  CHECK(fit.noise.sigma_g == cur.noise.sigma_g);
}

TEST_CASE("blend: endpoints and convexity per updated block") {
  const int M = 2, P = 1, N = 1;
  SaemParams a, b;
  a.params = stable_params(21, M, P, N);
  a.noise = PalrnnNoise{0.1, 0.2, 0.5};
  b.params = stable_params(22, M, P, N);
  b.params.E = a.params.E;
  b.noise = PalrnnNoise{0.3, 0.4, 0.5};

  const SaemParams keep = blend(a, b, 0.0, SaemMode::full);
  CHECK((keep.params.W - a.params.W).cwiseAbs().maxCoeff() == 0.0);
  CHECK(keep.noise.sigma_proc == a.noise.sigma_proc);
  const SaemParams take = blend(a, b, 1.0, SaemMode::full);
  CHECK((take.params.W - b.params.W).cwiseAbs().maxCoeff() == 0.0);
  CHECK(take.noise.sigma_obs == b.noise.sigma_obs);

  const SaemParams mid = blend(a, b, 0.25, SaemMode::full);
  for (int i = 0; i < M; ++i) {
    const double lo = std::min(a.params.a[i], b.params.a[i]);
    const double hi = std::max(a.params.a[i], b.params.a[i]);
    CHECK(mid.params.a[i] >= lo);
    CHECK(mid.params.a[i] <= hi);
  }
  CHECK(mid.noise.sigma_proc == doctest::Approx(0.15).epsilon(1e-12));

  const SaemParams calib = blend(a, b, 0.25, SaemMode::calib);
  CHECK((calib.params.W - a.params.W).cwiseAbs().maxCoeff() == 0.0);
  CHECK(calib.noise.sigma_proc == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("saem_run: baseline identity, calib drift hash, determinism") {
  const int M = 4, P = 2, N = 2;
  const auto truth = stable_params(31, M, P, N);
  PalrnnNoise gen_noise{0.1, 0.1, 0.6};
  std::vector<Mat> seqs = {self_generated(truth, gen_noise, 400, 41),
                           self_generated(truth, gen_noise, 400, 42)};

  SaemConfig cfg;
  cfg.window_len = 25;
  cfg.iterations = 2;
  cfg.windows_per_iter = 6;
  cfg.n_particles = 32;
  cfg.n_smooth = 4;
  cfg.sigma_g = 0.6;
  cfg.heldout_windows = 6;
  cfg.seed = 5;

  SaemParams init;
  init.params = truth;
  init.params.W *= 0.9;  // start off the truth
  init.noise = PalrnnNoise{0.15, 0.15, cfg.sigma_g};

  cfg.mode = SaemMode::baseline;
  const SaemResult base = saem_run(init, seqs, cfg);
  CHECK(checkpoint_hash(base.fitted.params) == checkpoint_hash(init.params));
  CHECK(base.fitted.noise.sigma_proc == init.noise.sigma_proc);
  CHECK(base.log.empty());

  cfg.mode = SaemMode::calib;
  const SaemResult calib = saem_run(init, seqs, cfg);
  CHECK(checkpoint_hash(calib.fitted.params) == checkpoint_hash(init.params));
  CHECK(calib.fitted.noise.sigma_proc != init.noise.sigma_proc);
  CHECK(calib.log.size() == 2);

  cfg.mode = SaemMode::full;
  const SaemResult full_a = saem_run(init, seqs, cfg);
  const SaemResult full_b = saem_run(init, seqs, cfg);
  CHECK(checkpoint_hash(full_a.fitted.params) ==
        checkpoint_hash(full_b.fitted.params));
  CHECK(checkpoint_hash(full_a.fitted.params) != checkpoint_hash(init.params));
  CHECK(full_a.fitted.noise.sigma_proc >= cfg.sigma_min);

  // thread-budget independence of a full iteration
  par::set_threads(1);
  const SaemResult serial = saem_run(init, seqs, cfg);
  par::set_threads(4);
  const SaemResult parallel = saem_run(init, seqs, cfg);
  par::set_threads(0);
  CHECK(checkpoint_hash(serial.fitted.params) ==
        checkpoint_hash(parallel.fitted.params));
  CHECK(serial.fitted.noise.sigma_obs == parallel.fitted.noise.sigma_obs);
}

TEST_CASE("held-out evidence: deterministic, seed-sensitive, reasonable scale") {
  const int M = 3, P = 1, N = 2;
  const auto truth = stable_params(51, M, P, N);
  PalrnnNoise noise{0.1, 0.1, 0.5};
  std::vector<Mat> seqs = {self_generated(truth, noise, 300, 61)};
  const WindowSplit split = make_windows(seqs, 20, 4);
  REQUIRE(split.heldout.size() == 4);

  SaemParams model;
  model.params = truth;
  model.noise = noise;
  const EvidenceResult a =
      heldout_evidence(model, seqs, split.heldout, 20, 64, 0.5, 9);
  const EvidenceResult b =
      heldout_evidence(model, seqs, split.heldout, 20, 64, 0.5, 9);
  CHECK(a.mean == b.mean);
  REQUIRE(a.per_window.size() == 4);
  const EvidenceResult c =
      heldout_evidence(model, seqs, split.heldout, 20, 64, 0.5, 10);
  CHECK(a.mean != c.mean);
  CHECK(std::isfinite(a.mean));

  // doubling the particle budget moves the estimate by a small MC amount
  const EvidenceResult d =
      heldout_evidence(model, seqs, split.heldout, 20, 128, 0.5, 9);
  CHECK(std::fabs(d.mean - a.mean) < 0.15);
}
