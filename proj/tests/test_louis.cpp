#include <doctest.h>

#include <cmath>

#include "switchgeo/louis.hpp"
#include "switchgeo/rng.hpp"

using namespace switchgeo;

namespace {

AlrnnParams tiny_params(std::uint64_t seed, int M, int P, int N,
                        double gate_bias = 0.0) {
  RngStream rng(seed, "louis/test-params");
  AlrnnParams p;
  p.P = P;
  p.a.resize(M);
  p.W.resize(M, M);
  p.h.resize(M);
  p.E.resize(M, N);
  for (int i = 0; i < M; ++i) {
    p.a[i] = rng.uniform(0.2, 0.7);
    p.h[i] = 0.3 * rng.normal();
    for (int j = 0; j < M; ++j) p.W(i, j) = 0.3 * rng.normal() / std::sqrt(M);
    for (int j = 0; j < N; ++j) p.E(i, j) = 0.5 * rng.normal();
  }
  for (int j = 0; j < P; ++j) p.h[M - P + j] += gate_bias;
  return p;
}

SmoothedDraw random_draw(std::uint64_t seed, int T, int M, int P) {
  RngStream rng(seed, "louis/test-draw");
  SmoothedDraw d;
  d.states.resize(T, M);
  d.codes.resize(T - 1, P);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < M; ++i) d.states(t, i) = rng.normal();
  for (int t = 0; t + 1 < T; ++t)
    for (int j = 0; j < P; ++j) d.codes(t, j) = rng.uniform() < 0.5 ? 1 : 0;
  return d;
}

// complete-data transition log-likelihood as a plain function of theta
double complete_loglik(const SmoothedDraw& d, const AlrnnParams& base,
                       const Vec& theta, double sigma_proc) {
  const int M = base.M();
  AlrnnParams p = base;
  p.a = theta.head(M);
  for (int i = 0; i < M; ++i) p.W.row(i) = theta.segment(M + i * M, M);
  p.h = theta.tail(M);
  const double q = sigma_proc * sigma_proc;
  double ll = 0.0;
  for (Eigen::Index t = 0; t + 1 < d.states.rows(); ++t) {
    const Vec z = d.states.row(t).transpose();
    Vec g = z;
    for (int j = 0; j < p.P; ++j)
      if (!d.codes(t, j)) g[M - p.P + j] = 0.0;
    const Vec mean = p.a.cwiseProduct(z) + p.W * g + p.h;
    const Vec r = d.states.row(t + 1).transpose() - mean;
    ll += -0.5 * (M * std::log(2.0 * M_PI * q) + r.squaredNorm() / q);
  }
  return ll;
}

Mat window_from_pinned(const AlrnnParams& p, const PalrnnNoise& noise, int L,
                       std::uint64_t seed) {
  RngStream rng(seed, "louis/pinned-window");
  Vec z(2);
  z << 5.0, 60.0;
  Mat x(L + 1, 1);
  x(0, 0) = z[0] + noise.sigma_obs * rng.normal();
  SwitchingCode on(1);
  on << 1;
  for (int t = 0; t < L; ++t) {
    z = step_jacobian(p, on) * z + p.h;
    for (int i = 0; i < 2; ++i) z[i] += noise.sigma_proc * rng.normal();
    x(t + 1, 0) = z[0] + noise.sigma_obs * rng.normal();
  }
  return x;
}

}  // namespace

TEST_CASE("complete-data score: zero residuals, FD agreement, linearity") {
  const int M = 2, P = 1, T = 3;
  const auto p = tiny_params(3, M, P, 1);
  PalrnnNoise noise{0.3, 0.2, 0.5};

  // a draw generated exactly by the deterministic gated map has zero score
  SmoothedDraw exact;
  exact.states.resize(T, M);
  exact.codes.resize(T - 1, P);
  Vec z(2);
  z << 0.4, -0.3;
  exact.states.row(0) = z.transpose();
  for (int t = 0; t + 1 < T; ++t) {
    const SwitchingCode c = switching_code(z, P);
    exact.codes.row(t) = c.transpose();
    z = step_jacobian(p, c) * z + p.h;
    exact.states.row(t + 1) = z.transpose();
  }
  CHECK(complete_data_score(exact, p, noise).cwiseAbs().maxCoeff() < 1e-12);

  // finite differences of the complete-data log-likelihood
  const auto d = random_draw(5, T, M, P);
  const Vec score = complete_data_score(d, p, noise);
  const Vec theta0 = p.flatten_drift();
  const double step = 1e-6;
  for (Eigen::Index k = 0; k < theta0.size(); ++k) {
    Vec tp = theta0, tm = theta0;
    tp[k] += step;
    tm[k] -= step;
    const double fd = (complete_loglik(d, p, tp, noise.sigma_proc) -
                       complete_loglik(d, p, tm, noise.sigma_proc)) /
                      (2.0 * step);
    CHECK(std::fabs(fd - score[k]) < 1e-6 * std::max(1.0, std::fabs(score[k])));
  }

  // score is linear in the residual: rescale z_{t+1} around the model mean
  SmoothedDraw one;
  one.states = d.states.topRows(2);
  one.codes = d.codes.topRows(1);
  SmoothedDraw one2 = one;
  {
    const Vec z_t = one.states.row(0).transpose();
    Vec g = z_t;
    for (int j = 0; j < P; ++j)
      if (!one.codes(0, j)) g[M - P + j] = 0.0;
    const Vec mean = p.a.cwiseProduct(z_t) + p.W * g + p.h;
    const Vec r = one.states.row(1).transpose() - mean;
    one2.states.row(1) = (mean + 2.0 * r).transpose();
  }
  const Vec s1 = complete_data_score(one, p, noise);
  const Vec s2 = complete_data_score(one2, p, noise);
  CHECK((s2 - 2.0 * s1).cwiseAbs().maxCoeff() < 1e-12 * s1.cwiseAbs().maxCoeff());
}

TEST_CASE("complete-data information: h-block at z=0, FD Hessian, Q scaling") {
  const int M = 2, P = 1;
  const auto p = tiny_params(7, M, P, 1);
  PalrnnNoise noise{0.4, 0.2, 0.5};

  SmoothedDraw zero;
  zero.states = Mat::Zero(2, M);
  zero.states(1, 0) = 0.7;  // residual only; the information must ignore it
  zero.codes = CodeMatrix::Zero(1, P);
  const CurvatureMatrix info0 = complete_data_info(zero, p, noise);
  const double inv_q = 1.0 / (noise.sigma_proc * noise.sigma_proc);
  Mat expect = Mat::Zero(info0.p(), info0.p());
  expect.bottomRightCorner(M, M) = inv_q * Mat::Identity(M, M);
  CHECK((info0.entries - expect).cwiseAbs().maxCoeff() == 0.0);

  const auto d = random_draw(9, 4, M, P);
  const CurvatureMatrix info = complete_data_info(d, p, noise);
  // exact negative Hessian via second differences of the complete-data loglik
  const Vec theta0 = p.flatten_drift();
  const double step = 1e-4;
  for (Eigen::Index a = 0; a < theta0.size(); ++a) {
    for (Eigen::Index b = a; b < theta0.size(); ++b) {
      Vec tpp = theta0, tpm = theta0, tmp = theta0, tmm = theta0;
      tpp[a] += step;
      tpp[b] += step;
      tpm[a] += step;
      tpm[b] -= step;
      tmp[a] -= step;
      tmp[b] += step;
      tmm[a] -= step;
      tmm[b] -= step;
      const double h2 = (complete_loglik(d, p, tpp, noise.sigma_proc) -
                         complete_loglik(d, p, tpm, noise.sigma_proc) -
                         complete_loglik(d, p, tmp, noise.sigma_proc) +
                         complete_loglik(d, p, tmm, noise.sigma_proc)) /
                        (4.0 * step * step);
      CHECK(std::fabs(-h2 - info.entries(a, b)) <
            1e-5 * std::max(1.0, std::fabs(info.entries(a, b))));
    }
  }

  PalrnnNoise scaled = noise;
  scaled.sigma_proc *= 2.0;  // Q scaled by 4
  const CurvatureMatrix quarter = complete_data_info(d, p, scaled);
  CHECK((4.0 * quarter.entries - info.entries).cwiseAbs().maxCoeff() <
        1e-12 * info.entries.cwiseAbs().maxCoeff());
}

TEST_CASE("louis estimator: identical draws give zero missing information") {
  const auto p = tiny_params(11, 2, 1, 1);
  PalrnnNoise noise{0.3, 0.2, 0.5};
  const auto d = random_draw(12, 4, 2, 1);
  const LouisEstimate est = louis_observed_info({d, d, d}, p, noise);
  const double scale = est.e_i_comp.entries.cwiseAbs().maxCoeff();
  CHECK(est.i_miss.entries.cwiseAbs().maxCoeff() < 1e-24 * scale);
  CHECK((est.i_obs.entries - est.e_i_comp.entries).cwiseAbs().maxCoeff() <
        1e-24 * scale);
  CHECK(est.n_draws == 3);
  CHECK(est.T == 4);
  CHECK_THROWS_AS(louis_observed_info({d}, p, noise), config_error);
}

TEST_CASE("louis identity holds exactly on estimates; trace inequality") {
  const auto p = tiny_params(13, 2, 1, 1);
  PalrnnNoise noise{0.3, 0.2, 0.6};
  const Mat x = window_from_pinned(p, noise, 4, 14);
  const ParticleCloud cloud = rbpf_filter(p, noise, x, 64, 0.5, 15);
  const auto draws = backward_sample(cloud, p, noise, 16, 16);
  const LouisEstimate est = louis_observed_info(draws, p, noise);
  CHECK((est.e_i_comp.entries - est.i_obs.entries - est.i_miss.entries)
            .cwiseAbs()
            .maxCoeff() < 1e-10 * est.e_i_comp.entries.cwiseAbs().maxCoeff());
  CHECK(est.i_obs.trace() <= est.e_i_comp.trace() + 1e-8 * est.e_i_comp.trace());
  CHECK(est.i_miss.min_eigenvalue() >=
        -1e-8 * std::max(est.i_miss.trace(), 1.0) / est.i_miss.p());
}

TEST_CASE("pinned gates: near-deterministic posterior leaves little missing info") {
  // deterministic code kills the gate term; a fully observed state with small
  // measurement noise pins the continuous latent as well
  const auto p = tiny_params(21, 2, 1, 2, 60.0);
  PalrnnNoise noise{0.3, 0.02, 0.5};
  RngStream rng(22, "pinned");
  Vec z(2);
  z << 1.0, 60.0;
  const int L = 8;
  Mat x(L + 1, 2);
  x.row(0) = z.transpose();
  SwitchingCode on(1);
  on << 1;
  for (int t = 0; t < L; ++t) {
    z = step_jacobian(p, on) * z + p.h;
    for (int i = 0; i < 2; ++i) z[i] += noise.sigma_proc * rng.normal();
    for (int j = 0; j < 2; ++j)
      x(t + 1, j) = z[j] + noise.sigma_obs * rng.normal();
  }
  const ParticleCloud cloud = rbpf_filter(p, noise, x, 256, 0.5, 23);
  const auto draws = backward_sample(cloud, p, noise, 64, 24);
  const LouisEstimate est = louis_observed_info(draws, p, noise);
  CHECK(est.i_miss.trace() / est.e_i_comp.trace() < 0.05);
  const MirResult m = mir(est);
  CHECK(m.value < 0.05);
}

TEST_CASE("enumeration: pinned gates equal the single-path Kalman") {
  const auto p0 = tiny_params(31, 2, 1, 1, 60.0);
  AlrnnParams p = p0;
  p.E(1, 0) = 20.0;
  PalrnnNoise noise{0.2, 0.25, 0.5};
  const Mat x = window_from_pinned(p, noise, 4, 32);

  GaussianBelief b;
  b.mean = embed_init(p, x.row(0).transpose());
  Vec d(2);
  d << noise.sigma_obs * noise.sigma_obs, noise.sigma_proc * noise.sigma_proc;
  b.cov = d.asDiagonal();
  SwitchingCode on(1);
  on << 1;
  double kalman = 0.0;
  for (int s = 0; s < 4; ++s) {
    const KalmanResult kr = kalman_step(b, on, p, noise, x.row(s + 1).transpose());
    kalman += kr.loglik;
    b = kr.belief;
  }
  CHECK(enumerate_marginal_loglik(p, noise, x) ==
        doctest::Approx(kalman).epsilon(1e-12));
}

TEST_CASE("enumeration: P=1, T=3 matches a hand-expanded two-level mixture") {
  // scalar model (M = N = P = 1): all Kalman algebra expands by hand
  AlrnnParams p;
  p.P = 1;
  p.a = Vec::Constant(1, 0.6);
  p.W = Mat::Constant(1, 1, 0.3);
  p.h = Vec::Constant(1, 0.1);
  p.E = Mat::Constant(1, 1, 0.0);
  PalrnnNoise noise{0.25, 0.2, 0.45};
  Mat x(3, 1);
  x << 0.4, 0.9, -0.2;

  const double q = noise.sigma_proc * noise.sigma_proc;
  const double r = noise.sigma_obs * noise.sigma_obs;
  const double sg2 = noise.sigma_g * noise.sigma_g;
  auto phi_cdf = [](double v) { return 0.5 * std::erfc(-v * M_SQRT1_2); };
  auto log_n = [](double v, double mean, double var) {
    return -0.5 * (std::log(2.0 * M_PI * var) + (v - mean) * (v - mean) / var);
  };

  std::vector<double> leaves;
  for (int c1 : {0, 1}) {
    const double m0 = x(0, 0), p0 = r;  // boundary overwrite + observed block
    const double g1 = phi_cdf(m0 / std::sqrt(p0 + sg2));
    const double lg1 = std::log(c1 ? g1 : 1.0 - g1);
    const double f1 = 0.6 + 0.3 * c1;
    const double mp1 = f1 * m0 + 0.1;
    const double pp1 = f1 * f1 * p0 + q;
    const double s1 = pp1 + r;
    const double ll1 = log_n(x(1, 0), mp1, s1);
    const double k1 = pp1 / s1;
    const double m1 = mp1 + k1 * (x(1, 0) - mp1);
    const double p1v = (1 - k1) * pp1 * (1 - k1) + k1 * k1 * r;
    for (int c2 : {0, 1}) {
      const double g2 = phi_cdf(m1 / std::sqrt(p1v + sg2));
      const double lg2 = std::log(c2 ? g2 : 1.0 - g2);
      const double f2 = 0.6 + 0.3 * c2;
      const double mp2 = f2 * m1 + 0.1;
      const double pp2 = f2 * f2 * p1v + q;
      const double s2 = pp2 + r;
      const double ll2 = log_n(x(2, 0), mp2, s2);
      leaves.push_back(lg1 + ll1 + lg2 + ll2);
    }
  }
  const double expected = logsumexp(leaves);
  CHECK(enumerate_marginal_loglik(p, noise, x) ==
        doctest::Approx(expected).epsilon(1e-12));

  // budget guard
  AlrnnParams big = tiny_params(41, 3, 3, 1);
  CHECK_THROWS_AS(enumerate_marginal_loglik(big, noise, Mat::Zero(9, 1)),
                  config_error);
}

TEST_CASE("enumeration agrees with the RBPF evidence within MC error") {
  const auto p = tiny_params(51, 2, 1, 1);
  PalrnnNoise noise{0.3, 0.25, 0.6};
  RngStream rng(52, "window");
  Mat x(4, 1);
  for (int t = 0; t < 4; ++t) x(t, 0) = rng.normal();
  const double exact = enumerate_marginal_loglik(p, noise, x);

  std::vector<double> reps;
  for (std::uint64_t s = 0; s < 6; ++s)
    reps.push_back(rbpf_filter(p, noise, x, 30000, 0.5, 100 + s).log_evidence());
  const double mean = mean_of(reps);
  const double se = sample_std(reps) / std::sqrt(6.0);
  CHECK(std::fabs(mean - exact) <= 3.0 * se + 1e-4);
}

TEST_CASE("louis estimate approaches the enumerated FD Hessian (tiny model)") {
  const auto p = tiny_params(61, 2, 1, 1);
  PalrnnNoise noise{0.3, 0.25, 0.7};
  RngStream rng(62, "window");
  Mat x(4, 1);
  for (int t = 0; t < 4; ++t) x(t, 0) = 0.8 * rng.normal();

  // negative FD Hessian trace of the exact marginal
  const Vec theta0 = p.flatten_drift();
  const double step = 1e-4;
  auto marginal = [&](const Vec& th) {
    AlrnnParams q = p;
    q.a = th.head(2);
    for (int i = 0; i < 2; ++i) q.W.row(i) = th.segment(2 + i * 2, 2);
    q.h = th.tail(2);
    return enumerate_marginal_loglik(q, noise, x);
  };
  double oracle_trace = 0.0;
  const double f0 = marginal(theta0);
  for (Eigen::Index k = 0; k < theta0.size(); ++k) {
    Vec tp = theta0, tm = theta0;
    tp[k] += step;
    tm[k] -= step;
    oracle_trace -= (marginal(tp) - 2.0 * f0 + marginal(tm)) / (step * step);
  }

  // replicated Louis estimates at a healthy budget
  std::vector<double> traces;
  for (std::uint64_t s = 0; s < 16; ++s) {
    const ParticleCloud cloud = rbpf_filter(p, noise, x, 512, 0.5, 200 + s);
    const auto draws = backward_sample(cloud, p, noise, 64, 300 + s);
    traces.push_back(louis_observed_info(draws, p, noise).i_obs.trace());
  }
  const double mean = mean_of(traces);
  const double se = sample_std(traces) / 4.0;
  CHECK(std::fabs(mean - oracle_trace) <= 3.0 * se + 0.02 * std::fabs(oracle_trace));
}

TEST_CASE("mir: boundary cases and rejection") {
  LouisEstimate est;
  est.e_i_comp.entries = Mat::Identity(3, 3);
  est.i_obs.entries = Mat::Identity(3, 3);
  est.i_miss.entries = Mat::Zero(3, 3);
  CHECK(mir(est).value == 0.0);
  est.i_obs.entries.setZero();
  CHECK(mir(est).value == 1.0);
  est.i_obs.entries = 2.0 * Mat::Identity(3, 3);
  CHECK(mir(est).negative_clipped);
  est.e_i_comp.entries.setZero();
  CHECK_THROWS_AS(mir(est), numerical_error);
}
