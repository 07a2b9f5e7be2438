#include "switchgeo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "switchgeo/rng.hpp"

namespace switchgeo {

double d_stsp(const Mat& gen, const Mat& ref, int n_bins, double alpha_smooth) {
  if (gen.rows() == 0 || ref.rows() == 0)
    throw config_error("d_stsp: empty trajectory");
  if (gen.cols() != ref.cols()) throw config_error("d_stsp: dimension mismatch");
  const int N = static_cast<int>(ref.cols());

  const Vec lo = ref.colwise().minCoeff();
  const Vec hi = ref.colwise().maxCoeff();
  Vec width = hi - lo;
  for (int j = 0; j < N; ++j)
    if (!(width[j] > 0.0)) width[j] = 1.0;  // degenerate box: single occupied bin

  std::size_t n_cells = 1;
  for (int j = 0; j < N; ++j) {
    n_cells *= static_cast<std::size_t>(n_bins);
    if (n_cells > 100000000u)
      throw config_error("d_stsp: histogram would exceed 1e8 cells");
  }

  auto cell_of = [&](const Mat& data, Eigen::Index t) {
    std::size_t cell = 0;
    for (int j = 0; j < N; ++j) {
      int b = static_cast<int>(std::floor((data(t, j) - lo[j]) / width[j] *
                                          static_cast<double>(n_bins)));
      b = std::clamp(b, 0, n_bins - 1);  // out-of-box points land in edge bins
      cell = cell * static_cast<std::size_t>(n_bins) + static_cast<std::size_t>(b);
    }
    return cell;
  };

  std::vector<double> p(n_cells, 0.0), q(n_cells, 0.0);
  for (Eigen::Index t = 0; t < gen.rows(); ++t) p[cell_of(gen, t)] += 1.0;
  for (Eigen::Index t = 0; t < ref.rows(); ++t) q[cell_of(ref, t)] += 1.0;

  const double pz = static_cast<double>(gen.rows()) +
                    alpha_smooth * static_cast<double>(n_cells);
  const double qz = static_cast<double>(ref.rows()) +
                    alpha_smooth * static_cast<double>(n_cells);
  double kl = 0.0;
  for (std::size_t c = 0; c < n_cells; ++c) {
    const double pc = (p[c] + alpha_smooth) / pz;
    const double qc = (q[c] + alpha_smooth) / qz;
    kl += pc * std::log(pc / qc);
  }
  return kl;
}

std::vector<double> lyapunov_spectrum(const std::vector<Mat>& jacobians,
                                      double dt, int burn_in) {
  if (jacobians.empty()) throw config_error("lyapunov_spectrum: no Jacobians");
  if (burn_in < 0 || burn_in >= static_cast<int>(jacobians.size()))
    throw config_error("lyapunov_spectrum: burn-in must be < sequence length");
  const auto M = jacobians[0].rows();
  for (const auto& J : jacobians)
    if (J.rows() != M || J.cols() != M)
      throw config_error("lyapunov_spectrum: Jacobians must share one square shape");

  Mat Q = Mat::Identity(M, M);
  Vec acc = Vec::Zero(M);
  long long count = 0;
  for (std::size_t t = 0; t < jacobians.size(); ++t) {
    Eigen::HouseholderQR<Mat> qr(jacobians[t] * Q);
    Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
    Q = qr.householderQ() * Mat::Identity(M, M);
    for (Eigen::Index k = 0; k < M; ++k) {
      if (R(k, k) < 0.0) {  // force positive diagonal for determinism
        Q.col(k) = -Q.col(k);
        R.row(k) = -R.row(k);
      }
    }
    if (static_cast<int>(t) >= burn_in) {
      for (Eigen::Index k = 0; k < M; ++k)
        acc[k] += R(k, k) > 0.0 ? std::log(R(k, k))
                                : -std::numeric_limits<double>::infinity();
      ++count;
    }
  }
  std::vector<double> le(static_cast<std::size_t>(M));
  for (Eigen::Index k = 0; k < M; ++k)
    le[static_cast<std::size_t>(k)] = acc[k] / (static_cast<double>(count) * dt);
  std::sort(le.begin(), le.end(), std::greater<>());
  return le;
}

QoiReport qoi_eval(const AlrnnParams& params, const TrajectoryBundle& reference,
                   const QoiConfig& config) {
  params.validate();
  // the model operates in standardized coordinates; D_stsp compares raw ones
  const TrajectoryBundle ref_std =
      reference.frame == Frame::standardized ? reference : standardize(reference);
  const TrajectoryBundle ref_raw =
      reference.frame == Frame::raw ? reference : unstandardize(reference);
  const Standardizer& std_map = ref_std.standardizer;
  const Mat& obs_std = ref_std.observations;
  const Vec z1 = embed_init(params, obs_std.row(0).transpose());
  FreeRolloutConfig rc;
  rc.gate_mode = config.gate_mode;
  rc.sigma_g = config.sigma_g;
  rc.seed = config.seed;
  const RolloutRecord roll = free_rollout(params, z1, config.rollout_len, rc);

  QoiReport report;
  report.rollout_len = config.rollout_len;
  report.burn_in = config.burn_in;
  report.diverged = roll.diverged_at.has_value();

  const auto T_valid = roll.latents.rows();
  const auto n_jac = roll.codes.rows();
  std::vector<Mat> jac(static_cast<std::size_t>(n_jac));
  for (Eigen::Index t = 0; t < n_jac; ++t)
    jac[static_cast<std::size_t>(t)] =
        step_jacobian(params, roll.codes.row(t).transpose());
  const LorenzParams lp;  // dt converts discrete-time exponents
  const int burn = std::min<int>(config.burn_in, static_cast<int>(n_jac) - 1);
  if (n_jac > 0) {
    const auto le = lyapunov_spectrum(jac, lp.dt, std::max(0, burn));
    report.lambda1 = le.front();
  } else {
    report.lambda1 = std::numeric_limits<double>::quiet_NaN();
  }
  report.lambda1_error = report.lambda1 - config.lambda1_ref;

  const auto keep_from = std::min<Eigen::Index>(config.burn_in, T_valid);
  const Mat gen_std = roll.latents.bottomRows(T_valid - keep_from).leftCols(obs_std.cols());
  if (gen_std.rows() > 0) {
    const Mat gen_raw = std_map.invert(gen_std);
    report.d_stsp = d_stsp(gen_raw, ref_raw.observations);
  } else {
    report.d_stsp = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

double curvature_gap(const CurvatureMatrix& i_itf_per_step,
                     const CurvatureMatrix& i_obs_summed, int T) {
  if (i_itf_per_step.p() != i_obs_summed.p())
    throw config_error("curvature_gap: dimension mismatch");
  const double tr_itf = i_itf_per_step.trace();
  const double tr_obs_step = i_obs_summed.trace() / static_cast<double>(T);
  if (!(tr_itf > 0.0) || !(tr_obs_step > 0.0))
    throw numerical_error("curvature_gap: traces must be positive");
  return std::log10(tr_itf / tr_obs_step);
}

MismatchReport matrix_diagnostics(const CurvatureMatrix& i_itf_per_step,
                                  const CurvatureMatrix& i_obs_summed, int T,
                                  double epsilon, int k,
                                  const std::vector<double>& quantiles) {
  const auto p = i_itf_per_step.p();
  if (p != i_obs_summed.p()) throw config_error("matrix_diagnostics: dim mismatch");
  if (k < 1 || k > p) throw config_error("matrix_diagnostics: need 1 <= k <= p");

  const Mat A = 0.5 * (i_itf_per_step.entries + i_itf_per_step.entries.transpose());
  Mat B = 0.5 * (i_obs_summed.entries + i_obs_summed.entries.transpose());
  B /= static_cast<double>(T);

  MismatchReport rep;
  rep.k = k;
  rep.mu = epsilon * (A.trace() + B.trace()) / (2.0 * static_cast<double>(p));
  Mat A_mu = A;
  A_mu.diagonal().array() += rep.mu;
  Mat B_mu = B;
  B_mu.diagonal().array() += rep.mu;

  Eigen::LLT<Mat> lltA(A_mu), lltB(B_mu);
  if (lltA.info() != Eigen::Success || lltB.info() != Eigen::Success)
    throw numerical_error("matrix_diagnostics: factorization failed after ridge");
  auto logdet = [](const Eigen::LLT<Mat>& llt) {
    double s = 0.0;
    const Mat L = llt.matrixL();
    for (Eigen::Index i = 0; i < L.rows(); ++i) s += 2.0 * std::log(L(i, i));
    return s;
  };
  rep.delta_logdet = (logdet(lltA) - logdet(lltB)) / std::log(10.0);

  // gamma spectrum of B_mu^{-1} A_mu via the symmetric reduction L^-1 A L^-T
  const Mat L = lltB.matrixL();
  const Mat C = L.triangularView<Eigen::Lower>().solve(
      L.triangularView<Eigen::Lower>().solve(A_mu).transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eigC(0.5 * (C + C.transpose()));
  rep.log10_gamma = eigC.eigenvalues().array().max(1e-300).log10().matrix();

  std::vector<double> lg(rep.log10_gamma.data(), rep.log10_gamma.data() + p);
  for (double alpha : quantiles) rep.gamma_quantiles[alpha] = quantile(lg, alpha);

  Eigen::SelfAdjointEigenSolver<Mat> eigA(A_mu), eigB(B_mu);
  const Mat UA = eigA.eigenvectors().rightCols(k);
  const Mat UB = eigB.eigenvectors().rightCols(k);
  rep.ov_k = (UA.transpose() * UB).squaredNorm() / static_cast<double>(k);

  rep.g_q = curvature_gap(i_itf_per_step, i_obs_summed, T);
  return rep;
}

std::vector<double> mid_ranks(const std::vector<double>& values) {
  const auto n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;  // mid-rank, 1-based
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// regularized incomplete beta via Lentz continued fraction
double betacf(double a, double b, double x) {
  const double eps = 3e-16, fpmin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log(1.0 - x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(ln) * betacf(a, b, x) / a;
  return 1.0 - std::exp(ln) * betacf(b, a, 1.0 - x) / b;
}

// two-sided p for Spearman r via the t approximation with n-2 dof
double spearman_p(double r, std::size_t n) {
  if (n < 3) return 1.0;
  const double df = static_cast<double>(n - 2);
  const double r2 = std::min(r * r, 1.0 - 1e-15);
  const double t2 = df * r2 / (1.0 - r2);
  return ibeta(0.5 * df, 0.5, df / (df + t2));
}

std::vector<double> residualize(const std::vector<double>& y,
                                const std::vector<double>& x) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double beta = sxx > 0.0 ? sxy / sxx : 0.0;
  std::vector<double> res(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    res[i] = y[i] - my - beta * (x[i] - mx);
  return res;
}

bool is_constant(const std::vector<double>& v) {
  for (double x : v)
    if (x != v.front()) return false;
  return true;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(mid_ranks(x), mid_ranks(y));
}

RankAssociation rank_association(const std::vector<double>& h_values,
                                 const std::vector<double>& g_values,
                                 const std::vector<double>& covariate,
                                 int n_bootstrap, std::uint64_t seed) {
  const auto n = h_values.size();
  if (n != g_values.size() || n < 5)
    throw config_error("rank_association: need matched inputs of length >= 5");
  if (is_constant(h_values) || is_constant(g_values))
    throw config_error("rank_association: constant input series");

  RankAssociation out;
  out.n = static_cast<int>(n);
  out.spearman_r = spearman(h_values, g_values);
  out.p_value = spearman_p(out.spearman_r, n);

  if (covariate.size() == n && !is_constant(covariate)) {
    const auto rh = mid_ranks(h_values);
    const auto rg = mid_ranks(g_values);
    const auto rc = mid_ranks(covariate);
    out.partial_r = pearson(residualize(rh, rc), residualize(rg, rc));
  } else {
    out.partial_r = std::numeric_limits<double>::quiet_NaN();
  }

  RngStream rng(seed, "rank_assoc/bootstrap");
  std::vector<double> boot(static_cast<std::size_t>(n_bootstrap));
  std::vector<double> bx(n), by(n);
  for (int b = 0; b < n_bootstrap; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(rng.below(n));
      bx[i] = h_values[j];
      by[i] = g_values[j];
    }
    boot[static_cast<std::size_t>(b)] =
        (is_constant(bx) || is_constant(by)) ? 0.0 : spearman(bx, by);
  }
  out.ci_lo = quantile(boot, 0.025);
  out.ci_hi = quantile(boot, 0.975);
  return out;
}

}  // namespace switchgeo
