#include "switchgeo/rbpf.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include "switchgeo/parallel.hpp"

namespace switchgeo {

double integrated_probit_prob(double mu, double nu, double sigma_g) {
  if (!(sigma_g > 0.0) || nu < 0.0)
    throw config_error("integrated_probit_prob: need nu >= 0, sigma_g > 0");
  return norm_cdf(mu / std::sqrt(nu + sigma_g * sigma_g));
}

KalmanResult kalman_step(const GaussianBelief& belief, const SwitchingCode& code,
                         const AlrnnParams& params, const PalrnnNoise& noise,
                         const Vec& x_next) {
  const int M = params.M();
  const auto N = x_next.size();
  const Mat F = step_jacobian(params, code);

  // predict
  Vec m_pred = F * belief.mean + params.h;
  Mat P_pred = F * belief.cov * F.transpose();
  P_pred.diagonal().array() += noise.sigma_proc * noise.sigma_proc;
  P_pred = 0.5 * (P_pred + P_pred.transpose()).eval();

  // update against x_next with H = B = [I_N 0]
  Mat S = P_pred.topLeftCorner(N, N);
  S.diagonal().array() += noise.sigma_obs * noise.sigma_obs;
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success)
    throw numerical_error("kalman_step: innovation covariance not PD");
  const Vec y = x_next - m_pred.head(N);
  const Mat K = llt.solve(P_pred.topRows(N)).transpose();  // M x N

  KalmanResult out;
  out.belief.mean = m_pred + K * y;
  Mat IKB = Mat::Identity(M, M);
  IKB.leftCols(N) -= K;
  out.belief.cov = IKB * P_pred * IKB.transpose() +
                   (noise.sigma_obs * noise.sigma_obs) * (K * K.transpose());
  out.belief.cov = 0.5 * (out.belief.cov + out.belief.cov.transpose()).eval();

  double logdet = 0.0;
  for (Eigen::Index i = 0; i < N; ++i)
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  out.loglik = -0.5 * (static_cast<double>(N) * std::log(2.0 * M_PI) + logdet +
                       y.dot(llt.solve(y)));
  return out;
}

double ess(const Vec& log_weights) {
  const double norm = logsumexp(log_weights);
  if (!std::isfinite(norm)) throw numerical_error("ess: total weight degeneracy");
  double sumsq = 0.0;
  for (Eigen::Index i = 0; i < log_weights.size(); ++i)
    sumsq += std::exp(2.0 * (log_weights[i] - norm));
  return 1.0 / sumsq;
}

std::vector<int> multinomial_resample(const Vec& weights, int n, RngStream& rng) {
  const auto m = weights.size();
  Vec cdf(m);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    acc += weights[i];
    cdf[i] = acc;
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const double u = rng.uniform() * acc;
    const double* lo = std::lower_bound(cdf.data(), cdf.data() + m, u);
    idx[static_cast<std::size_t>(j)] =
        static_cast<int>(std::min<Eigen::Index>(lo - cdf.data(), m - 1));
  }
  return idx;
}

double code_entropy_nats(const CodeMatrix& codes, const Vec& weights) {
  std::unordered_map<std::uint32_t, double> mass;
  mass.reserve(64);
  const int P = static_cast<int>(codes.cols());
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    std::uint32_t bits = 0;
    for (int j = 0; j < P; ++j)
      if (codes(i, j)) bits |= (1u << j);
    mass[bits] += weights[i];
  }
  double total = 0.0;
  for (const auto& [bits, q] : mass) total += q;
  double H = 0.0;
  for (const auto& [bits, q] : mass)
    if (q > 0.0) H -= (q / total) * std::log(q / total);
  return std::max(0.0, H);
}

ParticleCloud rbpf_filter(const AlrnnParams& params, const PalrnnNoise& noise,
                          const Mat& x_window, int n_particles, double tau_ess,
                          std::uint64_t seed) {
  params.validate();
  noise.validate();
  if (n_particles < 2) throw config_error("rbpf_filter: need n_particles >= 2");
  const auto L = x_window.rows() - 1;
  if (L < 1) throw config_error("rbpf_filter: window needs a boundary plus one step");
  const int M = params.M();
  const int N = params.N();
  const int P = params.P;
  if (x_window.cols() != N) throw config_error("rbpf_filter: observation dim mismatch");

  ParticleCloud cloud;
  cloud.n_particles = n_particles;
  cloud.L = static_cast<int>(L);
  cloud.M = M;
  cloud.P = P;
  cloud.x_window = x_window;
  cloud.codes.resize(static_cast<std::size_t>(L));
  cloud.ancestry.resize(static_cast<std::size_t>(L));
  cloud.resampled.assign(static_cast<std::size_t>(L), 0);
  cloud.weight_history.resize(L, n_particles);
  cloud.entropy_nats.resize(L);
  cloud.ess_normalized.resize(L);
  cloud.logz_increments.resize(L);

  // boundary conditioning: every particle starts at the embedded boundary
  // observation; diag covariance, measurement scale on the observed block
  GaussianBelief init;
  init.mean = embed_init(params, x_window.row(0).transpose());
  Vec diag(M);
  for (int i = 0; i < M; ++i)
    diag[i] = i < N ? noise.sigma_obs * noise.sigma_obs
                    : noise.sigma_proc * noise.sigma_proc;
  init.cov = diag.asDiagonal();

  std::vector<GaussianBelief> beliefs(static_cast<std::size_t>(n_particles), init);
  std::vector<GaussianBelief> next(static_cast<std::size_t>(n_particles));
  Vec logw = Vec::Constant(n_particles, -std::log(static_cast<double>(n_particles)));
  std::vector<RngStream> gate_rng;
  gate_rng.reserve(static_cast<std::size_t>(n_particles));
  for (int i = 0; i < n_particles; ++i)
    gate_rng.emplace_back(seed, stream_name("rbpf/gates", static_cast<std::uint64_t>(i)));
  RngStream resample_rng(seed, "rbpf/resample");

  Vec loglik(n_particles);
  for (Eigen::Index s = 0; s < L; ++s) {
    CodeMatrix codes(n_particles, P);
    const Vec x_next = x_window.row(s + 1).transpose();
    par::parallel_for(static_cast<std::size_t>(n_particles), [&](std::size_t i) {
      auto& rng = gate_rng[i];
      const GaussianBelief& b = beliefs[i];
      SwitchingCode c(P);
      for (int j = 0; j < P; ++j) {
        const int idx = M - P + j;
        const double p1 =
            integrated_probit_prob(b.mean[idx], b.cov(idx, idx), noise.sigma_g);
        c[j] = rng.uniform() < p1 ? 1 : 0;
      }
      codes.row(static_cast<Eigen::Index>(i)) = c.transpose();
      const KalmanResult kr = kalman_step(b, c, params, noise, x_next);
      next[i] = kr.belief;
      loglik[static_cast<Eigen::Index>(i)] = kr.loglik;
    });

    // evidence increment uses the pre-update normalized weights
    cloud.logz_increments[s] = logsumexp((logw + loglik).eval());
    logw += loglik;
    const double norm = logsumexp(logw);
    if (!std::isfinite(norm))
      throw numerical_error("rbpf_filter: weight degeneracy at step " +
                            std::to_string(s + 1));
    logw.array() -= norm;

    const Vec w = logw.array().exp();
    cloud.weight_history.row(s) = w.transpose();
    cloud.entropy_nats[s] = code_entropy_nats(codes, w);
    const double ess_val = 1.0 / w.squaredNorm();
    cloud.ess_normalized[s] = ess_val / n_particles;
    cloud.codes[static_cast<std::size_t>(s)] = codes;

    if (ess_val < tau_ess * n_particles) {
      const std::vector<int> anc = multinomial_resample(w, n_particles, resample_rng);
      std::vector<GaussianBelief> reordered(static_cast<std::size_t>(n_particles));
      for (int j = 0; j < n_particles; ++j)
        reordered[static_cast<std::size_t>(j)] = next[static_cast<std::size_t>(anc[static_cast<std::size_t>(j)])];
      beliefs.swap(reordered);
      cloud.ancestry[static_cast<std::size_t>(s)] = anc;
      cloud.resampled[static_cast<std::size_t>(s)] = 1;
      logw.setConstant(-std::log(static_cast<double>(n_particles)));
    } else {
      beliefs.swap(next);
      std::vector<int> identity(static_cast<std::size_t>(n_particles));
      for (int j = 0; j < n_particles; ++j) identity[static_cast<std::size_t>(j)] = j;
      cloud.ancestry[static_cast<std::size_t>(s)] = std::move(identity);
    }
  }

  cloud.final_beliefs = std::move(beliefs);
  cloud.final_log_weights = logw;
  return cloud;
}

namespace {

// Factor for sampling N(0, cov): eigendecomposition with eigenvalues clamped
// at zero, robust to semidefinite smoother covariances.
Mat sampling_factor(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  Vec d = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * d.asDiagonal();
}

Vec sample_gaussian(const Vec& mean, const Mat& factor, RngStream& rng) {
  Vec z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + factor * z;
}

}  // namespace

std::vector<SmoothedDraw> backward_sample(const ParticleCloud& cloud,
                                          const AlrnnParams& params,
                                          const PalrnnNoise& noise, int n_draws,
                                          std::uint64_t seed) {
  const int L = cloud.L;
  const int M = cloud.M;
  const int P = cloud.P;
  const Vec final_w = cloud.final_log_weights.array().exp();

  std::vector<SmoothedDraw> draws(static_cast<std::size_t>(n_draws));
  par::parallel_for(static_cast<std::size_t>(n_draws), [&](std::size_t d) {
    RngStream rng(seed, stream_name("rbpf/smooth", d));

    // terminal particle by final weights
    const double u = rng.uniform();
    int j = 0;
    double acc = 0.0;
    for (; j < cloud.n_particles - 1; ++j) {
      acc += final_w[j];
      if (u < acc) break;
    }

    // ancestral gate path (post-resample index walks back through ancestry)
    CodeMatrix path(L, P);
    int idx = j;
    for (int s = L - 1; s >= 0; --s) {
      const int pre = cloud.ancestry[static_cast<std::size_t>(s)][static_cast<std::size_t>(idx)];
      path.row(s) = cloud.codes[static_cast<std::size_t>(s)].row(pre);
      idx = pre;
    }

    // path-conditioned filtering pass (exact linear-Gaussian)
    std::vector<GaussianBelief> filt(static_cast<std::size_t>(L) + 1);
    GaussianBelief b;
    b.mean = embed_init(params, cloud.x_window.row(0).transpose());
    Vec diag(M);
    const int N = static_cast<int>(cloud.x_window.cols());
    for (int i = 0; i < M; ++i)
      diag[i] = i < N ? noise.sigma_obs * noise.sigma_obs
                      : noise.sigma_proc * noise.sigma_proc;
    b.cov = diag.asDiagonal();
    filt[0] = b;
    for (int s = 0; s < L; ++s) {
      SwitchingCode c = path.row(s).transpose();
      b = kalman_step(b, c, params, noise, cloud.x_window.row(s + 1).transpose())
              .belief;
      filt[static_cast<std::size_t>(s) + 1] = b;
    }

    // backward state sampling under the path-conditioned smoother
    SmoothedDraw draw;
    draw.codes = path;
    draw.states.resize(L + 1, M);
    Vec z = sample_gaussian(filt[static_cast<std::size_t>(L)].mean,
                            sampling_factor(filt[static_cast<std::size_t>(L)].cov), rng);
    draw.states.row(L) = z.transpose();
    const double q = noise.sigma_proc * noise.sigma_proc;
    for (int s = L - 1; s >= 0; --s) {
      const GaussianBelief& f = filt[static_cast<std::size_t>(s)];
      SwitchingCode c = path.row(s).transpose();
      const Mat F = step_jacobian(params, c);
      Mat C = F * f.cov * F.transpose();
      C.diagonal().array() += q;
      Eigen::LDLT<Mat> ldlt(0.5 * (C + C.transpose()).eval());
      const Mat G = ldlt.solve(F * f.cov).transpose();  // P F^T C^{-1}
      const Vec mean = f.mean + G * (z - F * f.mean - params.h);
      Mat IGF = Mat::Identity(M, M) - G * F;
      Mat cov = IGF * f.cov * IGF.transpose() + q * (G * G.transpose());
      cov = 0.5 * (cov + cov.transpose()).eval();
      z = sample_gaussian(mean, sampling_factor(cov), rng);
      draw.states.row(s) = z.transpose();
    }
    draws[d] = std::move(draw);
  });
  return draws;
}

EntropySummary filtering_code_entropy(const ParticleCloud& cloud,
                                      EntropyMode mode) {
  EntropySummary out;
  out.per_step_bits.resize(cloud.L);
  if (mode == EntropyMode::full_code) {
    out.per_step_bits = cloud.entropy_nats / std::log(2.0);
  } else {
    for (int s = 0; s < cloud.L; ++s) {
      const auto& codes = cloud.codes[static_cast<std::size_t>(s)];
      const Vec w = cloud.weight_history.row(s).transpose();
      double H = 0.0;
      for (int j = 0; j < cloud.P; ++j) {
        double p1 = 0.0;
        for (Eigen::Index i = 0; i < codes.rows(); ++i)
          if (codes(i, j)) p1 += w[i];
        if (p1 > 0.0) H -= p1 * std::log(p1);
        if (p1 < 1.0) H -= (1.0 - p1) * std::log(1.0 - p1);
      }
      out.per_step_bits[s] = H / std::log(2.0);
    }
  }
  out.mean_bits = out.per_step_bits.mean();
  return out;
}

void write_rbpf_diagnostics_csv(const std::string& path,
                                const ParticleCloud& cloud) {
  std::ofstream f(path);
  if (!f) throw io_error("write_rbpf_diagnostics_csv: cannot open " + path);
  f << "t,ess_normalized,resampled,entropy_bits,logz_increment\n";
  for (int s = 0; s < cloud.L; ++s)
    f << (s + 1) << "," << format_double(cloud.ess_normalized[s]) << ","
      << int(cloud.resampled[static_cast<std::size_t>(s)]) << ","
      << format_double(cloud.entropy_nats[s] / std::log(2.0)) << ","
      << format_double(cloud.logz_increments[s]) << "\n";
}

}  // namespace switchgeo
