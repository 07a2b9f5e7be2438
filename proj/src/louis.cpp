#include "switchgeo/louis.hpp"

#include <cmath>

#include "switchgeo/parallel.hpp"

namespace switchgeo {

namespace {

// Per-step moment accumulators; the p x p assembly happens once at the end.
// Only same-output-row blocks are nonzero, so second moments reduce to
// sums over t of z, z_i^2, z_i * g^T, g, g g^T with g = D(c_t) z_t.
struct CompMoments {
  Vec saa;   // sum z_i^2
  Mat saw;   // sum z g^T
  Vec sa;    // sum z
  Mat sww;   // sum g g^T
  Vec sg;    // sum g
  double count = 0.0;

  explicit CompMoments(int M)
      : saa(Vec::Zero(M)), saw(Mat::Zero(M, M)), sa(Vec::Zero(M)),
        sww(Mat::Zero(M, M)), sg(Vec::Zero(M)) {}
};

CompMoments accumulate_moments(const SmoothedDraw& draw, int P) {
  const auto T = draw.states.rows();
  const int M = static_cast<int>(draw.states.cols());
  CompMoments mom(M);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const Vec z = draw.states.row(t).transpose();
    Vec g = z;
    for (int j = 0; j < P; ++j)
      if (!draw.codes(t, j)) g[M - P + j] = 0.0;
    mom.saa += z.cwiseProduct(z);
    mom.saw += z * g.transpose();
    mom.sa += z;
    mom.sww += g * g.transpose();
    mom.sg += g;
  }
  mom.count = static_cast<double>(T - 1);
  return mom;
}

Mat assemble_info(const CompMoments& mom, double inv_q) {
  const int M = static_cast<int>(mom.sa.size());
  const Eigen::Index p = 2 * M + static_cast<Eigen::Index>(M) * M;
  Mat info = Mat::Zero(p, p);
  const Eigen::Index hoff = M + static_cast<Eigen::Index>(M) * M;
  for (int i = 0; i < M; ++i) {
    const Eigen::Index woff = M + static_cast<Eigen::Index>(i) * M;
    info(i, i) = mom.saa[i] * inv_q;
    info.block(i, woff, 1, M) = inv_q * mom.saw.row(i);
    info.block(woff, i, M, 1) = inv_q * mom.saw.row(i).transpose();
    info(i, hoff + i) = mom.sa[i] * inv_q;
    info(hoff + i, i) = mom.sa[i] * inv_q;
    info.block(woff, woff, M, M) = inv_q * mom.sww;
    info.block(woff, hoff + i, M, 1) = inv_q * mom.sg;
    info.block(hoff + i, woff, 1, M) = inv_q * mom.sg.transpose();
    info(hoff + i, hoff + i) = mom.count * inv_q;
  }
  return info;
}

}  // namespace

Vec complete_data_score(const SmoothedDraw& draw, const AlrnnParams& params,
                        const PalrnnNoise& noise) {
  const auto T = draw.states.rows();
  const int M = params.M();
  const int P = params.P;
  const double inv_q = 1.0 / (noise.sigma_proc * noise.sigma_proc);

  Vec s_a = Vec::Zero(M), s_h = Vec::Zero(M);
  Mat s_w = Mat::Zero(M, M);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const Vec z = draw.states.row(t).transpose();
    Vec g = z;
    for (int j = 0; j < P; ++j)
      if (!draw.codes(t, j)) g[M - P + j] = 0.0;
    const Vec mean = params.a.cwiseProduct(z) + params.W * g + params.h;
    const Vec q = inv_q * (draw.states.row(t + 1).transpose() - mean);
    s_a += z.cwiseProduct(q);
    s_w += q * g.transpose();
    s_h += q;
  }

  Vec score(2 * M + static_cast<Eigen::Index>(M) * M);
  score.head(M) = s_a;
  for (int i = 0; i < M; ++i)
    score.segment(M + static_cast<Eigen::Index>(i) * M, M) = s_w.row(i).transpose();
  score.tail(M) = s_h;
  return score;
}

CurvatureMatrix complete_data_info(const SmoothedDraw& draw,
                                   const AlrnnParams& params,
                                   const PalrnnNoise& noise) {
  const double inv_q = 1.0 / (noise.sigma_proc * noise.sigma_proc);
  CurvatureMatrix out;
  out.entries = assemble_info(accumulate_moments(draw, params.P), inv_q);
  out.per_step_normalized = false;
  return out;
}

LouisEstimate louis_observed_info(const std::vector<SmoothedDraw>& draws,
                                  const AlrnnParams& params,
                                  const PalrnnNoise& noise) {
  const auto S = draws.size();
  if (S < 2)
    throw config_error("louis_observed_info: need at least 2 draws for the covariance");
  const int M = params.M();
  const Eigen::Index p = 2 * M + static_cast<Eigen::Index>(M) * M;

  std::vector<Vec> scores(S);
  std::vector<CompMoments> moments(S, CompMoments(M));
  par::parallel_for(S, [&](std::size_t i) {
    scores[i] = complete_data_score(draws[i], params, noise);
    moments[i] = accumulate_moments(draws[i], params.P);
  });

  const double inv_q = 1.0 / (noise.sigma_proc * noise.sigma_proc);
  CompMoments mean_mom(M);
  Vec mean_score = Vec::Zero(p);
  for (std::size_t i = 0; i < S; ++i) {  // fixed reduction order
    mean_mom.saa += moments[i].saa;
    mean_mom.saw += moments[i].saw;
    mean_mom.sa += moments[i].sa;
    mean_mom.sww += moments[i].sww;
    mean_mom.sg += moments[i].sg;
    mean_mom.count += moments[i].count;
    mean_score += scores[i];
  }
  const double inv_s = 1.0 / static_cast<double>(S);
  mean_mom.saa *= inv_s;
  mean_mom.saw *= inv_s;
  mean_mom.sa *= inv_s;
  mean_mom.sww *= inv_s;
  mean_mom.sg *= inv_s;
  mean_mom.count *= inv_s;
  mean_score *= inv_s;

  Mat cov = Mat::Zero(p, p);
  for (std::size_t i = 0; i < S; ++i) {
    const Vec d = scores[i] - mean_score;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(d, 1.0);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(S - 1);

  LouisEstimate est;
  est.n_draws = static_cast<int>(S);
  est.T = static_cast<int>(draws[0].states.rows());
  est.e_i_comp.entries = assemble_info(mean_mom, inv_q);
  est.e_i_comp.per_step_normalized = false;
  est.i_miss.entries = cov;
  est.i_miss.per_step_normalized = false;
  est.i_obs.entries = est.e_i_comp.entries - cov;
  est.i_obs.per_step_normalized = false;
  est.e_i_comp.symmetrize();
  est.i_miss.symmetrize();
  est.i_obs.symmetrize();
  return est;
}

double enumerate_marginal_loglik(const AlrnnParams& params,
                                 const PalrnnNoise& noise, const Mat& x_window) {
  params.validate();
  noise.validate();
  const auto L = x_window.rows() - 1;
  const int P = params.P;
  if (L < 1) throw config_error("enumerate_marginal_loglik: empty window");
  if (P * L > 20)
    throw config_error("enumerate_marginal_loglik: P*(T-1) budget exceeded");
  const int M = params.M();
  const int N = params.N();

  GaussianBelief init;
  init.mean = embed_init(params, x_window.row(0).transpose());
  Vec diag(M);
  for (int i = 0; i < M; ++i)
    diag[i] = i < N ? noise.sigma_obs * noise.sigma_obs
                    : noise.sigma_proc * noise.sigma_proc;
  init.cov = diag.asDiagonal();

  std::vector<double> leaf_logs;
  leaf_logs.reserve(1ull << static_cast<unsigned>(P * L));

  // depth-first over code paths, carrying the path-conditional belief
  struct Frame {
    GaussianBelief belief;
    Eigen::Index depth;
    double logp;
  };
  std::vector<Frame> stack;
  stack.push_back({init, 0, 0.0});
  while (!stack.empty()) {
    Frame fr = std::move(stack.back());
    stack.pop_back();
    if (fr.depth == L) {
      leaf_logs.push_back(fr.logp);
      continue;
    }
    const Vec x_next = x_window.row(fr.depth + 1).transpose();
    for (std::uint32_t bits = 0; bits < (1u << static_cast<unsigned>(P)); ++bits) {
      const SwitchingCode c = unpack_code(bits, P);
      double log_gate = 0.0;
      for (int j = 0; j < P; ++j) {
        const int idx = M - P + j;
        const double p1 = integrated_probit_prob(fr.belief.mean[idx],
                                                 fr.belief.cov(idx, idx),
                                                 noise.sigma_g);
        const double pj = c[j] ? p1 : 1.0 - p1;
        log_gate += std::log(pj);
      }
      if (!std::isfinite(log_gate)) continue;  // zero-probability branch
      const KalmanResult kr = kalman_step(fr.belief, c, params, noise, x_next);
      stack.push_back({kr.belief, fr.depth + 1, fr.logp + log_gate + kr.loglik});
    }
  }
  return logsumexp(leaf_logs);
}

MirResult mir(const LouisEstimate& estimate) {
  const double tr_comp = estimate.e_i_comp.trace();
  if (!(tr_comp > 0.0))
    throw numerical_error("mir: complete-data trace must be positive");
  MirResult out;
  out.value = 1.0 - estimate.i_obs.trace() / tr_comp;
  out.negative_clipped = out.value < 0.0;
  return out;
}

}  // namespace switchgeo
