#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "switchgeo/alrnn.hpp"
#include "switchgeo/fisher.hpp"
#include "switchgeo/trajectory.hpp"

namespace switchgeo {

// KL between Laplace-smoothed joint occupancy histograms over the reference
// bounding box; generated points outside the box land in edge bins.
double d_stsp(const Mat& gen, const Mat& ref, int n_bins = 30,
              double alpha_smooth = 1e-5);

// Benettin QR: lambda_k = mean over post-burn-in steps of log|R_kk| / dt,
// sorted descending. A zero R diagonal yields -inf for that exponent.
std::vector<double> lyapunov_spectrum(const std::vector<Mat>& jacobians,
                                      double dt, int burn_in);

struct QoiConfig {
  int rollout_len = 10000;
  int burn_in = 1000;
  double lambda1_ref = 0.9056;
  GateMode gate_mode = GateMode::hard;
  double sigma_g = 0.0;       // probit mode only
  std::uint64_t seed = 0;
};

struct QoiReport {
  double d_stsp = 0.0;
  double lambda1 = 0.0;
  double lambda1_error = 0.0;
  bool diverged = false;
  int rollout_len = 0;
  int burn_in = 0;
};

// Hard-gated free rollout from embed_init of the first observation; D_stsp in
// raw coordinates after inverting the standardizer; LE from closed-form
// Jacobians along the rollout.
QoiReport qoi_eval(const AlrnnParams& params, const TrajectoryBundle& reference,
                   const QoiConfig& config);

// g_Q = log10( tr(I_itf) / (tr(I_obs)/T) ).
double curvature_gap(const CurvatureMatrix& i_itf_per_step,
                     const CurvatureMatrix& i_obs_summed, int T);

struct MismatchReport {
  double g_q = 0.0;
  double delta_logdet = 0.0;                  // decades
  std::map<double, double> gamma_quantiles;   // alpha -> q_alpha of log10(gamma)
  double ov_k = 0.0;
  double mu = 0.0;  // ridge actually applied
  int k = 0;
  Vec log10_gamma;  // full spectrum, ascending
};

// Ridge-stabilized matrix-aware mismatch summaries between the per-step ITF
// Fisher and the per-step observed information.
MismatchReport matrix_diagnostics(const CurvatureMatrix& i_itf_per_step,
                                  const CurvatureMatrix& i_obs_summed, int T,
                                  double epsilon = 1e-6, int k = 50,
                                  const std::vector<double>& quantiles = {0.1, 0.5,
                                                                          0.9});

struct RankAssociation {
  int n = 0;
  double spearman_r = 0.0;
  double p_value = 1.0;
  double partial_r = 0.0;  // after rank-residualizing both against the covariate
  double ci_lo = 0.0;      // bootstrap percentile 95% CI
  double ci_hi = 0.0;
};

std::vector<double> mid_ranks(const std::vector<double>& values);

double spearman(const std::vector<double>& x, const std::vector<double>& y);

RankAssociation rank_association(const std::vector<double>& h_values,
                                 const std::vector<double>& g_values,
                                 const std::vector<double>& covariate,
                                 int n_bootstrap = 2000, std::uint64_t seed = 0);

}  // namespace switchgeo
