#pragma once

#include <vector>

#include "switchgeo/fisher.hpp"
#include "switchgeo/rbpf.hpp"

namespace switchgeo {

// Complete-data score for theta = [a; vec(W); h]: sum_t G_t^T Q^{-1} r_t with
// r_t = z_{t+1} - (A + W D(c_t)) z_t - h and G_t = [diag(z_t) | I (x) (D z_t)^T | I].
Vec complete_data_score(const SmoothedDraw& draw, const AlrnnParams& params,
                        const PalrnnNoise& noise);

// sum_t G_t^T Q^{-1} G_t; exact since the transition mean is linear in theta.
CurvatureMatrix complete_data_info(const SmoothedDraw& draw,
                                   const AlrnnParams& params,
                                   const PalrnnNoise& noise);

struct LouisEstimate {
  CurvatureMatrix i_obs;
  CurvatureMatrix e_i_comp;
  CurvatureMatrix i_miss;
  int n_draws = 0;
  int T = 0;  // window length (states)
};

// Monte Carlo Louis estimator: empirical mean of complete-data information
// minus the empirical covariance (n-1 denominator) of the summed scores.
LouisEstimate louis_observed_info(const std::vector<SmoothedDraw>& draws,
                                  const AlrnnParams& params,
                                  const PalrnnNoise& noise);

// Exact log marginal likelihood of the window by recursion over the code
// tree, carrying the path-conditional Gaussian belief and the integrated-
// probit gate probabilities. Budget: P * (T-1) <= 20.
double enumerate_marginal_loglik(const AlrnnParams& params,
                                 const PalrnnNoise& noise, const Mat& x_window);

struct MirResult {
  double value = 0.0;
  bool negative_clipped = false;  // value < 0 can occur from MC noise
};

// Missing-information ratio 1 - tr(I_obs) / tr(E[I_comp]).
MirResult mir(const LouisEstimate& estimate);

}  // namespace switchgeo
