#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "switchgeo/alrnn.hpp"

namespace switchgeo {

// Symmetric p x p information matrix over theta = [a; vec(W) row-major; h].
struct CurvatureMatrix {
  Mat entries;
  bool per_step_normalized = false;

  int p() const { return static_cast<int>(entries.rows()); }
  double trace() const { return entries.trace(); }
  void symmetrize() { entries = 0.5 * (entries + entries.transpose()).eval(); }
  double min_eigenvalue() const;
};

// d F / d theta at state z_bar: [diag(z_bar) | I_M (x) phi*(z_bar)^T | I_M].
Mat param_jacobian_blocks(const Vec& z_bar, int P);

// S_{t+1} = J_t (forced ? (I - B^T B) S_t : S_t) + V_t.
Mat sensitivity_step(const Mat& S_t, const AlrnnParams& params,
                     const Vec& z_bar_t, const SwitchingCode& code_t,
                     bool forced);

// Per-step ITF-aligned Gauss-Newton/Fisher matrix along the forced rollout:
// (1/((T-1) sigma_obs^2)) sum_t (B S_{t+1})^T (B S_{t+1}).
CurvatureMatrix itf_fisher(const AlrnnParams& params, const Mat& x, int tau,
                           double sigma_obs);

// Mean of per-sequence Fisher matrices; sequences evaluated in parallel and
// summed in index order.
CurvatureMatrix itf_fisher_batch(const AlrnnParams& params,
                                 const std::vector<Mat>& sequences, int tau,
                                 double sigma_obs);

// <stem>.bin row-major float64 + <stem>.json sidecar
void save_matrix(const std::string& stem, const CurvatureMatrix& m,
                 const nlohmann::json& extra_meta);
CurvatureMatrix load_matrix(const std::string& stem);

}  // namespace switchgeo
