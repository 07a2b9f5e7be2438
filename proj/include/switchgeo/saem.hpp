#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "switchgeo/alrnn.hpp"
#include "switchgeo/rbpf.hpp"

namespace switchgeo {

enum class SaemMode { baseline, calib, full };

SaemMode saem_mode_from_string(const std::string& s);
std::string to_string(SaemMode mode);

struct SaemConfig {
  int window_len = 200;
  int iterations = 8;
  int windows_per_iter = 80;
  double ridge = 1e-2;         // lambda_R
  double blend_alpha = 0.25;   // alpha_M
  int n_particles = 256;
  int n_smooth = 8;            // S
  double tau_ess = 0.5;
  double sigma_g = 0.7;        // fixed, never updated
  double sigma_min = 1e-4;
  SaemMode mode = SaemMode::full;
  int heldout_windows = 120;
  std::uint64_t seed = 0;

  void validate() const;
};

struct WindowIndex {
  int seq = 0;
  int start = 0;  // 0-based row of the boundary observation; t_k = start + 1
};

struct WindowSplit {
  std::vector<WindowIndex> train;
  std::vector<WindowIndex> heldout;
};

// Non-overlapping stride-L windows t_k = 1 + (k-1)L with t_k + L <= T; the
// held-out set takes the trailing windows of each sequence up to the
// configured count, the remainder train.
WindowSplit make_windows(const std::vector<Mat>& sequences, int L,
                         int heldout_count);

Mat window_block(const Mat& sequence, const WindowIndex& w, int L);

// Per-row normal-equation accumulators with features [z_{t,i}; D(c_t) z_t; 1]
// plus residual sums for the noise M-step. Additive across draws and windows.
struct SuffStats {
  int M = 0;
  std::vector<Mat> C;   // per row: (M+2) x (M+2), sum phi phi^T
  std::vector<Vec> b;   // per row: (M+2), sum phi z'
  Vec szz;              // per row: sum z'^2
  double obs_sse = 0.0;       // sum ||x - B z||^2 over scored observations
  long long n_transitions = 0;
  long long n_observations = 0;  // scored scalar count / N
  double n_pairs = 0.0;          // (window, draw) pairs accumulated

  static SuffStats zeros(int M);
  void add(const SuffStats& other);
};

SuffStats window_suff_stats(const std::vector<SmoothedDraw>& draws,
                            const Mat& x_window);

struct SaemParams {
  AlrnnParams params;
  PalrnnNoise noise;
};

// Ridge-regularized M-step: drift rows solved per row under `full`, noise
// scales from mean squared residuals clamped below at sigma_min.
SaemParams m_step(const SuffStats& stats, const SaemParams& current,
                  const SaemConfig& config);

// theta' = (1 - alpha) theta + alpha theta~ on the blocks the mode updates.
SaemParams blend(const SaemParams& current, const SaemParams& provisional,
                 double alpha_m, SaemMode mode);

struct SaemIterLog {
  int iter = 0;
  double mean_train_logz_per_step_dim = 0.0;
  double sigma_proc = 0.0;
  double sigma_obs = 0.0;
  int failed_windows = 0;
};

struct SaemResult {
  SaemParams fitted;
  std::vector<SaemIterLog> log;
};

SaemResult saem_run(const SaemParams& init,
                    const std::vector<Mat>& sequences,
                    const SaemConfig& config);

struct EvidenceResult {
  double mean = 0.0;  // mean over windows of log Z / (L * N)
  std::vector<double> per_window;
};

EvidenceResult heldout_evidence(const SaemParams& model,
                                const std::vector<Mat>& sequences,
                                const std::vector<WindowIndex>& heldout, int L,
                                int n_particles, double tau_ess,
                                std::uint64_t seed);

void write_saem_log_csv(const std::string& path,
                        const std::vector<SaemIterLog>& log);

}  // namespace switchgeo
