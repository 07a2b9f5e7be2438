#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "switchgeo/alrnn.hpp"
#include "switchgeo/errors.hpp"
#include "switchgeo/numeric.hpp"
#include "switchgeo/rng.hpp"

namespace switchgeo {

// Isotropic PAL-RNN noise: Q = sigma_proc^2 I_M, R = sigma_obs^2 I_N, probit
// gate scale sigma_g.
struct PalrnnNoise {
  double sigma_proc = 0.1;
  double sigma_obs = 0.1;
  double sigma_g = 0.1;

  void validate() const {
    if (!(sigma_proc > 0.0) || !(sigma_obs > 0.0) || !(sigma_g > 0.0))
      throw config_error("PalrnnNoise: all scales must be > 0");
  }
};

struct GaussianBelief {
  Vec mean;  // M
  Mat cov;   // M x M
};

// P(c = 1) when the gated coordinate has marginal N(mu, nu) under the belief:
// the probit link averaged analytically, Phi(mu / sqrt(nu + sigma_g^2)).
double integrated_probit_prob(double mu, double nu, double sigma_g);

// Kalman predict with F = A + W D(c) and Q, then update against x_next with
// H = B, R. Joseph-form covariance update. Returns the one-step predictive
// log-likelihood log N(x_next; B m^-, B P^- B^T + R).
struct KalmanResult {
  GaussianBelief belief;
  double loglik = 0.0;
};

KalmanResult kalman_step(const GaussianBelief& belief, const SwitchingCode& code,
                         const AlrnnParams& params, const PalrnnNoise& noise,
                         const Vec& x_next);

// 1 / sum w_i^2 over normalized weights, computed through log-sum-exp.
double ess(const Vec& log_weights);

// n i.i.d. categorical draws from normalized weights.
std::vector<int> multinomial_resample(const Vec& weights, int n, RngStream& rng);

// Entropy of the weighted empirical distribution over full codes, in nats;
// 0 log 0 := 0.
double code_entropy_nats(const CodeMatrix& codes, const Vec& weights);

struct ParticleCloud {
  int n_particles = 0;
  int L = 0;  // transitions in the window
  int M = 0;
  int P = 0;
  Mat x_window;  // (L+1) x N, boundary observation first
  std::vector<GaussianBelief> final_beliefs;
  Vec final_log_weights;                 // normalized
  std::vector<CodeMatrix> codes;         // per step: N_p x P, pre-resample index
  std::vector<std::vector<int>> ancestry;  // per step: N_p (identity if no resample)
  std::vector<char> resampled;           // per step
  Mat weight_history;                    // L x N_p, post-update pre-resample
  Vec entropy_nats;                      // per step, full-code filtering entropy
  Vec ess_normalized;                    // per step, ESS_t / N_p
  Vec logz_increments;                   // per step

  double log_evidence() const { return logz_increments.sum(); }
};

// Rao-Blackwellized bootstrap filter over gate paths. Particles start at
// embed_init(x_window[0]) with diag covariance (sigma_obs^2 on the observed
// block, sigma_proc^2 elsewhere); gates are proposed from the factorized
// integrated-probit rule; multinomial resampling when ESS < tau_ess * N_p.
ParticleCloud rbpf_filter(const AlrnnParams& params, const PalrnnNoise& noise,
                          const Mat& x_window, int n_particles, double tau_ess,
                          std::uint64_t seed);

struct SmoothedDraw {
  CodeMatrix codes;  // (T-1) x P
  Mat states;        // T x M
};

// Draws smoothed (code, state) trajectories: terminal particle chosen by the
// final weights, gate path recovered by ancestry tracing, states sampled
// backward under the path-conditioned linear-Gaussian smoother.
std::vector<SmoothedDraw> backward_sample(const ParticleCloud& cloud,
                                          const AlrnnParams& params,
                                          const PalrnnNoise& noise, int n_draws,
                                          std::uint64_t seed);

enum class EntropyMode { full_code, bit_marginal };

struct EntropySummary {
  Vec per_step_bits;
  double mean_bits = 0.0;
};

// Filtering switching-code entropy per transition and its time average in
// bits. full_code is the default; bit_marginal is the cheaper proxy.
EntropySummary filtering_code_entropy(const ParticleCloud& cloud,
                                      EntropyMode mode = EntropyMode::full_code);

// Per-window diagnostics CSV: t, ess_normalized, resampled, entropy_bits,
// logz_increment.
void write_rbpf_diagnostics_csv(const std::string& path,
                                const ParticleCloud& cloud);

}  // namespace switchgeo
