#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "switchgeo/errors.hpp"
#include "switchgeo/numeric.hpp"

namespace switchgeo {

// Two-regime scalar switching AR(1) with a probit gate:
// c_t | x_t ~ Bernoulli(Phi(x_t / sigma_g)), x_{t+1} ~ N(a_{c_t} x_t, sigma^2).
struct ToyModel {
  double a0 = 0.90;
  double a1 = 0.60;
  double sigma = 0.15;
  double sigma_g = 0.1;

  void validate() const {
    if (!(sigma > 0.0) || !(sigma_g > 0.0))
      throw config_error("ToyModel: sigma and sigma_g must be > 0");
  }
};

Vec simulate_toy(const ToyModel& model, int T, std::uint64_t seed);

// Closed-form gate posterior p_t = P(c_t = 1 | x_t, x_{t+1}).
double toy_gate_posterior(double x_t, double x_next, const ToyModel& model);

struct ToyLouis {
  Eigen::Matrix2d i_obs;      // over (a0, a1), summed over t
  Eigen::Matrix2d e_i_comp;
  Eigen::Matrix2d i_miss;
  double mean_entropy_bits = 0.0;
  double mir = 0.0;
};

// Per-step two-state Louis decomposition with closed-form posteriors, summed
// over t; entropy is the time-averaged Bernoulli entropy in bits.
ToyLouis toy_louis(const Vec& x, const ToyModel& model);

struct ToySweepConfig {
  double a0 = 0.90;
  double a1 = 0.60;
  double sigma = 0.15;
  int T = 600;
  int n_seeds = 20;
  int n_sigma_g = 25;
  double sigma_g_min = 0.03;
  double sigma_g_max = 0.9;
  std::uint64_t seed = 0;
};

struct ToyRow {
  double sigma_g;
  int seed;
  double mean_entropy_bits;
  double mir;
  double log10_tr_iobs;
};

struct ToySummaryRow {
  double sigma_g;
  double mean_entropy_bits, sem_entropy_bits;
  double mean_mir, sem_mir;
  double mean_log10_tr, sem_log10_tr;
};

struct ToySweepResult {
  std::vector<double> sigma_g_grid;
  std::vector<ToyRow> rows;              // n_sigma_g * n_seeds
  std::vector<ToySummaryRow> summary;    // per grid point, mean +- SEM
};

ToySweepResult toy_experiment(const ToySweepConfig& config);

void write_toy_csv(const std::string& path, const ToySweepResult& result);

}  // namespace switchgeo
