#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "switchgeo/errors.hpp"
#include "switchgeo/numeric.hpp"

namespace switchgeo {

using SwitchingCode = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;
using CodeMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// z_{t+1} = A z_t + W phi*(z_t) + h with A = diag(a); phi* is identity on the
// first M-P coordinates and ReLU on the last P. E embeds the first
// observation into the latent space; B = [I_N 0] reads observations back out.
struct AlrnnParams {
  Vec a;  // M, diagonal of A
  Mat W;  // M x M
  Vec h;  // M
  Mat E;  // M x N
  int P = 1;

  int M() const { return static_cast<int>(a.size()); }
  int N() const { return static_cast<int>(E.cols()); }
  void validate() const;

  Vec flatten_drift() const;  // [a; vec(W) row-major; h], length M + M^2 + M
};

Vec phi_star(const Vec& z, int P);

Vec alrnn_step(const AlrnnParams& params, const Vec& z);

// bit j = 1 iff z_{M-P+j} > 0 (strict; exact zeros gate off)
SwitchingCode switching_code(const Vec& z, int P);

Mat gate_matrix(const SwitchingCode& code, int M);

std::uint32_t pack_code(const SwitchingCode& code);
SwitchingCode unpack_code(std::uint32_t bits, int P);

// z1 = E x1 with the observed block overwritten so B z1 = x1 exactly.
Vec embed_init(const AlrnnParams& params, const Vec& x1);

// Observed-block overwrite: z + B^T (x - B z).
Vec force_observed(const Vec& z, const Vec& x);

// A + W D(c); ReLU-kink subgradient zero.
Mat step_jacobian(const AlrnnParams& params, const SwitchingCode& code);

struct RolloutRecord {
  Mat latents;             // T x M, states produced by the map (pre-forcing)
  CodeMatrix codes;        // (T-1) x P, from the state actually fed to the map
  Mat predictions;         // (T-1) x N, B z_{t+1}
  std::vector<char> forced_mask;  // length T, true at t in {tau, 2tau, ...} (1-based)
  std::optional<int> diverged_at;  // 1-based step index where the state blew up
};

// Forced rollout: z1 from embed_init(x1); at forcing times the observed block
// is overwritten by the data before stepping.
RolloutRecord itf_rollout(const AlrnnParams& params, const Mat& x, int tau);

enum class GateMode { hard, probit };

struct FreeRolloutConfig {
  GateMode gate_mode = GateMode::hard;
  double sigma_g = 0.0;    // probit mode only
  double sigma_proc = 0.0; // 0 = deterministic
  std::uint64_t seed = 0;
};

// Free-running rollout for T steps from z1. Aborts (diverged_at set, record
// truncated) when any |z_i| exceeds 1e8 or goes non-finite.
RolloutRecord free_rollout(const AlrnnParams& params, const Vec& z1, int T,
                           const FreeRolloutConfig& config);

// Checkpoint: <stem>.json header {M, P, N, seeds, meta, hash} plus <stem>.bin
// with a, W (row-major), h, E (row-major) as little-endian float64.
std::uint64_t checkpoint_hash(const AlrnnParams& params);
void save_checkpoint(const std::string& stem, const AlrnnParams& params,
                     const nlohmann::json& meta);

struct Checkpoint {
  AlrnnParams params;
  nlohmann::json meta;
  std::uint64_t hash = 0;
};

Checkpoint load_checkpoint(const std::string& stem);

}  // namespace switchgeo
