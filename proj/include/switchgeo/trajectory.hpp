#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "switchgeo/lorenz.hpp"
#include "switchgeo/numeric.hpp"

namespace switchgeo {

enum class Frame { raw, standardized };

// Per-dimension affine normalization x -> (x - mean) / std.
struct Standardizer {
  Vec mean;
  Vec std;

  static Standardizer identity(int n);
  static Standardizer fit(const Mat& data);  // population std
  Mat apply(const Mat& data) const;
  Mat invert(const Mat& data) const;
};

struct TrajectoryBundle {
  Mat states;        // T x N
  Mat observations;  // T x N
  Standardizer standardizer;
  Frame frame = Frame::raw;
  nlohmann::json meta;  // generation record: params, seeds, burn-in, s_ref, ...

  Eigen::Index T() const { return states.rows(); }
  Eigen::Index dim() const { return states.cols(); }
};

// Simulates T states from z0: RK4 drift plus Euler-Maruyama diffusion scaled
// by the per-coordinate std of a deterministic companion run of equal length.
TrajectoryBundle simulate_lorenz(const Eigen::Vector3d& z0, int T,
                                 const LorenzParams& params,
                                 const NoiseSpec& noise);

// observations = states + sigma_obs * diag(s_train) * eta, in raw coordinates;
// s_train is the per-coordinate std of this bundle's states.
TrajectoryBundle add_observation_noise(const TrajectoryBundle& bundle,
                                       const NoiseSpec& noise);

// Fits per-dimension statistics on the observations and maps both states and
// observations into the standardized frame. Rejects zero-variance dimensions.
TrajectoryBundle standardize(const TrajectoryBundle& bundle);
TrajectoryBundle unstandardize(const TrajectoryBundle& bundle);

struct SaemDataConfig {
  int T = 5000;
  int burn_in = 1000;
  double sigma_obs = 0.085;
  double sigma_proc = 0.0;
  int n_seq = 4;
  std::uint64_t seed = 0;
  LorenzParams params;
};

// n_seq independent sequences, burn-in discarded, observation noise added in
// raw coordinates, then standardized with statistics pooled over all
// sequences and time indices.
std::vector<TrajectoryBundle> make_saem_dataset(const SaemDataConfig& config);

// Persistence: <stem>.bin holds states then observations as row-major
// little-endian float64; <stem>.json is the sidecar header.
void save_bundle(const std::string& stem, const TrajectoryBundle& bundle);
TrajectoryBundle load_bundle(const std::string& stem);
void export_bundle_csv(const std::string& path, const TrajectoryBundle& bundle);

}  // namespace switchgeo
