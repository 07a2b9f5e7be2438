#pragma once

#include <cstdint>

#include "switchgeo/errors.hpp"
#include "switchgeo/numeric.hpp"

namespace switchgeo {

// Lorenz-63 vector field parameters; defaults are the chaotic setting.
struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  double dt = 0.01;

  void validate() const {
    if (!(dt > 0.0)) throw config_error("LorenzParams: dt must be > 0");
  }
};

struct NoiseSpec {
  double sigma_proc = 0.0;  // standardized-coordinate process-noise scale
  double sigma_obs = 0.0;   // standardized-coordinate observation-noise scale
  std::uint64_t seed = 0;

  void validate() const {
    if (sigma_proc < 0.0 || sigma_obs < 0.0)
      throw config_error("NoiseSpec: noise scales must be >= 0");
  }
};

Eigen::Vector3d lorenz_field(const Eigen::Vector3d& z, const LorenzParams& p);

// One classical RK4 step of the Lorenz field with step p.dt.
Eigen::Vector3d lorenz_step_rk4(const Eigen::Vector3d& z, const LorenzParams& p);

}  // namespace switchgeo
