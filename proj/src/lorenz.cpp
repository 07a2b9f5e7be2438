#include "switchgeo/lorenz.hpp"

namespace switchgeo {

Eigen::Vector3d lorenz_field(const Eigen::Vector3d& z, const LorenzParams& p) {
  return {p.sigma * (z[1] - z[0]),
          z[0] * (p.rho - z[2]) - z[1],
          z[0] * z[1] - p.beta * z[2]};
}

Eigen::Vector3d lorenz_step_rk4(const Eigen::Vector3d& z, const LorenzParams& p) {
  const double dt = p.dt;
  const Eigen::Vector3d k1 = lorenz_field(z, p);
  const Eigen::Vector3d k2 = lorenz_field(z + 0.5 * dt * k1, p);
  const Eigen::Vector3d k3 = lorenz_field(z + 0.5 * dt * k2, p);
  const Eigen::Vector3d k4 = lorenz_field(z + dt * k3, p);
  return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace switchgeo
