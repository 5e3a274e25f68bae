#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "einn/ode.hpp"

namespace einn {

enum class AdjointScheme {
  /// Reverse sweep through the RK4 stages: the exact gradient of the
  /// trapezoid-discretized loss on the forward grid.
  Discrete,
  /// Backward RK4 solve of a' = -(a^T dpsi/ds + dg/ds), a(T) = 0, on the stored
  /// grid, followed by quadrature of a^T dpsi/dtheta + dg/dtheta.
  Continuous,
};

struct AdjointOptions {
  AdjointScheme scheme = AdjointScheme::Discrete;
  /// Continuous scheme only: if > 0, the parameter integral is estimated from
  /// this many uniformly drawn times (snapped to grid nodes) instead of the
  /// full trapezoid rule.
  int time_samples = 0;
  std::uint64_t sample_seed = 0;
};

/// -(a^T dpsi/ds + dg/ds) at grid time t of a stored trajectory. Throws
/// std::invalid_argument when t is not a grid node.
Eigen::VectorXd adjoint_rhs(const OdeProblem& problem, const Trajectory& traj, double t,
                            const Eigen::VectorXd& a);

/// d loss / d theta for a trajectory produced by rk4_forward with the same
/// problem. Throws std::invalid_argument if the trajectory was produced with
/// different parameters.
Eigen::VectorXd gradient(const OdeProblem& problem, const Trajectory& traj,
                         const AdjointOptions& options = {});

}  // namespace einn
