#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "einn/dynamics.hpp"

namespace einn {

struct DomainBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static DomainBox cube(int dim, double half_width);
  int dim() const { return static_cast<int>(lo.size()); }
};

/// Uniform tensor grid with `per_axis` nodes per axis, endpoints included
/// (d x per_axis^d, first axis fastest).
Eigen::MatrixXd grid_points(const DomainBox& box, int per_axis);

/// Particles representing a hypothesis law at one time; zetas is empty when
/// the law carries no scores.
struct ParticleCloud {
  double t = 0.0;
  Eigen::MatrixXd ys;
  Eigen::MatrixXd zetas;
};

/// batch_N draws from the initial law (with their scores) transported by the
/// field on the RK4 grid with `steps` intervals over [0, T]; one cloud per
/// requested time, each of which must be a grid node.
std::vector<ParticleCloud> evolve_particles(const VelocityField& field, const ProblemSpec& spec,
                                            int batch_N, std::uint64_t seed, int steps,
                                            const std::vector<double>& times);

/// Exact reference samples with exact scores at time t.
ParticleCloud reference_cloud(const ProblemSpec& spec, double t, int count, std::uint64_t seed);

/// Estimate of K * rho at the grid nodes from a particle cloud: score-weighted
/// divergence-form sum for Biot-Savart, kernel mean otherwise. Clouds without
/// scores use the direct kernel for Biot-Savart.
Eigen::MatrixXd cloud_field(const ProblemSpec& spec, const ParticleCloud& cloud,
                            const Eigen::MatrixXd& grid);

struct ErrorValue {
  double value = 0.0;
  int skipped = 0;  // nodes where |K * rho_t| < 1e-12
};

/// Mean over grid nodes of |F(x) - K*rho_t(x)| / |K*rho_t(x)|. Throws
/// std::runtime_error if every node is skipped.
ErrorValue relative_l2_error(const ReferenceSolution& ref, double t, const Eigen::MatrixXd& grid,
                             const Eigen::MatrixXd& field_values);

struct ErrorCurve {
  std::vector<double> times;
  std::vector<double> values;
  DomainBox box;
  int grid_per_axis = 0;
  int skipped = 0;
};

/// Q(t) of a velocity field at the given times (grid nodes of `steps`).
ErrorCurve error_curve(const VelocityField& field, const ProblemSpec& spec, const DomainBox& box,
                       int grid_per_axis, int batch_N, std::uint64_t seed, int steps,
                       const std::vector<double>& times);

/// Q(t) of a list of particle clouds.
ErrorCurve error_curve(const ProblemSpec& spec, const std::vector<ParticleCloud>& clouds,
                       const DomainBox& box, int grid_per_axis);

/// Single-time convenience form.
double relative_l2_error(const VelocityField& field, const ProblemSpec& spec, double t,
                         const DomainBox& box, int grid_per_axis, int batch_N, std::uint64_t seed,
                         int steps);

/// Trapezoidal average of the curve over its time span (the value itself for
/// a single point).
double time_averaged_error(const ErrorCurve& curve);

struct KlCurve {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<int> escaped;  // samples that left the reference support
  int traj_count = 0;
};

/// Penalty contributed by a trajectory outside the reference support.
constexpr double kKlEscapePenalty = 50.0;

/// Plug-in estimate (1/M) sum_j [logdens_j(t) - log rho_t(x_j(t))] over M
/// trajectories started from the initial law.
KlCurve kl_estimate(const VelocityField& field, const ProblemSpec& spec, int traj_count,
                    std::uint64_t seed, int steps, const std::vector<double>& times);

/// Empirical modulated energy between clouds a and b with the Coulomb
/// potential; coincident pairs are excluded from every term.
double modulated_energy(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Same, with b = quad_count fresh reference samples at time t.
double modulated_energy(const Eigen::MatrixXd& a, const ReferenceSolution& ref, double t,
                        int quad_count, std::uint64_t seed);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Evenly spaced grid nodes 0, T/k, ..., T.
std::vector<double> even_times(double horizon, int count);

}  // namespace einn
