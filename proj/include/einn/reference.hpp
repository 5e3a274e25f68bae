#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace einn {

enum class ReferenceKind { LambOseen, Barenblatt, OrnsteinUhlenbeck };

/// Closed-form solutions used as ground truth.
///
/// LambOseen: d = 2, Gaussian vorticity with per-coordinate variance
///   2 nu (t + t0) and the Oseen swirl as K * rho.
/// Barenblatt: d = 3, nu = 0, uniform density 1/(t + t0) on the ball of radius
///   (3 (t + t0) / 4 pi)^(1/3), Coulomb field.
/// OrnsteinUhlenbeck: K = 0, V = stiffness |x|^2 / 2, centred Gaussian with
///   per-coordinate variance nu/k + (sigma0^2 - nu/k) exp(-2 k t).
struct ReferenceSolution {
  ReferenceKind kind = ReferenceKind::LambOseen;
  int dim = 2;
  double nu = 0.1;
  double t0 = 0.1;
  double stiffness = 0.0;
  double sigma0 = 1.0;

  static ReferenceSolution lamb_oseen(double nu = 0.1, double t0 = 0.1);
  static ReferenceSolution barenblatt(double t0 = 0.1);
  static ReferenceSolution ornstein_uhlenbeck(int dim, double nu, double stiffness, double sigma0);

  void validate() const;

  /// Per-coordinate variance (Gaussian references).
  double variance(double t) const;
  /// Support radius (Barenblatt).
  double radius(double t) const;
};

const char* reference_name(ReferenceKind kind);

double density(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x);
/// -inf outside the support.
double log_density(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x);

/// True when x lies strictly inside the support, at least `margin` away from
/// its boundary (always true for the Gaussian references).
bool in_support(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x,
                double margin = 0.0);

/// grad log rho; std::domain_error on or outside the Barenblatt boundary.
Eigen::VectorXd score(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x);

/// Closed-form K * rho_t (zero for OU).
Eigen::VectorXd convolution_field(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x);

/// -grad V + K * rho_t - nu grad log rho_t. For Barenblatt nu = 0, so the field
/// is the Coulomb field and is defined on the whole space.
Eigen::VectorXd underlying_velocity(const ReferenceSolution& ref, double t,
                                    const Eigen::VectorXd& x);

/// Spatial Jacobian of underlying_velocity.
Eigen::MatrixXd underlying_jacobian(const ReferenceSolution& ref, double t,
                                    const Eigen::VectorXd& x);

/// Newtonian potential psi_t with -grad psi_t = K * rho_t (Barenblatt).
double barenblatt_potential(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x);

/// count i.i.d. draws from rho_t as columns of a d x count matrix.
Eigen::MatrixXd sample(const ReferenceSolution& ref, double t, int count, std::uint64_t seed);

/// Score of every column of xs.
Eigen::MatrixXd score_batch(const ReferenceSolution& ref, double t, const Eigen::MatrixXd& xs);

}  // namespace einn
