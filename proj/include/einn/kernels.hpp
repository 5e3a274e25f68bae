#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace einn {

enum class KernelKind { Zero, Coulomb, BiotSavart };

struct KernelSpec {
  KernelKind kind = KernelKind::Zero;
  int dim = 2;
  /// Minimum pair distance used when evaluating the Coulomb kernel.
  double clamp_eps = 1e-4;

  static KernelSpec zero(int dim) { return {KernelKind::Zero, dim, 1e-4}; }
  static KernelSpec coulomb(int dim, double clamp_eps = 1e-4) {
    return {KernelKind::Coulomb, dim, clamp_eps};
  }
  static KernelSpec biot_savart() { return {KernelKind::BiotSavart, 2, 1e-4}; }

  /// Throws std::invalid_argument for Biot-Savart with dim != 2, Coulomb with
  /// dim < 2, or a non-positive clamp.
  void validate() const;
};

const char* kernel_name(KernelKind kind);

/// Surface area of the unit sphere in R^d, 2 pi^(d/2) / Gamma(d/2).
double unit_sphere_area(int d);

/// Coulomb potential g; throws std::domain_error at the origin.
double coulomb_g(int d, const Eigen::VectorXd& x);

/// K = -grad g. Inside the clamp radius the kernel is evaluated at the point
/// rescaled to norm clamp_eps (at the origin itself it returns zero) and the
/// global clamp counter is incremented.
Eigen::VectorXd coulomb_K(int d, const Eigen::VectorXd& x, double clamp_eps = 1e-4);

/// (1/2pi) x_perp / |x|^2; throws std::domain_error at the origin.
Eigen::Vector2d biot_savart_K(const Eigen::Vector2d& x);

/// (1/2pi) diag(-atan(x1/x2), atan(x2/x1)). On an axis the affected entry takes
/// the atan(+-inf) = +-pi/2 limit; at the origin both entries are zero.
Eigen::Matrix2d biot_savart_U(const Eigen::Vector2d& x);

/// Clamp-event diagnostics (process wide, atomically updated).
std::uint64_t clamp_events();
void reset_clamp_events();

/// Monte-Carlo estimate of K * rho at every column of xs (d x B) from particles
/// ys (d x N). Coulomb: mean of K(x - y_i). Biot-Savart: mean of U(x - y_i) zeta_i,
/// zetas (d x N) required. Particles that coincide exactly with x are skipped and
/// the mean is taken over the remaining ones.
Eigen::MatrixXd conv_estimate(const KernelSpec& spec, const Eigen::MatrixXd& xs,
                              const Eigen::MatrixXd& ys, const Eigen::MatrixXd* zetas);

/// Single-point convenience wrapper.
Eigen::VectorXd conv_estimate(const KernelSpec& spec, const Eigen::VectorXd& x,
                              const Eigen::MatrixXd& ys, const Eigen::MatrixXd* zetas);

/// Reverse mode of conv_estimate: given covectors gamma (d x B) on the
/// estimates, accumulates into x_bar (d x B), y_bar (d x N) and, for
/// Biot-Savart, zeta_bar (d x N). Any output pointer may be null.
void conv_pullback(const KernelSpec& spec, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                   const Eigen::MatrixXd* zetas, const Eigen::MatrixXd& gamma,
                   Eigen::MatrixXd* x_bar, Eigen::MatrixXd* y_bar, Eigen::MatrixXd* zeta_bar);

/// Self-excluded direct-kernel field: column j is (1/(M-1)) sum_{k != j} K(X_j - X_k),
/// with the clamped Coulomb kernel, or the Biot-Savart kernel clamped the same way.
/// Requires M >= 2.
Eigen::MatrixXd direct_field_self_excluded(const KernelSpec& spec, const Eigen::MatrixXd& pts);

/// Direct-kernel field at targets xs from sources ys (no score weighting).
Eigen::MatrixXd direct_field(const KernelSpec& spec, const Eigen::MatrixXd& xs,
                             const Eigen::MatrixXd& ys);

/// Hash of the piecewise branch each (x, y) pair sits on: sign pattern of
/// x - y for Biot-Savart, clamp status for Coulomb. Two configurations with the
/// same signature lie on the same smooth piece of the estimator.
std::uint64_t branch_signature(const KernelSpec& spec, const Eigen::MatrixXd& xs,
                               const Eigen::MatrixXd& ys);

}  // namespace einn
