#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace einn {

/// An ODE-constrained objective
///   l(theta) = int_0^T g(t, s(t); theta) dt,  s' = psi(t, s; theta),  s(0) = s0,
/// described by its right-hand side, running cost, and their vector-Jacobian
/// products. The *_vjp methods accumulate into their outputs.
class OdeProblem {
 public:
  virtual ~OdeProblem() = default;

  virtual Eigen::Index state_size() const = 0;
  virtual Eigen::Index param_size() const = 0;

  virtual void rhs(double t, const Eigen::VectorXd& s, Eigen::VectorXd& ds) const = 0;
  virtual double cost(double t, const Eigen::VectorXd& s) const = 0;

  /// s_bar += lambda^T dpsi/ds, theta_bar += lambda^T dpsi/dtheta
  virtual void rhs_vjp(double t, const Eigen::VectorXd& s, const Eigen::VectorXd& lambda,
                       Eigen::VectorXd& s_bar, Eigen::VectorXd& theta_bar) const = 0;
  /// s_bar += weight dg/ds, theta_bar += weight dg/dtheta
  virtual void cost_vjp(double t, const Eigen::VectorXd& s, double weight, Eigen::VectorXd& s_bar,
                        Eigen::VectorXd& theta_bar) const = 0;

  /// Identifies the parameters the trajectory was produced with.
  virtual std::uint64_t fingerprint() const = 0;
};

/// Raised when a trajectory produces non-finite values.
class PropagationError : public std::runtime_error {
 public:
  PropagationError(const std::string& what, double t, int step)
      : std::runtime_error(what + " (t=" + std::to_string(t) + ", step " + std::to_string(step) +
                           ")"),
        time(t),
        step_index(step) {}
  double time;
  int step_index;
};

/// Dense record of a fixed-step integration: states and running costs at
/// every grid node t_n = n T / steps.
struct Trajectory {
  double horizon = 0.0;
  int steps = 0;
  Eigen::MatrixXd states;  // state_size x (steps + 1)
  Eigen::VectorXd costs;   // steps + 1
  /// The three intermediate RK4 stage states of every step (state_size x 3 steps),
  /// reused by the reverse sweep.
  Eigen::MatrixXd stages;
  std::uint64_t fingerprint = 0;

  double step() const { return horizon / steps; }
  double time(int n) const { return horizon * n / steps; }
  /// Trapezoidal quadrature of the recorded running costs.
  double loss() const;
};

/// Trapezoid weights on a uniform grid with `steps` intervals over [0, T].
Eigen::VectorXd trapezoid_weights(double horizon, int steps);

/// One classic RK4 step.
Eigen::VectorXd rk4_step(const OdeProblem& p, double t, const Eigen::VectorXd& s, double h);

/// Classic fourth-order Runge-Kutta with fixed step T / steps, recording the
/// state and running cost at every node.
Trajectory rk4_forward(const OdeProblem& p, const Eigen::VectorXd& s0, double horizon, int steps);

/// s' = theta s, g = s^2 with scalar theta: the reference problem with a
/// closed-form adjoint.
class ScalarLinearProblem final : public OdeProblem {
 public:
  explicit ScalarLinearProblem(double theta) : theta_(theta) {}
  Eigen::Index state_size() const override { return 1; }
  Eigen::Index param_size() const override { return 1; }
  void rhs(double, const Eigen::VectorXd& s, Eigen::VectorXd& ds) const override {
    ds = theta_ * s;
  }
  double cost(double, const Eigen::VectorXd& s) const override { return s(0) * s(0); }
  void rhs_vjp(double, const Eigen::VectorXd& s, const Eigen::VectorXd& lambda,
               Eigen::VectorXd& s_bar, Eigen::VectorXd& theta_bar) const override {
    s_bar(0) += theta_ * lambda(0);
    theta_bar(0) += s(0) * lambda(0);
  }
  void cost_vjp(double, const Eigen::VectorXd& s, double weight, Eigen::VectorXd& s_bar,
                Eigen::VectorXd&) const override {
    s_bar(0) += 2.0 * weight * s(0);
  }
  std::uint64_t fingerprint() const override;

 private:
  double theta_;
};

}  // namespace einn
