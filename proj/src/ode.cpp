#include "einn/ode.hpp"

#include <bit>
#include <cmath>

namespace einn {

double Trajectory::loss() const { return trapezoid_weights(horizon, steps).dot(costs); }

Eigen::VectorXd trapezoid_weights(double horizon, int steps) {
  if (steps < 1) throw std::invalid_argument("trapezoid_weights: steps must be >= 1");
  const double h = horizon / steps;
  Eigen::VectorXd w = Eigen::VectorXd::Constant(steps + 1, h);
  w(0) = w(steps) = 0.5 * h;
  return w;
}

namespace {

// stages (if given) receives the three intermediate stage states
Eigen::VectorXd rk4_step_impl(const OdeProblem& p, double t, const Eigen::VectorXd& s, double h,
                              Eigen::MatrixXd* stages, Eigen::Index col) {
  Eigen::VectorXd k1, k2, k3, k4;
  p.rhs(t, s, k1);
  Eigen::VectorXd st = s + 0.5 * h * k1;
  p.rhs(t + 0.5 * h, st, k2);
  if (stages) stages->col(col) = st;
  st = s + 0.5 * h * k2;
  p.rhs(t + 0.5 * h, st, k3);
  if (stages) stages->col(col + 1) = st;
  st = s + h * k3;
  p.rhs(t + h, st, k4);
  if (stages) stages->col(col + 2) = st;
  return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Eigen::VectorXd rk4_step(const OdeProblem& p, double t, const Eigen::VectorXd& s, double h) {
  return rk4_step_impl(p, t, s, h, nullptr, 0);
}

Trajectory rk4_forward(const OdeProblem& p, const Eigen::VectorXd& s0, double horizon, int steps) {
  if (steps < 1) throw std::invalid_argument("rk4_forward: steps must be >= 1");
  if (!(horizon > 0.0)) throw std::invalid_argument("rk4_forward: horizon must be > 0");
  if (s0.size() != p.state_size()) throw std::invalid_argument("rk4_forward: bad initial state");
  Trajectory tr;
  tr.horizon = horizon;
  tr.steps = steps;
  tr.fingerprint = p.fingerprint();
  tr.states.resize(s0.size(), steps + 1);
  tr.costs.resize(steps + 1);
  tr.stages.resize(s0.size(), 3 * static_cast<Eigen::Index>(steps));
  if (!s0.allFinite()) throw PropagationError("non-finite initial state", 0.0, 0);
  tr.states.col(0) = s0;
  const double h = horizon / steps;
  for (int n = 0; n <= steps; ++n) {
    const double t = tr.time(n);
    tr.costs(n) = p.cost(t, tr.states.col(n));
    if (!std::isfinite(tr.costs(n))) throw PropagationError("non-finite running cost", t, n);
    if (n == steps) break;
    tr.states.col(n + 1) = rk4_step_impl(p, t, tr.states.col(n), h, &tr.stages, 3 * n);
    if (!tr.states.col(n + 1).allFinite()) {
      throw PropagationError("non-finite state", tr.time(n + 1), n + 1);
    }
  }
  return tr;
}

std::uint64_t ScalarLinearProblem::fingerprint() const { return std::bit_cast<std::uint64_t>(theta_); }

}  // namespace einn
