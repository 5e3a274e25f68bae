#include "einn/adjoint.hpp"

#include <cmath>
#include <stdexcept>

#include "einn/rng.hpp"

namespace einn {

namespace {

void check_match(const OdeProblem& p, const Trajectory& traj) {
  if (traj.states.rows() != p.state_size() || traj.states.cols() != traj.steps + 1 ||
      traj.costs.size() != traj.steps + 1) {
    throw std::invalid_argument("adjoint: trajectory shape does not match the problem");
  }
  if (traj.fingerprint != p.fingerprint()) {
    throw std::invalid_argument("adjoint: trajectory was produced with different parameters");
  }
}

// psi_s^T a + g_s at a stored state; theta contributions go to scratch.
Eigen::VectorXd state_covector(const OdeProblem& p, double t, const Eigen::VectorXd& s,
                               const Eigen::VectorXd& a, Eigen::VectorXd& scratch) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(s.size());
  p.rhs_vjp(t, s, a, out, scratch);
  p.cost_vjp(t, s, 1.0, out, scratch);
  return out;
}

Eigen::VectorXd discrete_gradient(const OdeProblem& p, const Trajectory& traj) {
  const int M = traj.steps;
  const double h = traj.step();
  const Eigen::VectorXd w = trapezoid_weights(traj.horizon, M);
  Eigen::VectorXd theta_bar = Eigen::VectorXd::Zero(p.param_size());
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(p.state_size());
  p.cost_vjp(traj.time(M), traj.states.col(M), w(M), lam, theta_bar);
  const bool cached = traj.stages.rows() == traj.states.rows() && traj.stages.cols() == 3 * M;
  Eigen::VectorXd k1, k2, k3, tmp, s2, s3, s4;
  for (int n = M - 1; n >= 0; --n) {
    const double t = traj.time(n);
    const Eigen::VectorXd s = traj.states.col(n);
    if (cached) {
      s2 = traj.stages.col(3 * n);
      s3 = traj.stages.col(3 * n + 1);
      s4 = traj.stages.col(3 * n + 2);
    } else {
      p.rhs(t, s, k1);
      s2 = s + 0.5 * h * k1;
      p.rhs(t + 0.5 * h, s2, k2);
      s3 = s + 0.5 * h * k2;
      p.rhs(t + 0.5 * h, s3, k3);
      s4 = s + h * k3;
    }

    const Eigen::VectorXd kb4 = (h / 6.0) * lam;
    Eigen::VectorXd kb3 = (h / 3.0) * lam;
    Eigen::VectorXd kb2 = (h / 3.0) * lam;
    Eigen::VectorXd kb1 = (h / 6.0) * lam;
    Eigen::VectorXd next = lam;

    tmp.setZero(s.size());
    p.rhs_vjp(t + h, s4, kb4, tmp, theta_bar);
    next += tmp;
    kb3 += h * tmp;

    tmp.setZero(s.size());
    p.rhs_vjp(t + 0.5 * h, s3, kb3, tmp, theta_bar);
    next += tmp;
    kb2 += 0.5 * h * tmp;

    tmp.setZero(s.size());
    p.rhs_vjp(t + 0.5 * h, s2, kb2, tmp, theta_bar);
    next += tmp;
    kb1 += 0.5 * h * tmp;

    tmp.setZero(s.size());
    p.rhs_vjp(t, s, kb1, tmp, theta_bar);
    next += tmp;

    lam = std::move(next);
    p.cost_vjp(t, s, w(n), lam, theta_bar);
    if (!lam.allFinite()) throw PropagationError("non-finite adjoint", t, n);
  }
  return theta_bar;
}

Eigen::VectorXd continuous_gradient(const OdeProblem& p, const Trajectory& traj,
                                    const AdjointOptions& opt) {
  const int M = traj.steps;
  const double h = traj.step();
  Eigen::VectorXd w;
  if (opt.time_samples > 0) {
    w = Eigen::VectorXd::Zero(M + 1);
    Rng rng(opt.sample_seed, 0x74696d65ULL);
    const double each = traj.horizon / opt.time_samples;
    for (int k = 0; k < opt.time_samples; ++k) {
      const auto n = static_cast<int>(std::lround(rng.uniform() * M));
      w(n) += each;
    }
  } else {
    w = trapezoid_weights(traj.horizon, M);
  }
  Eigen::VectorXd theta_bar = Eigen::VectorXd::Zero(p.param_size());
  Eigen::VectorXd scratch = Eigen::VectorXd::Zero(p.param_size());
  Eigen::VectorXd sink = Eigen::VectorXd::Zero(p.state_size());
  auto accumulate = [&](int n, const Eigen::VectorXd& a) {
    if (w(n) == 0.0) return;
    const double t = traj.time(n);
    const Eigen::VectorXd s = traj.states.col(n);
    p.rhs_vjp(t, s, w(n) * a, sink, theta_bar);
    p.cost_vjp(t, s, w(n), sink, theta_bar);
  };
  Eigen::VectorXd a = Eigen::VectorXd::Zero(p.state_size());
  accumulate(M, a);
  for (int n = M; n >= 1; --n) {
    const double t = traj.time(n);
    const Eigen::VectorXd s_hi = traj.states.col(n);
    const Eigen::VectorXd s_lo = traj.states.col(n - 1);
    const Eigen::VectorXd s_mid = rk4_step(p, traj.time(n - 1), s_lo, 0.5 * h);
    const Eigen::VectorXd k1 = state_covector(p, t, s_hi, a, scratch);
    const Eigen::VectorXd k2 = state_covector(p, t - 0.5 * h, s_mid, a + 0.5 * h * k1, scratch);
    const Eigen::VectorXd k3 = state_covector(p, t - 0.5 * h, s_mid, a + 0.5 * h * k2, scratch);
    const Eigen::VectorXd k4 = state_covector(p, traj.time(n - 1), s_lo, a + h * k3, scratch);
    a += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!a.allFinite()) throw PropagationError("non-finite adjoint", traj.time(n - 1), n - 1);
    accumulate(n - 1, a);
  }
  return theta_bar;
}

}  // namespace

Eigen::VectorXd adjoint_rhs(const OdeProblem& problem, const Trajectory& traj, double t,
                            const Eigen::VectorXd& a) {
  check_match(problem, traj);
  if (a.size() != problem.state_size()) throw std::invalid_argument("adjoint_rhs: bad adjoint size");
  const double pos = t / traj.step();
  const auto n = static_cast<long>(std::lround(pos));
  if (n < 0 || n > traj.steps || std::abs(pos - static_cast<double>(n)) > 1e-9) {
    throw std::invalid_argument("adjoint_rhs: t is not a node of the stored grid");
  }
  Eigen::VectorXd scratch = Eigen::VectorXd::Zero(problem.param_size());
  return -state_covector(problem, traj.time(static_cast<int>(n)),
                         traj.states.col(static_cast<Eigen::Index>(n)), a, scratch);
}

Eigen::VectorXd gradient(const OdeProblem& problem, const Trajectory& traj,
                         const AdjointOptions& options) {
  check_match(problem, traj);
  if (options.time_samples < 0) throw std::invalid_argument("gradient: time_samples must be >= 0");
  if (options.scheme == AdjointScheme::Discrete) {
    if (options.time_samples != 0) {
      throw std::invalid_argument("gradient: time sampling applies to the continuous scheme only");
    }
    return discrete_gradient(problem, traj);
  }
  return continuous_gradient(problem, traj, options);
}

}  // namespace einn
