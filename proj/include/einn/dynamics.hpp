#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>

#include "einn/field.hpp"
#include "einn/kernels.hpp"
#include "einn/ode.hpp"
#include "einn/reference.hpp"

namespace einn {

/// The mean-field problem: dimension, diffusion nu, horizon T, interaction
/// kernel, exterior potential V(x) = stiffness |x|^2 / 2 (stiffness 0 means
/// no potential) and the closed-form reference supplying the initial law.
struct ProblemSpec {
  int dim = 2;
  double nu = 0.1;
  double horizon = 1.0;
  KernelSpec kernel = KernelSpec::biot_savart();
  double stiffness = 0.0;
  ReferenceSolution reference = ReferenceSolution::lamb_oseen();

  static ProblemSpec lamb_oseen(double nu = 0.1, double t0 = 0.1, double horizon = 1.0);
  static ProblemSpec barenblatt(double t0 = 0.1, double horizon = 1.0);
  static ProblemSpec ornstein_uhlenbeck(int dim, double nu, double stiffness, double sigma0,
                                        double horizon = 1.0);

  void validate() const;
};

/// Offsets of the blocks of the flat state vector for B probes and N batch
/// particles: [x (d B), xi (d B), ys (d N), zetas (d N), logdens (B)].
struct StateLayout {
  int d = 0;
  Eigen::Index B = 0;
  Eigen::Index N = 0;

  Eigen::Index x_offset() const { return 0; }
  Eigen::Index xi_offset() const { return d * B; }
  Eigen::Index ys_offset() const { return 2 * d * B; }
  Eigen::Index zetas_offset() const { return 2 * d * B + d * N; }
  Eigen::Index logdens_offset() const { return 2 * d * (B + N); }
  Eigen::Index size() const { return 2 * d * (B + N) + B; }

  using Block = Eigen::Map<Eigen::MatrixXd>;
  using ConstBlock = Eigen::Map<const Eigen::MatrixXd>;
  Block x(Eigen::VectorXd& s) const { return Block(s.data(), d, B); }
  Block xi(Eigen::VectorXd& s) const { return Block(s.data() + xi_offset(), d, B); }
  Block ys(Eigen::VectorXd& s) const { return Block(s.data() + ys_offset(), d, N); }
  Block zetas(Eigen::VectorXd& s) const { return Block(s.data() + zetas_offset(), d, N); }
  ConstBlock x(const Eigen::VectorXd& s) const { return ConstBlock(s.data(), d, B); }
  ConstBlock xi(const Eigen::VectorXd& s) const { return ConstBlock(s.data() + xi_offset(), d, B); }
  ConstBlock ys(const Eigen::VectorXd& s) const { return ConstBlock(s.data() + ys_offset(), d, N); }
  ConstBlock zetas(const Eigen::VectorXd& s) const {
    return ConstBlock(s.data() + zetas_offset(), d, N);
  }
};

/// Augmented state for B probe trajectories sharing one batch of N particles.
struct SystemState {
  Eigen::MatrixXd x;      // d x B probe positions
  Eigen::MatrixXd xi;     // d x B probe scores
  Eigen::MatrixXd ys;     // d x N batch particles
  Eigen::MatrixXd zetas;  // d x N batch scores
  Eigen::VectorXd logdens;  // B probe log-densities

  StateLayout layout() const;
  Eigen::VectorXd pack() const;
  static SystemState unpack(const StateLayout& layout, const Eigen::VectorXd& s);
};

/// count draws from the reference law at t = 0; for compact supports, draws
/// closer than `margin` to the boundary are redrawn.
Eigen::MatrixXd sample_initial(const ReferenceSolution& ref, int count, std::uint64_t seed,
                               double margin = 1e-9);

/// Scores and log-densities from the reference at t = 0, batch particles
/// sampled i.i.d. from the initial law with `seed`. x0 is d x B.
SystemState initial_state(const ProblemSpec& spec, const Eigen::MatrixXd& x0, int N,
                          std::uint64_t seed);

struct DynamicsOptions {
  /// When false, xi and zeta are held fixed. Only allowed when nu = 0 and the
  /// kernel is not Biot-Savart, where neither the cost nor the other blocks
  /// depend on them.
  bool track_scores = true;
};

/// Scores are tracked unless nothing reads them.
DynamicsOptions dynamics_for(const ProblemSpec& spec);

/// The augmented ODE system with transition psi and running cost g (mean over
/// probes of the squared self-consistency residual).
class EinnProblem final : public OdeProblem {
 public:
  EinnProblem(const VelocityField& field, const ProblemSpec& spec, StateLayout layout,
              DynamicsOptions options = {});

  const StateLayout& layout() const { return layout_; }
  Eigen::Index state_size() const override { return layout_.size(); }
  Eigen::Index param_size() const override { return field_.param_count(); }

  void rhs(double t, const Eigen::VectorXd& s, Eigen::VectorXd& ds) const override;
  double cost(double t, const Eigen::VectorXd& s) const override;
  void rhs_vjp(double t, const Eigen::VectorXd& s, const Eigen::VectorXd& lambda,
               Eigen::VectorXd& s_bar, Eigen::VectorXd& theta_bar) const override;
  void cost_vjp(double t, const Eigen::VectorXd& s, double weight, Eigen::VectorXd& s_bar,
                Eigen::VectorXd& theta_bar) const override;
  std::uint64_t fingerprint() const override;

  /// Residual f - (-grad V + E - nu xi) at each probe (d x B).
  Eigen::MatrixXd residuals(double t, const Eigen::VectorXd& s) const;
  /// Squared residual norm per probe.
  Eigen::VectorXd probe_costs(double t, const Eigen::VectorXd& s) const;

 private:
  const VelocityField& field_;
  ProblemSpec spec_;
  StateLayout layout_;
  DynamicsOptions options_;
};

/// Time derivative of the state.
SystemState transition(const VelocityField& field, const ProblemSpec& spec, double t,
                       const SystemState& s, DynamicsOptions options = {});

/// Per-probe running cost.
Eigen::VectorXd running_cost(const VelocityField& field, const ProblemSpec& spec, double t,
                             const SystemState& s);

struct TrajectoryBatch {
  StateLayout layout;
  Trajectory traj;
  Eigen::MatrixXd probe_costs;  // B x (steps + 1)

  double loss() const { return traj.loss(); }
  /// Trajectory-wise loss of every probe.
  Eigen::VectorXd probe_losses() const;
  SystemState state(int n) const { return SystemState::unpack(layout, traj.states.col(n)); }
};

TrajectoryBatch integrate_forward(const VelocityField& field, const ProblemSpec& spec,
                                  const SystemState& s0, int steps, DynamicsOptions options = {});

/// Rows traj_id,t,x...,xi...,logdens,running_cost for every probe and node.
void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryBatch& batch);

}  // namespace einn
