#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "einn/metrics.hpp"
#include "einn/rng.hpp"
#include "einn/training.hpp"

namespace einn {

/// Particles of the drift-driven SDE at time t; step is the Euler-Maruyama step.
struct SdeEnsemble {
  Eigen::MatrixXd particles;  // d x M
  double t = 0.0;
  double step = 0.01;

  void validate() const;
};

/// Largest Euler-Maruyama step accepted.
constexpr double kMaxSdeStep = 0.05;

/// One Euler-Maruyama update with drift -grad V + u(t, x) and noise
/// sqrt(2 nu step) N(0, I). Throws PropagationError on non-finite particles.
SdeEnsemble sde_step(const SdeEnsemble& ens, const VelocityField& drift, const ProblemSpec& spec,
                     Rng& rng);

/// The closed-form K * rho_t of a reference, as a drift (values only).
class ReferenceDriftField final : public VelocityField {
 public:
  explicit ReferenceDriftField(ReferenceSolution ref) : ref_(ref) { ref_.validate(); }
  int dim() const override { return ref_.dim; }
  FieldJet evaluate(double t, const Eigen::MatrixXd& xs, JetOrder order) const override;
  void pullback(double, const Eigen::MatrixXd&, const FieldCovectors&, Eigen::MatrixXd*,
                Eigen::VectorXd*, Eigen::MatrixXd*) const override;
  std::uint64_t fingerprint() const override;

 private:
  ReferenceSolution ref_;
};

/// cfg.batch_N particles from the initial law driven to T in cfg.steps
/// Euler-Maruyama steps; at every node the squared gap between the drift and
/// the self-excluded empirical convolution, averaged over particles, is summed
/// with trapezoid weights. The gradient treats the particles as constants.
/// Randomness comes from (cfg.seed, step_index).
LossGrad drvn_loss_and_grad(const VelocityField& drift, const ProblemSpec& spec,
                            const TrainConfig& cfg, long step_index);

/// Adam training of a drift network against drvn_loss_and_grad; same log and
/// checkpoint layout as the EINN trainer.
TrainResult train_drvn(const ProblemSpec& spec, const NetParams& init, const TrainConfig& cfg,
                       const TrainOutput& out = {});

/// SDE ensemble of `count` particles at the requested times (multiples of
/// T / steps), without scores.
std::vector<ParticleCloud> drvn_clouds(const VelocityField& drift, const ProblemSpec& spec,
                                       int count, std::uint64_t seed, int steps,
                                       const std::vector<double>& times);

}  // namespace einn
