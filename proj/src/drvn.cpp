#include "einn/drvn.hpp"

#include <cmath>
#include <stdexcept>

#include "einn/kernels.hpp"
#include "einn/rng.hpp"

namespace einn {

namespace {

void check_grid(const ProblemSpec& spec, int steps) {
  if (steps < 1) throw std::invalid_argument("drvn: steps must be >= 1");
  if (spec.horizon / steps > kMaxSdeStep * (1.0 + 1e-12)) {
    throw std::invalid_argument("drvn: step T/steps exceeds 0.05");
  }
}

SdeEnsemble initial_ensemble(const ProblemSpec& spec, int count, std::uint64_t seed, double step) {
  SdeEnsemble e;
  e.particles = sample_initial(spec.reference, count, seed);
  e.step = step;
  return e;
}

}  // namespace

void SdeEnsemble::validate() const {
  if (particles.cols() < 1 || particles.rows() < 1) {
    throw std::invalid_argument("SdeEnsemble: empty ensemble");
  }
  if (!(step > 0.0)) throw std::invalid_argument("SdeEnsemble: step must be > 0");
  if (step > kMaxSdeStep * (1.0 + 1e-12)) {
    throw std::invalid_argument("SdeEnsemble: step must be <= 0.05");
  }
}

SdeEnsemble sde_step(const SdeEnsemble& ens, const VelocityField& drift, const ProblemSpec& spec,
                     Rng& rng) {
  ens.validate();
  if (ens.particles.rows() != spec.dim || drift.dim() != spec.dim) {
    throw std::invalid_argument("sde_step: dimension mismatch");
  }
  SdeEnsemble next = ens;
  Eigen::MatrixXd v = drift.evaluate(ens.t, ens.particles, JetOrder::Value).value;
  if (spec.stiffness != 0.0) v -= spec.stiffness * ens.particles;
  next.particles += ens.step * v;
  if (spec.nu > 0.0) {
    const double amp = std::sqrt(2.0 * spec.nu * ens.step);
    for (Eigen::Index j = 0; j < next.particles.cols(); ++j) {
      for (Eigen::Index q = 0; q < next.particles.rows(); ++q) next.particles(q, j) += amp * rng.normal();
    }
  }
  next.t = ens.t + ens.step;
  for (Eigen::Index j = 0; j < next.particles.cols(); ++j) {
    if (!next.particles.col(j).allFinite()) {
      throw PropagationError("sde_step: particle " + std::to_string(j) + " is not finite", next.t,
                             static_cast<int>(std::lround(next.t / ens.step)));
    }
  }
  return next;
}

FieldJet ReferenceDriftField::evaluate(double t, const Eigen::MatrixXd& xs, JetOrder order) const {
  if (order != JetOrder::Value) {
    throw std::logic_error("ReferenceDriftField: only values are available");
  }
  if (xs.rows() != ref_.dim) throw std::invalid_argument("ReferenceDriftField: dimension mismatch");
  FieldJet jet;
  jet.value.resize(ref_.dim, xs.cols());
  for (Eigen::Index p = 0; p < xs.cols(); ++p) {
    jet.value.col(p) = convolution_field(ref_, t, xs.col(p));
  }
  return jet;
}

void ReferenceDriftField::pullback(double, const Eigen::MatrixXd&, const FieldCovectors&,
                                   Eigen::MatrixXd*, Eigen::VectorXd*, Eigen::MatrixXd*) const {
  throw std::logic_error("ReferenceDriftField: reverse mode is not available");
}

std::uint64_t ReferenceDriftField::fingerprint() const {
  return derive_seed(0x6472696674ULL, static_cast<std::uint64_t>(ref_.kind) * 1000003ULL +
                                          static_cast<std::uint64_t>(ref_.t0 * 1e9));
}

LossGrad drvn_loss_and_grad(const VelocityField& drift, const ProblemSpec& spec,
                            const TrainConfig& cfg, long step_index) {
  spec.validate();
  cfg.validate();
  check_grid(spec, cfg.steps);
  if (cfg.batch_N < 2) {
    throw std::invalid_argument("drvn: the empirical convolution needs at least two particles");
  }
  const std::uint64_t base = derive_seed(cfg.seed, static_cast<std::uint64_t>(step_index));
  const double h = spec.horizon / cfg.steps;
  SdeEnsemble ens = initial_ensemble(spec, cfg.batch_N, derive_seed(base, 1), h);
  Rng noise(base, 2);
  const Eigen::VectorXd w = trapezoid_weights(spec.horizon, cfg.steps);
  const bool with_grad = drift.param_count() > 0;
  LossGrad r;
  if (with_grad) r.grad = Eigen::VectorXd::Zero(drift.param_count());
  const double m = static_cast<double>(cfg.batch_N);
  for (int n = 0; n <= cfg.steps; ++n) {
    ens.t = n * h;
    const Eigen::MatrixXd target = direct_field_self_excluded(spec.kernel, ens.particles);
    const Eigen::MatrixXd gap = drift.evaluate(ens.t, ens.particles, JetOrder::Value).value - target;
    r.loss += w(n) * gap.colwise().squaredNorm().sum() / m;
    if (with_grad) {
      const Eigen::MatrixXd alpha = (2.0 * w(n) / m) * gap;
      drift.pullback(ens.t, ens.particles, FieldCovectors{&alpha, nullptr, nullptr, nullptr},
                     nullptr, &r.grad, nullptr);
    }
    if (n < cfg.steps) ens = sde_step(ens, drift, spec, noise);
  }
  r.trajectories = cfg.batch_N;
  return r;
}

TrainResult train_drvn(const ProblemSpec& spec, const NetParams& init, const TrainConfig& cfg,
                       const TrainOutput& out) {
  spec.validate();
  check_grid(spec, cfg.steps);
  if (init.arch.spatial_dim() != spec.dim) {
    throw std::invalid_argument("train_drvn: network dimension does not match the problem");
  }
  return train_loop(init, cfg, out, [&](const VelocityField& field, long step) {
    return drvn_loss_and_grad(field, spec, cfg, step);
  });
}

std::vector<ParticleCloud> drvn_clouds(const VelocityField& drift, const ProblemSpec& spec,
                                       int count, std::uint64_t seed, int steps,
                                       const std::vector<double>& times) {
  check_grid(spec, steps);
  if (count < 1) throw std::invalid_argument("drvn_clouds: count must be >= 1");
  const double h = spec.horizon / steps;
  SdeEnsemble ens = initial_ensemble(spec, count, derive_seed(seed, 1), h);
  Rng noise(seed, 2);
  std::vector<ParticleCloud> out;
  int n = 0;
  double prev = -1.0;
  for (double t : times) {
    const int target = static_cast<int>(std::lround(t / h));
    if (t < prev || target > steps || std::abs(target * h - t) > 1e-9 * std::max(1.0, spec.horizon)) {
      throw std::invalid_argument("drvn_clouds: times must be increasing grid nodes in [0, T]");
    }
    prev = t;
    while (n < target) {
      ens.t = n * h;
      ens = sde_step(ens, drift, spec, noise);
      ++n;
    }
    out.push_back(ParticleCloud{t, ens.particles, Eigen::MatrixXd()});
  }
  return out;
}

}  // namespace einn
