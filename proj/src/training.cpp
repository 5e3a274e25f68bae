#include "einn/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "einn/io.hpp"
#include "einn/kernels.hpp"
#include "einn/rng.hpp"

namespace einn {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(field) + ": " + what);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int iteration) {
  char name[32];
  std::snprintf(name, sizeof name, "ckpt_%06d.txt", iteration);
  return dir / "checkpoints" / name;
}

}  // namespace

void TrainConfig::validate() const {
  require(iterations >= 0, "iterations", "must be >= 0");
  require(minibatch >= 1, "minibatch", "must be >= 1");
  require(batch_N >= 1, "batch_N", "must be >= 1");
  require(steps >= 1, "steps", "must be >= 1");
  require(lr > 0.0 && std::isfinite(lr), "lr", "must be positive");
  require(adam_beta1 > 0.0 && adam_beta1 < 1.0, "adam_beta1", "must lie in (0, 1)");
  require(adam_beta2 > 0.0 && adam_beta2 < 1.0, "adam_beta2", "must lie in (0, 1)");
  require(adam_eps > 0.0, "adam_eps", "must be positive");
  require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
  require(time_samples >= 0, "time_samples", "must be >= 0");
  require(scheme == AdjointScheme::Continuous || time_samples == 0, "time_samples",
          "only valid with the continuous scheme");
}

OptimizerState OptimizerState::zeros(Eigen::Index n) {
  OptimizerState s;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  return s;
}

bool adam_step(OptimizerState& opt, NetParams& params, const Eigen::VectorXd& grad,
               const TrainConfig& cfg) {
  if (grad.size() != params.theta.size() || opt.m.size() != grad.size() ||
      opt.v.size() != grad.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (!grad.allFinite()) {
    ++opt.skipped;
    return false;
  }
  ++opt.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  opt.m = b1 * opt.m + (1.0 - b1) * grad;
  opt.v = b2 * opt.v + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  params.theta.array() -=
      cfg.lr * (opt.m.array() / c1) / ((opt.v.array() / c2).sqrt() + cfg.adam_eps);
  return true;
}

LossGrad loss_and_grad(const VelocityField& field, const ProblemSpec& spec, const TrainConfig& cfg,
                       long step_index) {
  const std::uint64_t base = derive_seed(cfg.seed, static_cast<std::uint64_t>(step_index));
  const Eigen::MatrixXd x0 = sample_initial(spec.reference, cfg.minibatch, derive_seed(base, 1));
  const std::uint64_t batch_seed = derive_seed(base, 2);
  const AdjointOptions adj{cfg.scheme, cfg.time_samples, derive_seed(base, 3)};
  const DynamicsOptions dyn = dynamics_for(spec);
  const bool with_grad = field.param_count() > 0;

  auto run = [&](const Eigen::MatrixXd& probes) {
    const SystemState s0 = initial_state(spec, probes, cfg.batch_N, batch_seed);
    const TrajectoryBatch tb = integrate_forward(field, spec, s0, cfg.steps, dyn);
    LossGrad r;
    r.loss = tb.loss();
    if (with_grad) r.grad = gradient(EinnProblem(field, spec, tb.layout, dyn), tb.traj, adj);
    return r;
  };

  try {
    LossGrad r = run(x0);
    r.trajectories = cfg.minibatch;
    return r;
  } catch (const PropagationError&) {
  }
  LossGrad acc;
  if (with_grad) acc.grad = Eigen::VectorXd::Zero(field.param_count());
  for (Eigen::Index b = 0; b < x0.cols(); ++b) {
    try {
      const LossGrad r = run(x0.col(b));
      acc.loss += r.loss;
      if (with_grad) acc.grad += r.grad;
      ++acc.trajectories;
    } catch (const PropagationError&) {
      ++acc.aborted;
    }
  }
  if (acc.trajectories == 0) {
    throw TrainingError("loss_and_grad: every trajectory diverged at step " +
                        std::to_string(step_index));
  }
  acc.loss /= acc.trajectories;
  if (with_grad) acc.grad /= acc.trajectories;
  return acc;
}

std::string format_train_log(const std::vector<TrainLogRow>& rows) {
  std::ostringstream os;
  os << "iteration,loss,grad_norm,wall_ms,clamp_events\n";
  for (const TrainLogRow& r : rows) {
    os << r.iteration << ',' << format_double(r.loss) << ',' << format_double(r.grad_norm) << ','
       << format_double(r.wall_ms) << ',' << r.clamp_events << '\n';
  }
  return os.str();
}

TrainResult train(const ProblemSpec& spec, const NetParams& init, const TrainConfig& cfg,
                  const TrainOutput& out) {
  spec.validate();
  if (init.arch.spatial_dim() != spec.dim) {
    throw std::invalid_argument("train: network dimension does not match the problem");
  }
  return train_loop(init, cfg, out, [&](const VelocityField& field, long step) {
    return loss_and_grad(field, spec, cfg, step);
  });
}

TrainResult train_loop(const NetParams& init, const TrainConfig& cfg, const TrainOutput& out,
                       const LossFn& loss) {
  cfg.validate();
  init.validate();
  TrainResult res;
  res.params = init;
  OptimizerState opt = OptimizerState::zeros(init.theta.size());
  if (out.dir) std::filesystem::create_directories(*out.dir / "checkpoints");

  auto save = [&](const std::filesystem::path& p) {
    save_checkpoint(p, res.params);
    res.checkpoints.push_back(p);
    write_file_atomic(*out.dir / "train_log.csv", format_train_log(res.log));
  };

  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t clamps_before = clamp_events();
    const NetField field(res.params);
    const LossGrad lg = loss(field, it - 1);
    TrainLogRow row;
    row.iteration = it;
    row.loss = lg.loss;
    row.grad_norm = lg.grad.norm();
    row.skipped = !adam_step(opt, res.params, lg.grad, cfg);
    row.clamp_events = clamp_events() - clamps_before;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                      .count();
    res.log.push_back(row);
    if (out.dir && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) {
      save(checkpoint_path(*out.dir, it));
    }
    if (out.on_eval && out.eval_every > 0 && (it % out.eval_every == 0 || it == cfg.iterations)) {
      out.on_eval(it, res.params, res.log);
    }
  }
  res.skipped_steps = opt.skipped;
  if (out.dir) save(*out.dir / "checkpoints" / "ckpt_final.txt");
  return res;
}

std::vector<double> smooth(const std::vector<double>& values, int window) {
  if (window < 1) throw std::invalid_argument("smooth: window must be >= 1");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= static_cast<size_t>(window)) sum -= values[i - static_cast<size_t>(window)];
    out[i] = sum / static_cast<double>(std::min(i + 1, static_cast<size_t>(window)));
  }
  return out;
}

}  // namespace einn
