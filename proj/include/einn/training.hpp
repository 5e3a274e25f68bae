#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "einn/adjoint.hpp"
#include "einn/dynamics.hpp"
#include "einn/velocity_net.hpp"

namespace einn {

struct TrainConfig {
  int iterations = 10000;
  int minibatch = 16;  // probe trajectories per step
  int batch_N = 1024;  // convolution particles per step
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int steps = 100;  // ODE grid
  std::uint64_t seed = 0;
  int checkpoint_every = 500;
  /// Continuous-scheme time samples; 0 means full-grid quadrature.
  AdjointScheme scheme = AdjointScheme::Discrete;
  int time_samples = 0;

  bool operator==(const TrainConfig&) const = default;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  int skipped = 0;

  static OptimizerState zeros(Eigen::Index n);
};

/// Bias-corrected Adam update in place. A gradient with non-finite entries
/// leaves both state and parameters untouched and returns false.
bool adam_step(OptimizerState& opt, NetParams& params, const Eigen::VectorXd& grad,
               const TrainConfig& cfg);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;  // empty for parameter-free fields
  int trajectories = 0;  // trajectories that contributed
  int aborted = 0;
};

/// Minibatch loss and adjoint gradient at optimizer step `step_index`.
/// Probes, batch particles and time samples come from seeds derived from
/// (cfg.seed, step_index). If the shared integration fails, probes are retried
/// one at a time and failures are dropped; TrainingError if none survive.
LossGrad loss_and_grad(const VelocityField& field, const ProblemSpec& spec, const TrainConfig& cfg,
                       long step_index);

struct TrainLogRow {
  int iteration = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
  std::uint64_t clamp_events = 0;
  bool skipped = false;
};

/// iteration,loss,grad_norm,wall_ms,clamp_events
std::string format_train_log(const std::vector<TrainLogRow>& rows);

struct TrainOutput {
  /// Checkpoints and train_log.csv go here when set.
  std::optional<std::filesystem::path> dir;
  /// Called after iterations that are multiples of eval_every (and after the last).
  int eval_every = 0;
  std::function<void(int iteration, const NetParams& params, const std::vector<TrainLogRow>& log)>
      on_eval;
};

struct TrainResult {
  NetParams params;
  std::vector<TrainLogRow> log;
  std::vector<std::filesystem::path> checkpoints;
  int skipped_steps = 0;
};

TrainResult train(const ProblemSpec& spec, const NetParams& init, const TrainConfig& cfg,
                  const TrainOutput& out = {});

/// Minibatch objective evaluated at optimizer step `step_index`.
using LossFn = std::function<LossGrad(const VelocityField& field, long step_index)>;

/// The Adam loop shared by the trainers.
TrainResult train_loop(const NetParams& init, const TrainConfig& cfg, const TrainOutput& out,
                       const LossFn& loss);

/// Trailing moving average with the given window (shorter at the start).
std::vector<double> smooth(const std::vector<double>& values, int window);

}  // namespace einn
