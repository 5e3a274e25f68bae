#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "einn/composition.hpp"

namespace einn {

/// Layer widths of a dense tanh network taking (t, x) to a velocity in R^d.
/// widths = {d + 1, hidden..., d}; hidden layers use tanh, the output is affine.
struct Arch {
  std::vector<int> widths;

  static Arch mlp(int dim, int hidden_layers, int width);

  int input_dim() const { return widths.front(); }
  int spatial_dim() const { return widths.back(); }
  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  /// Sum over layers of (in + 1) * out.
  std::size_t param_count() const;
  void validate() const;

  friend bool operator==(const Arch&, const Arch&) = default;
};

/// Flat parameter vector; per layer the weight matrix (row-major, out x in)
/// followed by the bias.
struct NetParams {
  Arch arch;
  Eigen::VectorXd theta;

  void validate() const;
};

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
NetParams init_params(const Arch& arch, std::uint64_t seed);

/// Stable 64-bit fingerprint of the parameter bits.
std::uint64_t params_hash(const NetParams& params);

/// The same network expressed through the generic derivative engine
/// (identical parameter layout); used as an independent reference path.
Composition net_composition(const Arch& arch);

struct NetEval {
  Eigen::VectorXd value;
  Eigen::MatrixXd jac;
  double div = 0.0;
  Eigen::VectorXd grad_div;
};

enum class JetOrder { Value = 0, Jacobian = 1, Full = 2 };

/// Field quantities for a batch of P points (columns).
/// jac(i + d*j, p) = d f_i / d x_j at point p.
struct FieldJet {
  Eigen::MatrixXd value;
  Eigen::MatrixXd jac;
  Eigen::VectorXd div;
  Eigen::MatrixXd grad_div;
};

/// Covectors for the pullback of
///   Phi = sum_p alpha_p . f(x_p) + beta_p . h(x_p, b_p) - lambda_p div f(x_p),
/// with h(a, b) = -grad(div f)(a) - J(a)^T b. `beta`, `scores` and `lambda`
/// may be null when the corresponding term is absent.
struct FieldCovectors {
  const Eigen::MatrixXd* alpha = nullptr;
  const Eigen::MatrixXd* beta = nullptr;
  const Eigen::MatrixXd* scores = nullptr;
  const Eigen::VectorXd* lambda = nullptr;
};

FieldJet evaluate_batch(const NetParams& params, double t, const Eigen::MatrixXd& xs,
                        JetOrder order);

/// Accumulates dPhi/dx into x_bar (d x P) and dPhi/dtheta into theta_bar.
/// If jac_beta is non-null it receives J(x_p) beta_p (needed for dPhi/db).
void pullback_batch(const NetParams& params, double t, const Eigen::MatrixXd& xs,
                    const FieldCovectors& cov, Eigen::MatrixXd* x_bar, Eigen::VectorXd* theta_bar,
                    Eigen::MatrixXd* jac_beta);

NetEval eval_full(const NetParams& params, double t, const Eigen::VectorXd& x);

/// Score dynamics along a trajectory: -grad(div f) - J^T xi.
Eigen::VectorXd score_rhs(const NetParams& params, double t, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& xi);

/// Text checkpoint, see README for the layout. Written atomically.
void save_checkpoint(const std::filesystem::path& path, const NetParams& params);
NetParams load_checkpoint(const std::filesystem::path& path);

}  // namespace einn
