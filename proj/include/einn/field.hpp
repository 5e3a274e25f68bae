#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "einn/reference.hpp"
#include "einn/velocity_net.hpp"

namespace einn {

/// A time-dependent velocity field f(t, x) with the derivative queries the
/// dynamics need. The network is the trainable implementation; the other
/// fields exist to inject known velocities into the same pipeline.
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  virtual int dim() const = 0;
  virtual Eigen::Index param_count() const { return 0; }
  virtual FieldJet evaluate(double t, const Eigen::MatrixXd& xs, JetOrder order) const = 0;
  /// Same contract as pullback_batch. theta_bar is ignored by fields without
  /// parameters.
  virtual void pullback(double t, const Eigen::MatrixXd& xs, const FieldCovectors& cov,
                        Eigen::MatrixXd* x_bar, Eigen::VectorXd* theta_bar,
                        Eigen::MatrixXd* jac_beta) const = 0;
  virtual std::uint64_t fingerprint() const = 0;
};

class NetField final : public VelocityField {
 public:
  explicit NetField(const NetParams& params);
  int dim() const override { return params_.arch.spatial_dim(); }
  Eigen::Index param_count() const override { return params_.theta.size(); }
  FieldJet evaluate(double t, const Eigen::MatrixXd& xs, JetOrder order) const override {
    return evaluate_batch(params_, t, xs, order);
  }
  void pullback(double t, const Eigen::MatrixXd& xs, const FieldCovectors& cov,
                Eigen::MatrixXd* x_bar, Eigen::VectorXd* theta_bar,
                Eigen::MatrixXd* jac_beta) const override {
    pullback_batch(params_, t, xs, cov, x_bar, theta_bar, jac_beta);
  }
  std::uint64_t fingerprint() const override { return hash_; }
  const NetParams& params() const { return params_; }

 private:
  NetParams params_;
  std::uint64_t hash_;
};

/// The underlying velocity of a closed-form reference. Its divergence is
/// constant in x for every supported reference, so grad_div is zero.
/// Not differentiable with respect to x beyond the Jacobian: pullback throws.
class OracleField final : public VelocityField {
 public:
  explicit OracleField(ReferenceSolution ref) : ref_(ref) { ref_.validate(); }
  int dim() const override { return ref_.dim; }
  FieldJet evaluate(double t, const Eigen::MatrixXd& xs, JetOrder order) const override;
  void pullback(double, const Eigen::MatrixXd&, const FieldCovectors&, Eigen::MatrixXd*,
                Eigen::VectorXd*, Eigen::MatrixXd*) const override;
  std::uint64_t fingerprint() const override;

 private:
  ReferenceSolution ref_;
};

/// f(t, x) = A x + c + t b.
class AffineField final : public VelocityField {
 public:
  AffineField(Eigen::MatrixXd a, Eigen::VectorXd c, Eigen::VectorXd b);
  int dim() const override { return static_cast<int>(a_.rows()); }
  FieldJet evaluate(double t, const Eigen::MatrixXd& xs, JetOrder order) const override;
  void pullback(double t, const Eigen::MatrixXd& xs, const FieldCovectors& cov,
                Eigen::MatrixXd* x_bar, Eigen::VectorXd* theta_bar,
                Eigen::MatrixXd* jac_beta) const override;
  std::uint64_t fingerprint() const override;

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd c_, b_;
};

}  // namespace einn
