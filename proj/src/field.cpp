#include "einn/field.hpp"

#include <bit>
#include <stdexcept>

namespace einn {

namespace {

std::uint64_t hash_doubles(std::uint64_t h, const double* p, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    h ^= std::bit_cast<std::uint64_t>(p[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

void fill_jacobian(FieldJet& jet, Eigen::Index col, const Eigen::MatrixXd& j) {
  const auto d = j.rows();
  jet.jac.col(col) = Eigen::Map<const Eigen::VectorXd>(j.data(), d * d);
  jet.div(col) = j.trace();
}

}  // namespace

NetField::NetField(const NetParams& params) : params_(params) {
  params_.validate();
  hash_ = params_hash(params_);
}

FieldJet OracleField::evaluate(double t, const Eigen::MatrixXd& xs, JetOrder order) const {
  const int d = ref_.dim;
  if (xs.rows() != d) throw std::invalid_argument("OracleField: dimension mismatch");
  const Eigen::Index P = xs.cols();
  FieldJet jet;
  jet.value.resize(d, P);
  if (order >= JetOrder::Jacobian) {
    jet.jac.resize(d * d, P);
    jet.div.resize(P);
  }
  if (order == JetOrder::Full) jet.grad_div = Eigen::MatrixXd::Zero(d, P);
  for (Eigen::Index p = 0; p < P; ++p) {
    const Eigen::VectorXd x = xs.col(p);
    jet.value.col(p) = underlying_velocity(ref_, t, x);
    if (order >= JetOrder::Jacobian) fill_jacobian(jet, p, underlying_jacobian(ref_, t, x));
  }
  return jet;
}

void OracleField::pullback(double, const Eigen::MatrixXd&, const FieldCovectors&, Eigen::MatrixXd*,
                           Eigen::VectorXd*, Eigen::MatrixXd*) const {
  throw std::logic_error("OracleField: reverse mode is not available for the reference field");
}

std::uint64_t OracleField::fingerprint() const {
  const double v[5] = {static_cast<double>(ref_.kind), ref_.nu, ref_.t0, ref_.stiffness,
                       ref_.sigma0};
  return hash_doubles(0x6f7261636c65ULL, v, 5);
}

AffineField::AffineField(Eigen::MatrixXd a, Eigen::VectorXd c, Eigen::VectorXd b)
    : a_(std::move(a)), c_(std::move(c)), b_(std::move(b)) {
  if (a_.rows() != a_.cols() || c_.size() != a_.rows() || b_.size() != a_.rows()) {
    throw std::invalid_argument("AffineField: inconsistent shapes");
  }
}

FieldJet AffineField::evaluate(double t, const Eigen::MatrixXd& xs, JetOrder order) const {
  const auto d = a_.rows();
  if (xs.rows() != d) throw std::invalid_argument("AffineField: dimension mismatch");
  FieldJet jet;
  jet.value = a_ * xs;
  jet.value.colwise() += c_ + t * b_;
  if (order >= JetOrder::Jacobian) {
    jet.jac = Eigen::Map<const Eigen::VectorXd>(a_.data(), d * d).replicate(1, xs.cols());
    jet.div = Eigen::VectorXd::Constant(xs.cols(), a_.trace());
  }
  if (order == JetOrder::Full) jet.grad_div = Eigen::MatrixXd::Zero(d, xs.cols());
  return jet;
}

void AffineField::pullback(double, const Eigen::MatrixXd& xs, const FieldCovectors& cov,
                           Eigen::MatrixXd* x_bar, Eigen::VectorXd*,
                           Eigen::MatrixXd* jac_beta) const {
  if (x_bar && cov.alpha) *x_bar += a_.transpose() * *cov.alpha;
  if (jac_beta) {
    if (!cov.beta) throw std::invalid_argument("AffineField: jac_beta requires beta");
    *jac_beta = a_ * *cov.beta;
  }
  (void)xs;
}

std::uint64_t AffineField::fingerprint() const {
  std::uint64_t h = hash_doubles(0x616666ULL, a_.data(), a_.size());
  h = hash_doubles(h, c_.data(), c_.size());
  return hash_doubles(h, b_.data(), b_.size());
}

}  // namespace einn
