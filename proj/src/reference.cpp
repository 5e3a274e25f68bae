#include "einn/reference.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "einn/rng.hpp"

namespace einn {

namespace {

constexpr double kPi = std::numbers::pi;

void check_point(const ReferenceSolution& ref, const Eigen::VectorXd& x) {
  if (x.size() != ref.dim) throw std::invalid_argument("reference: point dimension mismatch");
}

bool gaussian(const ReferenceSolution& ref) { return ref.kind != ReferenceKind::Barenblatt; }

// Oseen swirl (1/2pi) x_perp / |x|^2 (1 - exp(-|x|^2 / (2 var))) = phi(|x|^2) x_perp
double swirl_phi(double s, double var) {
  const double a = 0.5 / var;
  if (a * s < 1e-8) return a * (1.0 - 0.5 * a * s) / (2.0 * kPi);
  return -std::expm1(-a * s) / (2.0 * kPi * s);
}

double swirl_dphi(double s, double var) {
  const double a = 0.5 / var;
  const double as = a * s;
  if (as < 1e-3) {
    return a * a * (-0.5 + as / 3.0 - as * as / 8.0 + as * as * as / 30.0) / (2.0 * kPi);
  }
  return (as * std::exp(-as) + std::expm1(-as)) / (2.0 * kPi * s * s);
}

}  // namespace

ReferenceSolution ReferenceSolution::lamb_oseen(double nu, double t0) {
  ReferenceSolution r{ReferenceKind::LambOseen, 2, nu, t0, 0.0, 1.0};
  r.validate();
  return r;
}

ReferenceSolution ReferenceSolution::barenblatt(double t0) {
  ReferenceSolution r{ReferenceKind::Barenblatt, 3, 0.0, t0, 0.0, 1.0};
  r.validate();
  return r;
}

ReferenceSolution ReferenceSolution::ornstein_uhlenbeck(int dim, double nu, double stiffness,
                                                        double sigma0) {
  ReferenceSolution r{ReferenceKind::OrnsteinUhlenbeck, dim, nu, 0.0, stiffness, sigma0};
  r.validate();
  return r;
}

void ReferenceSolution::validate() const {
  switch (kind) {
    case ReferenceKind::LambOseen:
      if (dim != 2) throw std::invalid_argument("Lamb-Oseen reference needs d = 2");
      if (!(nu > 0.0)) throw std::invalid_argument("Lamb-Oseen reference needs nu > 0");
      if (!(t0 > 0.0)) throw std::invalid_argument("Lamb-Oseen reference needs t0 > 0");
      break;
    case ReferenceKind::Barenblatt:
      if (dim != 3) throw std::invalid_argument("Barenblatt reference needs d = 3");
      if (nu != 0.0) throw std::invalid_argument("Barenblatt reference needs nu = 0");
      if (!(t0 > 0.0)) throw std::invalid_argument("Barenblatt reference needs t0 > 0");
      break;
    case ReferenceKind::OrnsteinUhlenbeck:
      if (dim < 1) throw std::invalid_argument("OU reference needs d >= 1");
      if (!(nu >= 0.0)) throw std::invalid_argument("OU reference needs nu >= 0");
      if (!(stiffness > 0.0)) throw std::invalid_argument("OU reference needs stiffness > 0");
      if (!(sigma0 > 0.0)) throw std::invalid_argument("OU reference needs sigma0 > 0");
      break;
  }
}

double ReferenceSolution::variance(double t) const {
  switch (kind) {
    case ReferenceKind::LambOseen:
      return 2.0 * nu * (t + t0);
    case ReferenceKind::OrnsteinUhlenbeck: {
      const double inf = nu / stiffness;
      return inf + (sigma0 * sigma0 - inf) * std::exp(-2.0 * stiffness * t);
    }
    case ReferenceKind::Barenblatt:
      break;
  }
  throw std::invalid_argument("variance: reference is not Gaussian");
}

double ReferenceSolution::radius(double t) const {
  if (kind != ReferenceKind::Barenblatt) {
    throw std::invalid_argument("radius: reference is not Barenblatt");
  }
  return std::cbrt(3.0 * (t + t0) / (4.0 * kPi));
}

const char* reference_name(ReferenceKind kind) {
  switch (kind) {
    case ReferenceKind::LambOseen:
      return "lamb_oseen";
    case ReferenceKind::Barenblatt:
      return "barenblatt";
    case ReferenceKind::OrnsteinUhlenbeck:
      return "ou";
  }
  return "?";
}

double log_density(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x) {
  check_point(ref, x);
  if (gaussian(ref)) {
    const double var = ref.variance(t);
    return -0.5 * x.squaredNorm() / var - 0.5 * ref.dim * std::log(2.0 * kPi * var);
  }
  if (x.norm() > ref.radius(t)) return -std::numeric_limits<double>::infinity();
  return -std::log(t + ref.t0);
}

double density(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x) {
  return std::exp(log_density(ref, t, x));
}

bool in_support(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x, double margin) {
  check_point(ref, x);
  if (gaussian(ref)) return true;
  return x.norm() < ref.radius(t) - margin;
}

Eigen::VectorXd score(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x) {
  check_point(ref, x);
  if (gaussian(ref)) return -x / ref.variance(t);
  if (!in_support(ref, t, x)) {
    throw std::domain_error("score: undefined on or outside the Barenblatt support");
  }
  return Eigen::VectorXd::Zero(3);
}

Eigen::MatrixXd score_batch(const ReferenceSolution& ref, double t, const Eigen::MatrixXd& xs) {
  Eigen::MatrixXd out(xs.rows(), xs.cols());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) out.col(i) = score(ref, t, xs.col(i));
  return out;
}

Eigen::VectorXd convolution_field(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x) {
  check_point(ref, x);
  switch (ref.kind) {
    case ReferenceKind::LambOseen: {
      const double s = x.squaredNorm();
      if (s == 0.0) return Eigen::VectorXd::Zero(2);
      const double phi = swirl_phi(s, ref.variance(t));
      return Eigen::Vector2d(-x(1), x(0)) * phi;
    }
    case ReferenceKind::Barenblatt: {
      const double tau = t + ref.t0;
      const double r = x.norm();
      if (r <= ref.radius(t)) return x / (3.0 * tau);
      return x / (4.0 * kPi * r * r * r);
    }
    case ReferenceKind::OrnsteinUhlenbeck:
      return Eigen::VectorXd::Zero(ref.dim);
  }
  return {};
}

Eigen::VectorXd underlying_velocity(const ReferenceSolution& ref, double t,
                                    const Eigen::VectorXd& x) {
  check_point(ref, x);
  switch (ref.kind) {
    case ReferenceKind::LambOseen:
      return convolution_field(ref, t, x) + ref.nu * x / ref.variance(t);
    case ReferenceKind::Barenblatt:
      return convolution_field(ref, t, x);
    case ReferenceKind::OrnsteinUhlenbeck:
      return (ref.nu / ref.variance(t) - ref.stiffness) * x;
  }
  return {};
}

Eigen::MatrixXd underlying_jacobian(const ReferenceSolution& ref, double t,
                                    const Eigen::VectorXd& x) {
  check_point(ref, x);
  const int d = ref.dim;
  switch (ref.kind) {
    case ReferenceKind::LambOseen: {
      const double var = ref.variance(t);
      const double s = x.squaredNorm();
      const double phi = swirl_phi(s, var), dphi = swirl_dphi(s, var);
      const Eigen::Vector2d perp(-x(1), x(0));
      Eigen::Matrix2d j;
      j << 0.0, -phi, phi, 0.0;
      j += 2.0 * dphi * perp * x.transpose();
      j += (ref.nu / var) * Eigen::Matrix2d::Identity();
      return j;
    }
    case ReferenceKind::Barenblatt: {
      const double r = x.norm();
      if (r <= ref.radius(t)) return Eigen::MatrixXd::Identity(3, 3) / (3.0 * (t + ref.t0));
      const double r3 = r * r * r;
      return (Eigen::MatrixXd::Identity(3, 3) / r3 - 3.0 * x * x.transpose() / (r3 * r * r)) /
             (4.0 * kPi);
    }
    case ReferenceKind::OrnsteinUhlenbeck:
      return (ref.nu / ref.variance(t) - ref.stiffness) * Eigen::MatrixXd::Identity(d, d);
  }
  return {};
}

double barenblatt_potential(const ReferenceSolution& ref, double t, const Eigen::VectorXd& x) {
  check_point(ref, x);
  if (ref.kind != ReferenceKind::Barenblatt) {
    throw std::invalid_argument("barenblatt_potential: not a Barenblatt reference");
  }
  const double big_r = ref.radius(t);
  const double r = x.norm();
  if (r <= big_r) return (3.0 * big_r * big_r - r * r) / (6.0 * (t + ref.t0));
  return 1.0 / (4.0 * kPi * r);
}

Eigen::MatrixXd sample(const ReferenceSolution& ref, double t, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  ref.validate();
  const int d = ref.dim;
  Eigen::MatrixXd out(d, count);
  Rng rng(seed, 0x73616d706c65ULL);
  if (gaussian(ref)) {
    const double sd = std::sqrt(ref.variance(t));
    for (int i = 0; i < count; ++i) {
      for (int k = 0; k < d; ++k) out(k, i) = sd * rng.normal();
    }
    return out;
  }
  const double big_r = ref.radius(t);
  for (int i = 0; i < count; ++i) {
    Eigen::Vector3d g;
    double n2 = 0.0;
    do {
      for (int k = 0; k < 3; ++k) g(k) = rng.normal();
      n2 = g.squaredNorm();
    } while (n2 == 0.0);
    const double r = big_r * std::cbrt(rng.uniform());
    out.col(i) = g * (r / std::sqrt(n2));
  }
  return out;
}

}  // namespace einn
