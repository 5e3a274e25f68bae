#include <cmath>
#include <numbers>

#include "doctest.h"
#include "einn/kernels.hpp"
#include "einn/reference.hpp"
#include "einn/rng.hpp"

using namespace einn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

MatrixXd fd_jacobian(const ReferenceSolution& ref, double t, const VectorXd& x, double h) {
  MatrixXd j(x.size(), x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    VectorXd xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    j.col(c) = (underlying_velocity(ref, t, xp) - underlying_velocity(ref, t, xm)) / (2 * h);
  }
  return j;
}

}  // namespace

TEST_CASE("validation of reference parameters") {
  CHECK_NOTHROW(ReferenceSolution::lamb_oseen().validate());
  CHECK_NOTHROW(ReferenceSolution::barenblatt().validate());
  CHECK_NOTHROW(ReferenceSolution::ornstein_uhlenbeck(3, 0.1, 1.0, 0.5).validate());
  ReferenceSolution bad = ReferenceSolution::lamb_oseen();
  bad.nu = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ReferenceSolution::barenblatt();
  bad.nu = 0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ReferenceSolution::barenblatt();
  bad.dim = 2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(ReferenceSolution::ornstein_uhlenbeck(2, 0.1, 0.0, 1.0).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(ReferenceSolution::barenblatt().variance(0.0), std::invalid_argument);
  CHECK_THROWS_AS(ReferenceSolution::lamb_oseen().radius(0.0), std::invalid_argument);
}

TEST_CASE("density examples") {
  const ReferenceSolution b = ReferenceSolution::barenblatt(0.1);
  CHECK(density(b, 0.0, vec({0.1, 0, 0})) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(b.radius(0.0) == doctest::Approx(0.28794).epsilon(1e-5));
  CHECK(b.radius(0.0) == doctest::Approx(std::cbrt(0.3 / (4 * kPi))).epsilon(1e-14));
  CHECK(density(b, 0.0, vec({0.29, 0, 0})) == 0.0);
  CHECK(density(b, 0.9, vec({0.29, 0, 0})) == doctest::Approx(1.0));
  CHECK(log_density(b, 0.0, vec({0, 0, 0.3})) == -std::numeric_limits<double>::infinity());

  const ReferenceSolution lo = ReferenceSolution::lamb_oseen(0.1, 0.1);
  CHECK(lo.variance(0.0) == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(density(lo, 0.0, VectorXd::Zero(2)) == doctest::Approx(7.9577).epsilon(1e-4));
  CHECK(density(lo, 0.0, VectorXd::Zero(2)) == doctest::Approx(1 / (2 * kPi * 0.02)).epsilon(1e-14));
  const VectorXd x = vec({0.1, -0.2});
  CHECK(std::log(density(lo, 0.4, x)) == doctest::Approx(log_density(lo, 0.4, x)).epsilon(1e-13));
}

TEST_CASE("densities integrate to one") {
  // midpoint rule on a grid wide enough to hold the mass
  const ReferenceSolution lo = ReferenceSolution::lamb_oseen();
  const int n = 400;
  const double half = 3.0, h = 2 * half / n;
  double mass = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      mass += density(lo, 0.5, vec({-half + (i + 0.5) * h, -half + (j + 0.5) * h})) * h * h;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

  const ReferenceSolution b = ReferenceSolution::barenblatt();
  const double t = 0.3;
  CHECK(density(b, t, VectorXd::Zero(3)) * 4.0 / 3.0 * kPi * std::pow(b.radius(t), 3) ==
        doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("score examples and finite differences") {
  const ReferenceSolution lo = ReferenceSolution::lamb_oseen(0.1, 0.1);
  CHECK(score(lo, 0.0, VectorXd::Zero(2)).isZero(0.0));
  const VectorXd s = score(lo, 0.0, vec({0.2, 0}));
  CHECK(s(0) == doctest::Approx(-10.0).epsilon(1e-13));
  CHECK(s(1) == 0.0);

  const ReferenceSolution b = ReferenceSolution::barenblatt();
  CHECK(score(b, 0.0, vec({0.05, 0.1, -0.1})).isZero(0.0));
  CHECK_THROWS_AS(score(b, 0.0, vec({0.3, 0, 0})), std::domain_error);
  CHECK_THROWS_AS(score(b, 0.0, vec({b.radius(0.0), 0, 0})), std::domain_error);

  const ReferenceSolution ou = ReferenceSolution::ornstein_uhlenbeck(3, 0.2, 0.8, 0.6);
  for (const ReferenceSolution& r : {lo, ou}) {
    const VectorXd x = VectorXd::LinSpaced(r.dim, -0.3, 0.2);
    const VectorXd sc = score(r, 0.35, x);
    for (int i = 0; i < r.dim; ++i) {
      VectorXd xp = x, xm = x;
      xp(i) += 1e-6;
      xm(i) -= 1e-6;
      const double fd = (log_density(r, 0.35, xp) - log_density(r, 0.35, xm)) / 2e-6;
      CHECK(sc(i) == doctest::Approx(fd).epsilon(1e-7).scale(1.0));
    }
  }
  const MatrixXd pts = sample(lo, 0.2, 5, 3);
  const MatrixXd sb = score_batch(lo, 0.2, pts);
  for (int j = 0; j < 5; ++j) CHECK(sb.col(j) == score(lo, 0.2, pts.col(j)));
}

TEST_CASE("support predicate") {
  const ReferenceSolution b = ReferenceSolution::barenblatt();
  const double r = b.radius(0.0);
  CHECK(in_support(b, 0.0, vec({r * 0.99, 0, 0})));
  CHECK_FALSE(in_support(b, 0.0, vec({r * 1.01, 0, 0})));
  CHECK_FALSE(in_support(b, 0.0, vec({r * (1 - 1e-12), 0, 0}), 1e-9));
  CHECK(in_support(ReferenceSolution::lamb_oseen(), 0.0, vec({100, 100})));
}

TEST_CASE("underlying velocity examples") {
  const ReferenceSolution b = ReferenceSolution::barenblatt(0.1);
  const VectorXd v = underlying_velocity(b, 0.0, vec({0.1, 0, 0}));
  CHECK(v(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(v.tail(2).isZero(0.0));
  // outside the ball the field is the point-mass Coulomb field
  const VectorXd out = vec({0.5, 0.2, -0.1});
  CHECK((underlying_velocity(b, 0.0, out) - coulomb_K(3, out)).norm() <= 1e-15);
  // continuous across the boundary
  const VectorXd edge = vec({b.radius(0.0), 0, 0});
  CHECK((underlying_velocity(b, 0.0, edge * (1 - 1e-10)) -
         underlying_velocity(b, 0.0, edge * (1 + 1e-10)))
            .norm() <= 1e-8);

  const ReferenceSolution lo = ReferenceSolution::lamb_oseen();
  CHECK(underlying_velocity(lo, 0.0, VectorXd::Zero(2)).isZero(0.0));
  CHECK(convolution_field(lo, 0.0, VectorXd::Zero(2)).isZero(0.0));
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    const VectorXd x = vec({2 * rng.uniform() - 1, 2 * rng.uniform() - 1});
    const VectorXd u = convolution_field(lo, 0.3, x);
    CHECK(std::abs(u.dot(x)) <= 1e-15 * (1 + u.norm()));
    // radial part is exactly -nu * score = x / (2 (t + t0))
    const VectorXd w = underlying_velocity(lo, 0.3, x);
    CHECK((w - u - x / (2 * 0.4)).norm() <= 1e-14);
  }
}

TEST_CASE("Oseen swirl closed form") {
  // u_t(x) = v(x / sqrt(nu tau)) / sqrt(nu tau), v(y) = y_perp (1 - exp(-|y|^2/4)) / (2 pi |y|^2)
  const ReferenceSolution lo = ReferenceSolution::lamb_oseen(0.1, 0.1);
  const double t = 0.25, c = std::sqrt(0.1 * (t + 0.1));
  for (const VectorXd& x : {vec({0.3, 0.4}), vec({-1.0, 0.2}), vec({1e-5, 2e-5})}) {
    const VectorXd y = x / c;
    const double y2 = y.squaredNorm();
    const VectorXd perp = vec({-y(1), y(0)});
    const VectorXd v = perp * (-std::expm1(-y2 / 4)) / (2 * kPi * y2) / c;
    CHECK((convolution_field(lo, t, x) - v).norm() <= 1e-13 * (1 + v.norm()));
  }
}

TEST_CASE("curl of the swirl equals the density") {
  const ReferenceSolution lo = ReferenceSolution::lamb_oseen();
  const double h = 1e-4;
  for (double t : {0.0, 0.5, 1.0}) {
    const MatrixXd pts = sample(lo, t, 40, 11);
    for (int j = 0; j < pts.cols(); ++j) {
      const VectorXd x = pts.col(j);
      const VectorXd e0 = vec({h, 0}), e1 = vec({0, h});
      const double curl = (convolution_field(lo, t, x + e0)(1) - convolution_field(lo, t, x - e0)(1) -
                           convolution_field(lo, t, x + e1)(0) + convolution_field(lo, t, x - e1)(0)) /
                          (2 * h);
      CHECK(curl == doctest::Approx(density(lo, t, x)).epsilon(1e-5));
    }
  }
}

TEST_CASE("swirl is divergence free and matches the Biot-Savart convolution") {
  const ReferenceSolution lo = ReferenceSolution::lamb_oseen();
  const double h = 1e-4;
  const VectorXd x = vec({0.2, -0.15});
  const VectorXd e0 = vec({h, 0}), e1 = vec({0, h});
  const double div = (convolution_field(lo, 0.1, x + e0)(0) - convolution_field(lo, 0.1, x - e0)(0) +
                      convolution_field(lo, 0.1, x + e1)(1) - convolution_field(lo, 0.1, x - e1)(1)) /
                     (2 * h);
  CHECK(std::abs(div) <= 1e-7);
}

TEST_CASE("Barenblatt potential solves the Poisson equation") {
  const ReferenceSolution b = ReferenceSolution::barenblatt();
  const double h = 1e-3;
  for (double t : {0.0, 0.4, 1.0}) {
    const MatrixXd pts = 0.9 * sample(b, t, 30, 12);
    for (int j = 0; j < pts.cols(); ++j) {
      const VectorXd x = pts.col(j);
      double lap = 0;
      for (int i = 0; i < 3; ++i) {
        VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        lap += (barenblatt_potential(b, t, xp) - 2 * barenblatt_potential(b, t, x) +
                barenblatt_potential(b, t, xm)) /
               (h * h);
      }
      CHECK(std::abs(lap + density(b, t, x)) <= 1e-4 * density(b, t, x));
      // gradient gives the field
      for (int i = 0; i < 3; ++i) {
        VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const double g = (barenblatt_potential(b, t, xp) - barenblatt_potential(b, t, xm)) / (2 * h);
        CHECK(-g == doctest::Approx(convolution_field(b, t, x)(i)).epsilon(1e-6).scale(1.0));
      }
    }
  }
  // harmonic outside, continuous across the boundary
  const VectorXd far = vec({0.6, -0.3, 0.4});
  double lap = 0;
  for (int i = 0; i < 3; ++i) {
    VectorXd xp = far, xm = far;
    xp(i) += h;
    xm(i) -= h;
    lap += (barenblatt_potential(b, 0, xp) - 2 * barenblatt_potential(b, 0, far) +
            barenblatt_potential(b, 0, xm)) /
           (h * h);
  }
  CHECK(std::abs(lap) <= 1e-5);
  const VectorXd edge = vec({0, 0, b.radius(0.0)});
  CHECK(barenblatt_potential(b, 0, edge * (1 - 1e-12)) ==
        doctest::Approx(barenblatt_potential(b, 0, edge * (1 + 1e-12))).epsilon(1e-9));
}

TEST_CASE("Barenblatt flow map doubles the radius by t = 0.7") {
  // r' = r / (3 (t + t0)) solves to r(t) = r0 ((t + t0) / t0)^(1/3)
  const ReferenceSolution b = ReferenceSolution::barenblatt(0.1);
  const VectorXd x0 = vec({0.1, 0, 0});
  const VectorXd v0 = underlying_velocity(b, 0.0, x0);
  CHECK(v0(0) == doctest::Approx(x0(0) / (3 * 0.1)));
  CHECK(std::cbrt(0.8 / 0.1) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("underlying Jacobian matches finite differences") {
  const ReferenceSolution lo = ReferenceSolution::lamb_oseen();
  const ReferenceSolution b = ReferenceSolution::barenblatt();
  const ReferenceSolution ou = ReferenceSolution::ornstein_uhlenbeck(3, 0.2, 0.8, 0.6);
  for (const VectorXd& x : {vec({0.3, -0.2}), vec({1e-4, 3e-4}), vec({1.5, 0.7}), VectorXd(VectorXd::Zero(2))}) {
    const MatrixXd j = underlying_jacobian(lo, 0.3, x);
    CHECK((j - fd_jacobian(lo, 0.3, x, 1e-6)).norm() <= 1e-6 * (1 + j.norm()));
  }
  for (const VectorXd& x : {vec({0.1, 0.05, -0.02}), vec({0.5, 0.4, 0.3})}) {
    const MatrixXd j = underlying_jacobian(b, 0.2, x);
    CHECK((j - fd_jacobian(b, 0.2, x, 1e-6)).norm() <= 1e-6 * (1 + j.norm()));
  }
  const VectorXd x = vec({0.4, -0.1, 0.9});
  const MatrixXd jo = underlying_jacobian(ou, 0.5, x);
  CHECK((jo - fd_jacobian(ou, 0.5, x, 1e-6)).norm() <= 1e-7);
  CHECK(jo.isDiagonal(1e-15));
}

TEST_CASE("Ornstein-Uhlenbeck reference") {
  const double nu = 0.2, k = 0.8, s0 = 0.6;
  const ReferenceSolution ou = ReferenceSolution::ornstein_uhlenbeck(2, nu, k, s0);
  CHECK(ou.variance(0.0) == doctest::Approx(s0 * s0));
  const double t = 0.7;
  const double var = nu / k + (s0 * s0 - nu / k) * std::exp(-2 * k * t);
  CHECK(ou.variance(t) == doctest::Approx(var).epsilon(1e-14));
  // variance ODE v' = -2 k v + 2 nu
  const double dv = (ou.variance(t + 1e-6) - ou.variance(t - 1e-6)) / 2e-6;
  CHECK(dv == doctest::Approx(-2 * k * var + 2 * nu).epsilon(1e-8));
  const VectorXd x = vec({0.3, -0.5});
  CHECK((underlying_velocity(ou, t, x) - (-k * x - nu * score(ou, t, x))).norm() <= 1e-15);
  CHECK(convolution_field(ou, t, x).isZero(0.0));
  // stationary law: zero velocity
  const ReferenceSolution st = ReferenceSolution::ornstein_uhlenbeck(2, nu, k, std::sqrt(nu / k));
  CHECK(underlying_velocity(st, 0.4, x).norm() <= 1e-15);
}

TEST_CASE("samplers") {
  const ReferenceSolution b = ReferenceSolution::barenblatt();
  const MatrixXd ball = sample(b, 0.3, 5000, 1);
  CHECK(ball.rows() == 3);
  CHECK(ball.colwise().norm().maxCoeff() <= b.radius(0.3));
  // uniform in the ball: E|y|^2 = 3 R^2 / 5
  const double r2 = ball.colwise().squaredNorm().mean();
  CHECK(r2 == doctest::Approx(0.6 * b.radius(0.3) * b.radius(0.3)).epsilon(0.03));

  const ReferenceSolution lo = ReferenceSolution::lamb_oseen();
  const int n = 20000;
  const MatrixXd g = sample(lo, 0.5, n, 2);
  const double sd = std::sqrt(lo.variance(0.5));
  CHECK(g.rowwise().mean().cwiseAbs().maxCoeff() <= 4 * sd / std::sqrt(double(n)));
  const double var = g.array().square().mean();
  CHECK(var == doctest::Approx(lo.variance(0.5)).epsilon(0.05));

  CHECK(sample(lo, 0.5, 10, 99) == sample(lo, 0.5, 10, 99));
  CHECK(sample(lo, 0.5, 10, 99) != sample(lo, 0.5, 10, 100));
  CHECK_THROWS_AS(sample(lo, 0.0, 0, 1), std::invalid_argument);
}
