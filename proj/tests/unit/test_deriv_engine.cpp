#include <cmath>
#include <vector>

#include "doctest.h"
#include "einn/composition.hpp"
#include "einn/dual_tower.hpp"
#include "einn/rng.hpp"
#include "einn/velocity_net.hpp"

using namespace einn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const std::vector<double> kNoParams;

Composition square_1d() {
  Composition::Builder b(1);
  return std::move(b).build(b.mul(b.input(), b.input()));
}

Composition tanh_1d() {
  Composition::Builder b(1);
  return std::move(b).build(b.tanh(b.input()));
}

// f(x) = (x1 * x2, x1 + x2)
Composition product_and_sum() {
  Composition::Builder b(2);
  MatrixXd p1(1, 2), p2(1, 2), s(2, 2);
  p1 << 1, 0;
  p2 << 0, 1;
  const int x1 = b.affine_const(b.input(), p1, VectorXd::Zero(1));
  const int x2 = b.affine_const(b.input(), p2, VectorXd::Zero(1));
  const int prod = b.mul(x1, x2);
  const int sum = b.affine_const(b.input(), MatrixXd::Ones(1, 2), VectorXd::Zero(1));
  MatrixXd stack(2, 2);
  stack << 1, 0, 0, 0;
  MatrixXd stack2(2, 1), stack3(2, 1);
  stack2 << 1, 0;
  stack3 << 0, 1;
  const int a = b.affine_const(prod, stack2, VectorXd::Zero(2));
  const int c = b.affine_const(sum, stack3, VectorXd::Zero(2));
  return std::move(b).build(b.add(a, c));
}

// f(x) = (x1^2, x2^2)
Composition squares_2d() {
  Composition::Builder b(2);
  return std::move(b).build(b.mul(b.input(), b.input()));
}

Composition linear(const MatrixXd& a) {
  Composition::Builder b(static_cast<int>(a.cols()));
  return std::move(b).build(b.affine_const(b.input(), a, VectorXd::Zero(a.rows())));
}

// Random tanh network with mixed primitives, parameterized.
Composition random_net(int in, int out, int width) {
  Composition::Builder b(in);
  int h = b.tanh(b.affine(b.input(), width));
  const int g = b.tanh(b.affine(h, width));
  h = b.add(b.mul(h, g), b.scale(g, 0.7));
  return std::move(b).build(b.affine(h, out));
}

VectorXd random_vec(Rng& rng, Eigen::Index n, double lo, double hi) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = lo + (hi - lo) * rng.uniform();
  return v;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

}  // namespace

TEST_CASE("plain arithmetic is reproduced when all perturbations vanish") {
  Rng rng(3);
  for (int level = 0; level <= 3; ++level) {
    const double a = rng.normal(), b = rng.normal();
    const DualTower ta(level, a), tb(level, b);
    CHECK((ta * tb).value() == a * b);
    CHECK((ta + tb).value() == a + b);
    CHECK((ta - tb).value() == a - b);
    CHECK(tanh(ta).value() == std::tanh(a));
    for (unsigned m = 1; m < (ta * tb).size(); ++m) CHECK((ta * tb)[m] == 0.0);
  }
}

TEST_CASE("mixing tower levels throws") {
  CHECK_THROWS_AS(DualTower(1, 1.0) + DualTower(2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(DualTower(1, 1.0) * DualTower(0, 1.0), std::invalid_argument);
}

TEST_CASE("directional derivative examples") {
  const std::vector<double> none;
  const VectorXd one = VectorXd::Ones(1);
  CHECK(directional_derivative(square_1d(), none, VectorXd::Constant(1, 3.0), one, 1)(0) ==
        doctest::Approx(6.0).epsilon(1e-15));
  CHECK(std::abs(directional_derivative(tanh_1d(), none, VectorXd::Zero(1), one, 2)(0)) < 1e-15);
  const double got = directional_derivative(tanh_1d(), none, VectorXd::Constant(1, 0.5), one, 1)(0);
  const double h = 1e-5;
  const double fd = (std::tanh(0.5 + h) - std::tanh(0.5 - h)) / (2 * h);
  CHECK(rel_err(got, fd) < 1e-9);
  CHECK(got == doctest::Approx(0.786448).epsilon(1e-6));
}

TEST_CASE("order outside 1..3 and unsupported primitives are rejected") {
  const VectorXd one = VectorXd::Ones(1);
  CHECK_THROWS_AS(directional_derivative(tanh_1d(), kNoParams, one, one, 0), std::invalid_argument);
  CHECK_THROWS_AS(directional_derivative(tanh_1d(), kNoParams, one, one, 4), std::invalid_argument);
  Composition::Builder b(1);
  const int args[1] = {b.input()};
  CHECK_THROWS_AS(b.apply("sin", args), std::invalid_argument);
  CHECK_NOTHROW(b.apply("tanh", args));
}

TEST_CASE("jacobian examples") {
  MatrixXd a(2, 2);
  a << 1, 2, 3, 4;
  CHECK((jacobian(linear(a), kNoParams, VectorXd::Random(2)) - a).norm() == 0.0);
  MatrixXd expect(2, 2);
  expect << 3, 2, 1, 1;
  VectorXd p(2);
  p << 2, 3;
  CHECK((jacobian(product_and_sum(), kNoParams, p) - expect).norm() < 1e-15);
  CHECK((jacobian(linear(MatrixXd::Identity(3, 3)), kNoParams, VectorXd::Random(3)) -
         MatrixXd::Identity(3, 3))
            .norm() == 0.0);
  CHECK_THROWS_AS(jacobian(linear(a), kNoParams, VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("grad_divergence examples") {
  MatrixXd a(2, 2);
  a << 1, 2, 3, 4;
  CHECK(grad_divergence(linear(a), kNoParams, VectorXd::Random(2)).norm() == 0.0);
  VectorXd p(2);
  p << 1, 2;
  const VectorXd gd = grad_divergence(squares_2d(), kNoParams, p);
  CHECK(gd(0) == doctest::Approx(2.0));
  CHECK(gd(1) == doctest::Approx(2.0));
  MatrixXd swap(2, 2);
  swap << 0, 1, 1, 0;
  CHECK(grad_divergence(linear(swap), kNoParams, VectorXd::Random(2)).norm() == 0.0);
  CHECK_THROWS_AS(grad_divergence(linear(MatrixXd::Ones(1, 2)), kNoParams, p),
                  std::invalid_argument);
}

TEST_CASE("param_vjp examples") {
  // f(x; theta) = theta * x, scalar, no bias
  Composition::Builder b1(1);
  const Composition lin = std::move(b1).build(b1.affine(b1.input(), 1, false));
  const std::vector<double> theta0 = {0.0};
  CHECK(param_vjp(lin, VectorXd::Constant(1, 2.0), theta0, VectorXd::Ones(1))(0) == 2.0);

  Composition::Builder b2(1);
  const Composition th = std::move(b2).build(b2.tanh(b2.affine(b2.input(), 1, false)));
  CHECK(param_vjp(th, VectorXd::Ones(1), theta0, VectorXd::Ones(1))(0) == doctest::Approx(1.0));

  const Composition net = random_net(3, 2, 5);
  Rng rng(5);
  const VectorXd params = random_vec(rng, static_cast<Eigen::Index>(net.param_count()), -1, 1);
  const std::span<const double> ps(params.data(), static_cast<std::size_t>(params.size()));
  CHECK(param_vjp(net, VectorXd::Random(3), ps, VectorXd::Zero(2)).norm() == 0.0);
  CHECK_THROWS_AS(param_vjp(net, VectorXd::Random(3), ps, VectorXd::Zero(3)),
                  std::invalid_argument);
}

TEST_CASE("first-order directional derivatives agree with central differences") {
  Rng rng(11);
  const Composition net = random_net(3, 2, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd params = random_vec(rng, static_cast<Eigen::Index>(net.param_count()), -1, 1);
    const std::span<const double> ps(params.data(), static_cast<std::size_t>(params.size()));
    const VectorXd x = random_vec(rng, 3, -2, 2);
    const VectorXd u = random_vec(rng, 3, -2, 2);
    const VectorXd got = directional_derivative(net, ps, x, u, 1);
    const double h = 1e-5;
    const VectorXd fd = (net.evaluate(x + h * u, ps) - net.evaluate(x - h * u, ps)) / (2 * h);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(got(i) - fd(i)) / std::max(std::abs(fd(i)), 1e-3) <= 1e-6);
    }
  }
}

TEST_CASE("perpendicular gradient of a scalar net has a traceless jacobian") {
  Rng rng(12);
  const Composition phi = random_net(2, 1, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd params = random_vec(rng, static_cast<Eigen::Index>(phi.param_count()), -1, 1);
    const std::span<const double> ps(params.data(), static_cast<std::size_t>(params.size()));
    const VectorXd x = random_vec(rng, 2, -2, 2);
    const VectorXd e1 = VectorXd::Unit(2, 0), e2 = VectorXd::Unit(2, 1);
    // f = (d2 phi, -d1 phi): trace = d1 d2 phi - d2 d1 phi
    const VectorXd d12[2] = {e1, e2};
    const VectorXd d21[2] = {e2, e1};
    const double trace = mixed_derivative(phi, ps, x, d12)(0) - mixed_derivative(phi, ps, x, d21)(0);
    CHECK(std::abs(trace) <= 1e-12);
  }
}

TEST_CASE("nested order-2 derivative is the derivative of the order-1 function") {
  // cubic polynomial f(x) = (x1^2 x2, x1 x2 + x2^2): D_u f is quadratic, so a
  // central difference of it with a coarse step is exact up to rounding.
  Composition::Builder b(2);
  MatrixXd s(2, 2);
  s << 0, 1, 1, 0;
  const int sw = b.affine_const(b.input(), s, VectorXd::Zero(2));
  const int sq = b.mul(b.input(), b.input());
  const int cross = b.mul(b.input(), sw);
  MatrixXd pick(2, 2);
  pick << 1, 0, 0, 0;
  const int t1 = b.mul(b.affine_const(sq, pick, VectorXd::Zero(2)), sw);
  MatrixXd pick2(2, 2);
  pick2 << 0, 0, 1, 0;
  MatrixXd pick3(2, 2);
  pick3 << 0, 0, 0, 1;
  const int t2 = b.add(b.affine_const(cross, pick2, VectorXd::Zero(2)),
                       b.affine_const(sq, pick3, VectorXd::Zero(2)));
  const Composition f = std::move(b).build(b.add(t1, t2));
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const VectorXd x = random_vec(rng, 2, -2, 2);
    const VectorXd u = random_vec(rng, 2, -2, 2);
    const double h = 0.5;
    const VectorXd fd = (directional_derivative(f, kNoParams, x + h * u, u, 1) -
                         directional_derivative(f, kNoParams, x - h * u, u, 1)) /
                        (2 * h);
    const VectorXd d2 = directional_derivative(f, kNoParams, x, u, 2);
    for (int i = 0; i < 2; ++i) CHECK(rel_err(d2(i), fd(i)) <= 1e-10);
    // third order: D_u^2 f is linear, so its central difference is exact too.
    const VectorXd fd3 = (directional_derivative(f, kNoParams, x + h * u, u, 2) -
                          directional_derivative(f, kNoParams, x - h * u, u, 2)) /
                         (2 * h);
    const VectorXd d3 = directional_derivative(f, kNoParams, x, u, 3);
    for (int i = 0; i < 2; ++i) CHECK(rel_err(d3(i), fd3(i)) <= 1e-10);
  }
}

TEST_CASE("param_vjp agrees with finite differences, also through tower inputs") {
  Rng rng(21);
  const Composition net = random_net(3, 2, 5);
  const auto n = static_cast<Eigen::Index>(net.param_count());
  VectorXd params = random_vec(rng, n, -1, 1);
  const VectorXd x = random_vec(rng, 3, -2, 2);
  const VectorXd cov = random_vec(rng, 2, -1, 1);
  auto loss = [&](const VectorXd& p) {
    return cov.dot(net.evaluate(x, std::span<const double>(p.data(), static_cast<std::size_t>(n))));
  };
  const VectorXd g = param_vjp(net, x, std::span<const double>(params.data(), static_cast<std::size_t>(n)), cov);

  // Covector on a second-order mixed derivative of the output.
  const VectorXd u = random_vec(rng, 3, -1, 1), w = random_vec(rng, 3, -1, 1);
  const VectorXd dirs[2] = {u, w};
  auto loss2 = [&](const VectorXd& p) {
    return cov.dot(mixed_derivative(net, std::span<const double>(p.data(), static_cast<std::size_t>(n)), x, dirs));
  };
  Composition::Towers in;
  for (int i = 0; i < 3; ++i) {
    const double seeds[2] = {u(i), w(i)};
    in.push_back(DualTower::variable(2, x(i), seeds));
  }
  Composition::Towers bar;
  for (int i = 0; i < 2; ++i) {
    DualTower t(2, 0.0);
    t[3] = cov(i);
    bar.push_back(t);
  }
  const VectorXd g2 =
      net.pullback(in, std::span<const double>(params.data(), static_cast<std::size_t>(n)), bar).params;

  for (int k = 0; k < 10; ++k) {
    const auto idx = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n));
    const double h = 1e-5;
    VectorXd pp = params, pm = params;
    pp(idx) += h;
    pm(idx) -= h;
    const double fd = (loss(pp) - loss(pm)) / (2 * h);
    CHECK(std::abs(g(idx) - fd) / std::max(std::abs(fd), 1e-6) <= 1e-5);
    const double fd2 = (loss2(pp) - loss2(pm)) / (2 * h);
    CHECK(std::abs(g2(idx) - fd2) / std::max(std::abs(fd2), 1e-6) <= 1e-5);
  }
}

TEST_CASE("velocity net composition matches the batched evaluator") {
  const Arch arch = Arch::mlp(2, 2, 6);
  const NetParams p = init_params(arch, 4);
  const Composition c = net_composition(arch);
  REQUIRE(c.param_count() == arch.param_count());
  const std::span<const double> ps(p.theta.data(), static_cast<std::size_t>(p.theta.size()));
  VectorXd tx(3);
  tx << 0.3, 0.5, -0.8;
  const VectorXd v = c.evaluate(tx, ps);
  const FieldJet jet = evaluate_batch(p, 0.3, tx.tail(2), JetOrder::Value);
  CHECK((v - jet.value.col(0)).norm() < 1e-14);
}
