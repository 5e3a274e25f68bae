#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "einn/composition.hpp"
#include "einn/rng.hpp"
#include "einn/velocity_net.hpp"

using namespace einn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

NetParams random_params(const Arch& arch, std::uint64_t seed, double scale = 1.0) {
  NetParams p{arch, VectorXd(static_cast<Eigen::Index>(arch.param_count()))};
  Rng rng(seed);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta(i) = scale * (2 * rng.uniform() - 1);
  return p;
}

VectorXd with_time(double t, const VectorXd& x) {
  VectorXd tx(x.size() + 1);
  tx << t, x;
  return tx;
}

// f(t, x) = A x + b t as a net without hidden layers
NetParams linear_net(const MatrixXd& a, const VectorXd& b) {
  const auto d = static_cast<int>(a.rows());
  NetParams p{Arch::mlp(d, 0, 1), VectorXd::Zero((d + 2) * d)};
  for (int r = 0; r < d; ++r) {
    p.theta(r * (d + 1)) = b(r);
    for (int c = 0; c < d; ++c) p.theta(r * (d + 1) + 1 + c) = a(r, c);
  }
  return p;
}

}  // namespace

TEST_CASE("parameter count of the 7x20 network") {
  const Arch arch = Arch::mlp(2, 7, 20);
  CHECK(arch.widths.size() == 9);
  const std::size_t expected = 3 * 20 + 20 + 6 * (20 * 20 + 20) + 20 * 2 + 2;
  CHECK(expected == 2642);
  CHECK(arch.param_count() == expected);
  CHECK(static_cast<std::size_t>(init_params(arch, 0).theta.size()) == expected);
}

TEST_CASE("init_params is deterministic with zero biases and bounded weights") {
  const Arch arch = Arch::mlp(3, 2, 8);
  const NetParams a = init_params(arch, 42), b = init_params(arch, 42), c = init_params(arch, 43);
  CHECK(a.theta == b.theta);
  CHECK(a.theta != c.theta);
  std::size_t off = 0;
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int in = arch.widths[static_cast<std::size_t>(l)];
    const int out = arch.widths[static_cast<std::size_t>(l) + 1];
    const double lim = std::sqrt(6.0 / (in + out));
    for (int k = 0; k < in * out; ++k) CHECK(std::abs(a.theta(static_cast<Eigen::Index>(off) + k)) <= lim);
    for (int k = 0; k < out; ++k) CHECK(a.theta(static_cast<Eigen::Index>(off) + in * out + k) == 0.0);
    off += static_cast<std::size_t>((in + 1) * out);
  }
  CHECK_THROWS_AS(init_params(Arch{}, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_params(Arch{{3, 0, 2}}, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_params(Arch{{4, 5, 2}}, 1), std::invalid_argument);
}

TEST_CASE("zero network evaluates to zero everywhere") {
  const Arch arch = Arch::mlp(2, 3, 5);
  const NetParams p{arch, VectorXd::Zero(static_cast<Eigen::Index>(arch.param_count()))};
  const NetEval e = eval_full(p, 0.4, VectorXd::Random(2));
  CHECK(e.value.norm() == 0.0);
  CHECK(e.jac.norm() == 0.0);
  CHECK(e.div == 0.0);
  CHECK(e.grad_div.norm() == 0.0);
  CHECK(score_rhs(p, 0.4, VectorXd::Random(2), VectorXd::Random(2)).norm() == 0.0);
}

TEST_CASE("linear field reductions") {
  MatrixXd a(2, 2);
  a << 0.3, -1.2, 0.7, 0.5;
  VectorXd b(2);
  b << 0.2, -0.4;
  const NetParams p = linear_net(a, b);
  VectorXd x(2);
  x << 0.4, -1.1;
  const NetEval e = eval_full(p, 0.5, x);
  CHECK((e.value - (a * x + 0.5 * b)).norm() < 1e-15);
  CHECK((e.jac - a).norm() < 1e-15);
  CHECK(e.grad_div.norm() == 0.0);
  const VectorXd xi = VectorXd::Random(2);
  CHECK((score_rhs(p, 0.5, x, xi) + a.transpose() * xi).norm() < 1e-15);
  CHECK(score_rhs(p, 0.5, x, VectorXd::Zero(2)).norm() == 0.0);
}

TEST_CASE("non-finite and mismatched inputs are rejected") {
  const NetParams p = init_params(Arch::mlp(2, 1, 3), 1);
  VectorXd bad(2);
  bad << NAN, 0.0;
  CHECK_THROWS_AS(eval_full(p, 0.0, bad), std::invalid_argument);
  CHECK_THROWS_AS(eval_full(p, INFINITY, VectorXd::Zero(2)), std::invalid_argument);
  CHECK_THROWS_AS(eval_full(p, 0.0, VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("batched jets agree with the generic derivative engine") {
  for (int d : {2, 3}) {
    const Arch arch = Arch::mlp(d, 3, 7);
    const NetParams p = random_params(arch, 100 + static_cast<std::uint64_t>(d));
    const Composition c = net_composition(arch);
    const std::span<const double> ps(p.theta.data(), static_cast<std::size_t>(p.theta.size()));
    Rng rng(7);
    MatrixXd xs(d, 5);
    for (Eigen::Index i = 0; i < xs.size(); ++i) xs(i) = 4 * rng.uniform() - 2;
    const double t = 0.37;
    const FieldJet jet = evaluate_batch(p, t, xs, JetOrder::Full);
    for (int q = 0; q < 5; ++q) {
      const VectorXd tx = with_time(t, xs.col(q));
      CHECK((jet.value.col(q) - c.evaluate(tx, ps)).norm() < 1e-13);
      const MatrixXd jfull = jacobian(c, ps, tx);
      const MatrixXd jac = Eigen::Map<const MatrixXd>(jet.jac.col(q).data(), d, d);
      CHECK((jac - jfull.rightCols(d)).norm() < 1e-13);
      CHECK(std::abs(jet.div(q) - jac.trace()) <= 1e-12);
      // grad div via the engine, restricted to the spatial coordinates
      VectorXd gd = VectorXd::Zero(d);
      for (int k = 0; k < d; ++k) {
        for (int j = 0; j < d; ++j) {
          const VectorXd dirs[2] = {VectorXd::Unit(d + 1, k + 1), VectorXd::Unit(d + 1, j + 1)};
          gd(k) += mixed_derivative(c, ps, tx, dirs)(j);
        }
      }
      CHECK((jet.grad_div.col(q) - gd).norm() < 1e-12);
    }
  }
}

TEST_CASE("eval_full derivatives agree with finite differences of the value") {
  const Arch arch = Arch::mlp(3, 2, 6);
  const NetParams p = random_params(arch, 9);
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd x(3);
    for (int i = 0; i < 3; ++i) x(i) = 4 * rng.uniform() - 2;
    const NetEval e = eval_full(p, 0.2, x);
    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
      const VectorXd ej = VectorXd::Unit(3, j);
      const VectorXd col = (eval_full(p, 0.2, x + h * ej).value - eval_full(p, 0.2, x - h * ej).value) / (2 * h);
      for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(e.jac(i, j) - col(i)) / std::max(std::abs(col(i)), 1e-3) <= 1e-5);
      }
      const double gd = (eval_full(p, 0.2, x + h * ej).div - eval_full(p, 0.2, x - h * ej).div) / (2 * h);
      CHECK(std::abs(e.grad_div(j) - gd) / std::max(std::abs(gd), 1e-3) <= 1e-5);
    }
  }
}

TEST_CASE("score transport along a linear flow reproduces the Gaussian pushforward score") {
  MatrixXd a(2, 2);
  a << -0.5, 1.0, -0.3, 0.2;
  const NetParams p = linear_net(a, VectorXd::Zero(2));
  MatrixXd sigma0(2, 2);
  sigma0 << 0.8, 0.2, 0.2, 0.5;
  VectorXd x(2);
  x << 0.6, -0.4;
  VectorXd xi = -sigma0.ldlt().solve(x);
  const double h = 1e-3;
  double t = 0.0;
  auto rhs = [&](double tt, const VectorXd& s) {
    VectorXd out(4);
    out.head(2) = eval_full(p, tt, s.head(2)).value;
    out.tail(2) = score_rhs(p, tt, s.head(2), s.tail(2));
    return out;
  };
  VectorXd s(4);
  s << x, xi;
  for (int n = 0; n < 1000; ++n) {
    const VectorXd k1 = rhs(t, s);
    const VectorXd k2 = rhs(t + h / 2, s + h / 2 * k1);
    const VectorXd k3 = rhs(t + h / 2, s + h / 2 * k2);
    const VectorXd k4 = rhs(t + h, s + h * k3);
    s += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    t += h;
  }
  const MatrixXd e = a.exp();
  const MatrixXd sigma = e * sigma0 * e.transpose();
  const VectorXd exact = -sigma.ldlt().solve(s.head(2));
  CHECK((s.tail(2) - exact).norm() <= 1e-6 * std::max(1.0, exact.norm()));
  CHECK((s.head(2) - e * x).norm() <= 1e-6);
}

TEST_CASE("pullback_batch matches finite differences of the contracted field") {
  for (int d : {2, 3}) {
    const Arch arch = Arch::mlp(d, 2, 5);
    const NetParams p = random_params(arch, 31 + static_cast<std::uint64_t>(d), 0.8);
    const int P = 4;
    Rng rng(17);
    auto rnd = [&](Eigen::Index r, Eigen::Index c) {
      MatrixXd m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = 2 * rng.uniform() - 1;
      return m;
    };
    const MatrixXd xs = 1.5 * rnd(d, P);
    const MatrixXd alpha = rnd(d, P), beta = rnd(d, P), scores = rnd(d, P);
    const VectorXd lambda = rnd(P, 1);
    const double t = 0.6;

    auto phi = [&](const NetParams& q, const MatrixXd& pts) {
      const FieldJet jet = evaluate_batch(q, t, pts, JetOrder::Full);
      double s = 0.0;
      for (int c = 0; c < P; ++c) {
        const MatrixXd jac = Eigen::Map<const MatrixXd>(jet.jac.col(c).data(), d, d);
        const VectorXd h = -jet.grad_div.col(c) - jac.transpose() * scores.col(c);
        s += alpha.col(c).dot(jet.value.col(c)) + beta.col(c).dot(h) - lambda(c) * jet.div(c);
      }
      return s;
    };

    FieldCovectors cov{&alpha, &beta, &scores, &lambda};
    MatrixXd x_bar = MatrixXd::Zero(d, P);
    VectorXd theta_bar = VectorXd::Zero(p.theta.size());
    MatrixXd jac_beta;
    pullback_batch(p, t, xs, cov, &x_bar, &theta_bar, &jac_beta);

    const FieldJet jet = evaluate_batch(p, t, xs, JetOrder::Jacobian);
    for (int c = 0; c < P; ++c) {
      const MatrixXd jac = Eigen::Map<const MatrixXd>(jet.jac.col(c).data(), d, d);
      CHECK((jac_beta.col(c) - jac * beta.col(c)).norm() < 1e-13);
    }

    const double h = 1e-5;
    for (int k = 0; k < 15; ++k) {
      const auto idx = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(p.theta.size()));
      NetParams pp = p, pm = p;
      pp.theta(idx) += h;
      pm.theta(idx) -= h;
      const double fd = (phi(pp, xs) - phi(pm, xs)) / (2 * h);
      CHECK(std::abs(theta_bar(idx) - fd) / std::max(std::abs(fd), 1e-6) <= 1e-6);
    }
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      MatrixXd xp = xs, xm = xs;
      xp(i) += h;
      xm(i) -= h;
      const double fd = (phi(p, xp) - phi(p, xm)) / (2 * h);
      CHECK(std::abs(x_bar(i) - fd) / std::max(std::abs(fd), 1e-6) <= 1e-6);
    }

    // value-only covector path
    MatrixXd xb2 = MatrixXd::Zero(d, P);
    VectorXd tb2 = VectorXd::Zero(p.theta.size());
    pullback_batch(p, t, xs, FieldCovectors{&alpha, nullptr, nullptr, nullptr}, &xb2, &tb2, nullptr);
    auto phi_v = [&](const NetParams& q) {
      return (alpha.array() * evaluate_batch(q, t, xs, JetOrder::Value).value.array()).sum();
    };
    for (int k = 0; k < 5; ++k) {
      const auto idx = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(p.theta.size()));
      NetParams pp = p, pm = p;
      pp.theta(idx) += h;
      pm.theta(idx) -= h;
      const double fd = (phi_v(pp) - phi_v(pm)) / (2 * h);
      CHECK(std::abs(tb2(idx) - fd) / std::max(std::abs(fd), 1e-6) <= 1e-6);
    }
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  const NetParams p = random_params(Arch::mlp(2, 2, 4), 77);
  const auto dir = std::filesystem::temp_directory_path() / "einn_ckpt_test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "net.ckpt";
  save_checkpoint(path, p);
  const NetParams q = load_checkpoint(path);
  CHECK(q.arch == p.arch);
  CHECK(q.theta == p.theta);
  CHECK(params_hash(q) == params_hash(p));
  CHECK_FALSE(std::filesystem::exists(dir / "net.ckpt.tmp"));
  std::filesystem::remove_all(dir);
}
