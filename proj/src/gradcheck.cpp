#include "einn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "einn/dynamics.hpp"
#include "einn/rng.hpp"
#include "einn/velocity_net.hpp"

namespace einn {

namespace {

ProblemSpec gradcheck_problem(KernelKind kind, double horizon) {
  switch (kind) {
    case KernelKind::BiotSavart:
      return ProblemSpec::lamb_oseen(0.1, 0.1, horizon);
    case KernelKind::Coulomb: {
      ProblemSpec s{3,   0.1, horizon, KernelSpec::coulomb(3),
                    0.5, ReferenceSolution::ornstein_uhlenbeck(3, 0.1, 0.5, 0.5)};
      s.validate();
      return s;
    }
    case KernelKind::Zero:
      break;
  }
  return ProblemSpec::ornstein_uhlenbeck(2, 0.1, 1.0, 0.7, horizon);
}

std::uint64_t trajectory_signature(const KernelSpec& kernel, const TrajectoryBatch& tb) {
  std::uint64_t h = 0;
  for (int n = 0; n <= tb.traj.steps; ++n) {
    const Eigen::VectorXd s = tb.traj.states.col(n);
    const std::uint64_t sig = branch_signature(kernel, tb.layout.x(s), tb.layout.ys(s));
    h ^= sig + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

}  // namespace

GradcheckResult run_gradcheck_case(const GradcheckCase& c) {
  const ProblemSpec spec = gradcheck_problem(c.kernel, c.horizon);
  GradcheckResult res;
  res.kernel = kernel_name(c.kernel);
  const Arch arch = Arch::mlp(spec.dim, c.hidden_layers, c.width);
  for (int attempt = 0; attempt <= c.max_redraws; ++attempt) {
    const std::uint64_t seed = derive_seed(c.seed, static_cast<std::uint64_t>(attempt));
    NetParams params = init_params(arch, seed);
    Rng rng(seed, 1);
    for (Eigen::Index i = 0; i < params.theta.size(); ++i) {
      params.theta(i) += 0.5 * (2.0 * rng.uniform() - 1.0);
    }
    const Eigen::MatrixXd x0 = sample_initial(spec.reference, c.probes, derive_seed(seed, 2));
    const SystemState s0 = initial_state(spec, x0, c.particles, derive_seed(seed, 3));

    auto forward = [&](const NetParams& p) {
      const NetField f(p);
      return integrate_forward(f, spec, s0, c.steps);
    };
    const NetField field(params);
    const TrajectoryBatch base = integrate_forward(field, spec, s0, c.steps);
    const EinnProblem problem(field, spec, base.layout);
    const Eigen::VectorXd grad =
        gradient(problem, base.traj, AdjointOptions{c.scheme, 0, 0});
    const std::uint64_t sig = trajectory_signature(spec.kernel, base);

    bool crossed = false;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < params.theta.size() && !crossed; ++i) {
      NetParams pp = params, pm = params;
      pp.theta(i) += c.fd_step;
      pm.theta(i) -= c.fd_step;
      const TrajectoryBatch tp = forward(pp), tm = forward(pm);
      if (trajectory_signature(spec.kernel, tp) != sig ||
          trajectory_signature(spec.kernel, tm) != sig) {
        crossed = true;
        break;
      }
      const double fd = (tp.loss() - tm.loss()) / (2.0 * c.fd_step);
      worst = std::max(worst, std::abs(grad(i) - fd) / std::max(std::abs(fd), c.floor));
    }
    if (crossed) {
      ++res.redraws;
      continue;
    }
    res.seed_used = seed;
    res.coords = static_cast<int>(params.theta.size());
    res.max_rel_err = worst;
    res.loss = base.loss();
    res.passed = worst <= c.tolerance;
    return res;
  }
  throw std::runtime_error("gradcheck: every draw crossed a kernel branch");
}

ScalarBenchmark scalar_benchmark(int steps) {
  const ScalarLinearProblem p(0.0);
  const Trajectory tr = rk4_forward(p, Eigen::VectorXd::Ones(1), 1.0, steps);
  ScalarBenchmark b;
  b.discrete = gradient(p, tr, {AdjointScheme::Discrete, 0, 0})(0);
  b.continuous = gradient(p, tr, {AdjointScheme::Continuous, 0, 0})(0);
  return b;
}

GradcheckSuite run_gradcheck_suite(int configs, std::uint64_t seed) {
  GradcheckSuite suite;
  suite.scalar = scalar_benchmark();
  bool ok = std::abs(suite.scalar.discrete - 1.0) <= 1e-6 &&
            std::abs(suite.scalar.continuous - 1.0) <= 1e-6;
  const KernelKind kinds[3] = {KernelKind::Coulomb, KernelKind::BiotSavart, KernelKind::Zero};
  for (int k = 0; k < configs; ++k) {
    GradcheckCase c;
    c.kernel = kinds[k % 3];
    c.seed = derive_seed(seed, static_cast<std::uint64_t>(k));
    c.probes = 1 + k % 3;
    c.particles = c.kernel == KernelKind::BiotSavart ? 8 : 6 + k % 5;
    c.hidden_layers = 1 + (k / 3) % 2;
    suite.cases.push_back(run_gradcheck_case(c));
    ok = ok && suite.cases.back().passed;
  }
  suite.passed = ok;
  return suite;
}

}  // namespace einn
