#include "einn/dynamics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "einn/io.hpp"
#include "einn/rng.hpp"

namespace einn {

ProblemSpec ProblemSpec::lamb_oseen(double nu, double t0, double horizon) {
  ProblemSpec s{2, nu, horizon, KernelSpec::biot_savart(), 0.0,
                ReferenceSolution::lamb_oseen(nu, t0)};
  s.validate();
  return s;
}

ProblemSpec ProblemSpec::barenblatt(double t0, double horizon) {
  ProblemSpec s{3, 0.0, horizon, KernelSpec::coulomb(3), 0.0, ReferenceSolution::barenblatt(t0)};
  s.validate();
  return s;
}

ProblemSpec ProblemSpec::ornstein_uhlenbeck(int dim, double nu, double stiffness, double sigma0,
                                            double horizon) {
  ProblemSpec s{dim, nu, horizon, KernelSpec::zero(dim), stiffness,
                ReferenceSolution::ornstein_uhlenbeck(dim, nu, stiffness, sigma0)};
  s.validate();
  return s;
}

void ProblemSpec::validate() const {
  if (dim < 1) throw std::invalid_argument("ProblemSpec: dim must be >= 1");
  if (!(nu >= 0.0)) throw std::invalid_argument("ProblemSpec: nu must be >= 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("ProblemSpec: horizon must be > 0");
  if (!(stiffness >= 0.0)) throw std::invalid_argument("ProblemSpec: stiffness must be >= 0");
  kernel.validate();
  if (kernel.dim != dim) throw std::invalid_argument("ProblemSpec: kernel dimension mismatch");
  reference.validate();
  if (reference.dim != dim) throw std::invalid_argument("ProblemSpec: reference dimension mismatch");
}

StateLayout SystemState::layout() const { return {static_cast<int>(x.rows()), x.cols(), ys.cols()}; }

Eigen::VectorXd SystemState::pack() const {
  const StateLayout l = layout();
  if (xi.rows() != l.d || xi.cols() != l.B || ys.rows() != l.d || zetas.rows() != l.d ||
      zetas.cols() != l.N || logdens.size() != l.B) {
    throw std::invalid_argument("SystemState: inconsistent block shapes");
  }
  Eigen::VectorXd s(l.size());
  l.x(s) = x;
  l.xi(s) = xi;
  l.ys(s) = ys;
  l.zetas(s) = zetas;
  s.tail(l.B) = logdens;
  return s;
}

SystemState SystemState::unpack(const StateLayout& l, const Eigen::VectorXd& s) {
  if (s.size() != l.size()) throw std::invalid_argument("SystemState: flat size mismatch");
  return {l.x(s), l.xi(s), l.ys(s), l.zetas(s), s.tail(l.B)};
}

Eigen::MatrixXd sample_initial(const ReferenceSolution& ref, int count, std::uint64_t seed,
                               double margin) {
  Eigen::MatrixXd out = sample(ref, 0.0, count, seed);
  if (ref.kind != ReferenceKind::Barenblatt) return out;
  std::uint64_t redraw = 1;
  for (int i = 0; i < count; ++i) {
    while (!in_support(ref, 0.0, out.col(i), margin)) {
      out.col(i) = sample(ref, 0.0, 1, derive_seed(seed, redraw++)).col(0);
    }
  }
  return out;
}

SystemState initial_state(const ProblemSpec& spec, const Eigen::MatrixXd& x0, int N,
                          std::uint64_t seed) {
  spec.validate();
  if (N < 1) throw std::invalid_argument("initial_state: N must be >= 1");
  if (x0.rows() != spec.dim || x0.cols() < 1) {
    throw std::invalid_argument("initial_state: x0 must be d x B with B >= 1");
  }
  const ReferenceSolution& ref = spec.reference;
  SystemState s;
  s.x = x0;
  s.xi.resize(spec.dim, x0.cols());
  s.logdens.resize(x0.cols());
  for (Eigen::Index b = 0; b < x0.cols(); ++b) {
    if (!in_support(ref, 0.0, x0.col(b))) {
      throw std::invalid_argument("initial_state: x0 outside the support of the initial law");
    }
    s.xi.col(b) = score(ref, 0.0, x0.col(b));
    s.logdens(b) = log_density(ref, 0.0, x0.col(b));
  }
  s.ys = sample_initial(ref, N, seed);
  s.zetas = score_batch(ref, 0.0, s.ys);
  return s;
}

EinnProblem::EinnProblem(const VelocityField& field, const ProblemSpec& spec, StateLayout layout,
                         DynamicsOptions options)
    : field_(field), spec_(spec), layout_(layout), options_(options) {
  spec_.validate();
  if (field_.dim() != spec_.dim || layout_.d != spec_.dim) {
    throw std::invalid_argument("EinnProblem: field and problem dimensions differ");
  }
  if (layout_.B < 1 || layout_.N < 1) throw std::invalid_argument("EinnProblem: need B, N >= 1");
  if (!options_.track_scores &&
      (spec_.nu != 0.0 || spec_.kernel.kind == KernelKind::BiotSavart)) {
    throw std::invalid_argument(
        "EinnProblem: scores can only be dropped when nu = 0 and the kernel is not Biot-Savart");
  }
}

namespace {

Eigen::MatrixXd hstack(const Eigen::Ref<const Eigen::MatrixXd>& a,
                       const Eigen::Ref<const Eigen::MatrixXd>& b) {
  Eigen::MatrixXd m(a.rows(), a.cols() + b.cols());
  m << a, b;
  return m;
}

}  // namespace

void EinnProblem::rhs(double t, const Eigen::VectorXd& s, Eigen::VectorXd& ds) const {
  const StateLayout& l = layout_;
  const int d = l.d;
  const Eigen::Index P = l.B + l.N;
  const Eigen::MatrixXd pts = hstack(l.x(s), l.ys(s));
  const bool track = options_.track_scores;
  const FieldJet jet = field_.evaluate(t, pts, track ? JetOrder::Full : JetOrder::Jacobian);
  ds.setZero(l.size());
  l.x(ds) = jet.value.leftCols(l.B);
  l.ys(ds) = jet.value.rightCols(l.N);
  if (track) {
    const Eigen::MatrixXd scores = hstack(l.xi(s), l.zetas(s));
    Eigen::MatrixXd h = -jet.grad_div;
    for (Eigen::Index p = 0; p < P; ++p) {
      const Eigen::Map<const Eigen::MatrixXd> jac(jet.jac.col(p).data(), d, d);
      h.col(p).noalias() -= jac.transpose() * scores.col(p);
    }
    l.xi(ds) = h.leftCols(l.B);
    l.zetas(ds) = h.rightCols(l.N);
  }
  ds.tail(l.B) = -jet.div.head(l.B);
}

Eigen::MatrixXd EinnProblem::residuals(double t, const Eigen::VectorXd& s) const {
  const StateLayout& l = layout_;
  const Eigen::MatrixXd x = l.x(s);
  const Eigen::MatrixXd zetas = l.zetas(s);
  Eigen::MatrixXd r = field_.evaluate(t, x, JetOrder::Value).value;
  if (spec_.stiffness != 0.0) r += spec_.stiffness * x;
  if (spec_.kernel.kind != KernelKind::Zero) {
    r -= conv_estimate(spec_.kernel, x, Eigen::MatrixXd(l.ys(s)), &zetas);
  }
  if (spec_.nu != 0.0) r += spec_.nu * l.xi(s);
  return r;
}

Eigen::VectorXd EinnProblem::probe_costs(double t, const Eigen::VectorXd& s) const {
  return residuals(t, s).colwise().squaredNorm().transpose();
}

double EinnProblem::cost(double t, const Eigen::VectorXd& s) const {
  const Eigen::VectorXd c = probe_costs(t, s);
  double sum = 0.0;
  for (Eigen::Index b = 0; b < c.size(); ++b) sum += c(b);
  return sum / static_cast<double>(c.size());
}

void EinnProblem::rhs_vjp(double t, const Eigen::VectorXd& s, const Eigen::VectorXd& lambda,
                          Eigen::VectorXd& s_bar, Eigen::VectorXd& theta_bar) const {
  const StateLayout& l = layout_;
  const Eigen::Index P = l.B + l.N;
  const Eigen::MatrixXd pts = hstack(l.x(s), l.ys(s));
  const Eigen::MatrixXd alpha = hstack(l.x(lambda), l.ys(lambda));
  Eigen::VectorXd lam_div = Eigen::VectorXd::Zero(P);
  lam_div.head(l.B) = lambda.tail(l.B);
  Eigen::MatrixXd pts_bar = Eigen::MatrixXd::Zero(l.d, P);
  if (options_.track_scores) {
    const Eigen::MatrixXd beta = hstack(l.xi(lambda), l.zetas(lambda));
    const Eigen::MatrixXd scores = hstack(l.xi(s), l.zetas(s));
    Eigen::MatrixXd jac_beta;
    field_.pullback(t, pts, FieldCovectors{&alpha, &beta, &scores, &lam_div}, &pts_bar, &theta_bar,
                    &jac_beta);
    l.xi(s_bar) -= jac_beta.leftCols(l.B);
    l.zetas(s_bar) -= jac_beta.rightCols(l.N);
  } else {
    field_.pullback(t, pts, FieldCovectors{&alpha, nullptr, nullptr, &lam_div}, &pts_bar,
                    &theta_bar, nullptr);
  }
  l.x(s_bar) += pts_bar.leftCols(l.B);
  l.ys(s_bar) += pts_bar.rightCols(l.N);
}

void EinnProblem::cost_vjp(double t, const Eigen::VectorXd& s, double weight,
                           Eigen::VectorXd& s_bar, Eigen::VectorXd& theta_bar) const {
  const StateLayout& l = layout_;
  const Eigen::MatrixXd gamma = (2.0 * weight / static_cast<double>(l.B)) * residuals(t, s);
  const Eigen::MatrixXd x = l.x(s);
  Eigen::MatrixXd x_bar = Eigen::MatrixXd::Zero(l.d, l.B);
  field_.pullback(t, x, FieldCovectors{&gamma, nullptr, nullptr, nullptr}, &x_bar, &theta_bar,
                  nullptr);
  if (spec_.stiffness != 0.0) x_bar += spec_.stiffness * gamma;
  if (spec_.nu != 0.0) l.xi(s_bar) += spec_.nu * gamma;
  if (spec_.kernel.kind != KernelKind::Zero) {
    const Eigen::MatrixXd ys = l.ys(s);
    const Eigen::MatrixXd zetas = l.zetas(s);
    Eigen::MatrixXd ys_bar = Eigen::MatrixXd::Zero(l.d, l.N);
    Eigen::MatrixXd zetas_bar = Eigen::MatrixXd::Zero(l.d, l.N);
    const Eigen::MatrixXd neg = -gamma;
    conv_pullback(spec_.kernel, x, ys, &zetas, neg, &x_bar, &ys_bar,
                  spec_.kernel.kind == KernelKind::BiotSavart ? &zetas_bar : nullptr);
    l.ys(s_bar) += ys_bar;
    l.zetas(s_bar) += zetas_bar;
  }
  l.x(s_bar) += x_bar;
}

std::uint64_t EinnProblem::fingerprint() const {
  std::uint64_t h = field_.fingerprint();
  for (std::uint64_t v : {static_cast<std::uint64_t>(layout_.d), static_cast<std::uint64_t>(layout_.B),
                          static_cast<std::uint64_t>(layout_.N),
                          static_cast<std::uint64_t>(options_.track_scores)}) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

SystemState transition(const VelocityField& field, const ProblemSpec& spec, double t,
                       const SystemState& s, DynamicsOptions options) {
  const EinnProblem p(field, spec, s.layout(), options);
  const Eigen::VectorXd flat = s.pack();
  if (!flat.allFinite()) throw PropagationError("non-finite state", t, 0);
  Eigen::VectorXd ds;
  p.rhs(t, flat, ds);
  return SystemState::unpack(p.layout(), ds);
}

Eigen::VectorXd running_cost(const VelocityField& field, const ProblemSpec& spec, double t,
                             const SystemState& s) {
  const EinnProblem p(field, spec, s.layout());
  const Eigen::VectorXd flat = s.pack();
  if (!flat.allFinite()) throw PropagationError("non-finite state", t, 0);
  return p.probe_costs(t, flat);
}

Eigen::VectorXd TrajectoryBatch::probe_losses() const {
  return probe_costs * trapezoid_weights(traj.horizon, traj.steps);
}

DynamicsOptions dynamics_for(const ProblemSpec& spec) {
  DynamicsOptions o;
  o.track_scores = !(spec.nu == 0.0 && spec.kernel.kind != KernelKind::BiotSavart);
  return o;
}

TrajectoryBatch integrate_forward(const VelocityField& field, const ProblemSpec& spec,
                                  const SystemState& s0, int steps, DynamicsOptions options) {
  const EinnProblem p(field, spec, s0.layout(), options);
  TrajectoryBatch out;
  out.layout = p.layout();
  out.traj = rk4_forward(p, s0.pack(), spec.horizon, steps);
  out.probe_costs.resize(out.layout.B, steps + 1);
  for (int n = 0; n <= steps; ++n) {
    out.probe_costs.col(n) = p.probe_costs(out.traj.time(n), out.traj.states.col(n));
  }
  return out;
}

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryBatch& batch) {
  const StateLayout& l = batch.layout;
  std::ostringstream os;
  os << "traj_id,t";
  for (int k = 0; k < l.d; ++k) os << ",x" << k;
  for (int k = 0; k < l.d; ++k) os << ",xi" << k;
  os << ",logdens,running_cost\n";
  for (Eigen::Index b = 0; b < l.B; ++b) {
    for (int n = 0; n <= batch.traj.steps; ++n) {
      const Eigen::VectorXd s = batch.traj.states.col(n);
      os << b << ',' << format_double(batch.traj.time(n));
      for (int k = 0; k < l.d; ++k) os << ',' << format_double(l.x(s)(k, b));
      for (int k = 0; k < l.d; ++k) os << ',' << format_double(l.xi(s)(k, b));
      os << ',' << format_double(s(l.logdens_offset() + b)) << ','
         << format_double(batch.probe_costs(b, n)) << '\n';
    }
  }
  write_file_atomic(path, os.str());
}

}  // namespace einn
