#include "einn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "einn/rng.hpp"

namespace einn {

namespace {

// index of a requested time on the RK4 grid
std::vector<int> node_indices(const std::vector<double>& times, double horizon, int steps) {
  if (steps < 1) throw std::invalid_argument("metrics: steps must be >= 1");
  const double h = horizon / steps;
  std::vector<int> idx;
  idx.reserve(times.size());
  double prev = -1.0;
  for (double t : times) {
    if (!(t >= 0.0 && t <= horizon * (1.0 + 1e-12))) {
      throw std::invalid_argument("metrics: time outside [0, T]");
    }
    if (t < prev) throw std::invalid_argument("metrics: times must be non-decreasing");
    prev = t;
    const int n = static_cast<int>(std::lround(t / h));
    if (std::abs(n * h - t) > 1e-9 * std::max(1.0, horizon)) {
      throw std::invalid_argument("metrics: time is not a node of the ODE grid");
    }
    idx.push_back(n);
  }
  return idx;
}

// transport a state to each requested node, calling visit(k, state)
template <typename Visit>
void march(const EinnProblem& prob, Eigen::VectorXd s, double horizon, int steps,
           const std::vector<int>& nodes, Visit visit) {
  const double h = horizon / steps;
  int n = 0;
  for (size_t k = 0; k < nodes.size(); ++k) {
    while (n < nodes[k]) {
      s = rk4_step(prob, n * h, s, h);
      ++n;
      if (!s.allFinite()) throw PropagationError("metrics: non-finite state", n * h, n);
    }
    visit(k, s);
  }
}

double coulomb_pair_mean(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool same) {
  const int d = static_cast<int>(a.rows());
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      if (same && i == j) continue;
      const Eigen::VectorXd diff = a.col(i) - b.col(j);
      if (diff.squaredNorm() == 0.0) continue;
      sum += coulomb_g(d, diff);
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

DomainBox DomainBox::cube(int dim, double half_width) {
  if (dim < 1 || !(half_width > 0.0)) throw std::invalid_argument("DomainBox: bad cube");
  return {Eigen::VectorXd::Constant(dim, -half_width), Eigen::VectorXd::Constant(dim, half_width)};
}

Eigen::MatrixXd grid_points(const DomainBox& box, int per_axis) {
  const int d = box.dim();
  if (d < 1 || box.hi.size() != d) throw std::invalid_argument("grid_points: bad box");
  if (!(box.hi.array() > box.lo.array()).all()) {
    throw std::invalid_argument("grid_points: box must have hi > lo");
  }
  if (per_axis < 2) throw std::invalid_argument("grid_points: per_axis must be >= 2");
  Eigen::Index total = 1;
  for (int k = 0; k < d; ++k) total *= per_axis;
  Eigen::MatrixXd g(d, total);
  for (Eigen::Index n = 0; n < total; ++n) {
    Eigen::Index rem = n;
    for (int k = 0; k < d; ++k) {
      const Eigen::Index i = rem % per_axis;
      rem /= per_axis;
      g(k, n) = box.lo(k) + (box.hi(k) - box.lo(k)) * static_cast<double>(i) / (per_axis - 1);
    }
  }
  return g;
}

std::vector<ParticleCloud> evolve_particles(const VelocityField& field, const ProblemSpec& spec,
                                            int batch_N, std::uint64_t seed, int steps,
                                            const std::vector<double>& times) {
  const std::vector<int> nodes = node_indices(times, spec.horizon, steps);
  if (batch_N < 1) throw std::invalid_argument("evolve_particles: batch_N must be >= 1");
  const SystemState s0 =
      initial_state(spec, sample_initial(spec.reference, 1, derive_seed(seed, 1)), batch_N,
                    derive_seed(seed, 2));
  const StateLayout l = s0.layout();
  const DynamicsOptions dyn = dynamics_for(spec);
  const EinnProblem prob(field, spec, l, dyn);
  std::vector<ParticleCloud> out(times.size());
  march(prob, s0.pack(), spec.horizon, steps, nodes, [&](size_t k, const Eigen::VectorXd& s) {
    out[k].t = times[k];
    out[k].ys = l.ys(s);
    if (dyn.track_scores) out[k].zetas = l.zetas(s);
  });
  return out;
}

ParticleCloud reference_cloud(const ProblemSpec& spec, double t, int count, std::uint64_t seed) {
  ParticleCloud c;
  c.t = t;
  c.ys = sample(spec.reference, t, count, seed);
  if (spec.reference.kind == ReferenceKind::Barenblatt) {
    c.zetas = Eigen::MatrixXd::Zero(spec.dim, count);
  } else {
    c.zetas = score_batch(spec.reference, t, c.ys);
  }
  return c;
}

Eigen::MatrixXd cloud_field(const ProblemSpec& spec, const ParticleCloud& cloud,
                            const Eigen::MatrixXd& grid) {
  if (spec.kernel.kind == KernelKind::BiotSavart && cloud.zetas.cols() != cloud.ys.cols()) {
    return direct_field(spec.kernel, grid, cloud.ys);
  }
  if (spec.kernel.kind == KernelKind::BiotSavart) {
    return conv_estimate(spec.kernel, grid, cloud.ys, &cloud.zetas);
  }
  return conv_estimate(spec.kernel, grid, cloud.ys, nullptr);
}

ErrorValue relative_l2_error(const ReferenceSolution& ref, double t, const Eigen::MatrixXd& grid,
                             const Eigen::MatrixXd& field_values) {
  if (field_values.rows() != grid.rows() || field_values.cols() != grid.cols()) {
    throw std::invalid_argument("relative_l2_error: shape mismatch");
  }
  ErrorValue r;
  double sum = 0.0;
  long used = 0;
  for (Eigen::Index n = 0; n < grid.cols(); ++n) {
    const Eigen::VectorXd truth = convolution_field(ref, t, grid.col(n));
    const double denom = truth.norm();
    if (denom < 1e-12) {
      ++r.skipped;
      continue;
    }
    sum += (field_values.col(n) - truth).norm() / denom;
    ++used;
  }
  if (used == 0) throw std::runtime_error("relative_l2_error: every grid node was skipped");
  r.value = sum / static_cast<double>(used);
  return r;
}

ErrorCurve error_curve(const ProblemSpec& spec, const std::vector<ParticleCloud>& clouds,
                       const DomainBox& box, int grid_per_axis) {
  if (box.dim() != spec.dim) throw std::invalid_argument("error_curve: box dimension mismatch");
  const Eigen::MatrixXd grid = grid_points(box, grid_per_axis);
  ErrorCurve c;
  c.box = box;
  c.grid_per_axis = grid_per_axis;
  for (const ParticleCloud& cloud : clouds) {
    const ErrorValue e =
        relative_l2_error(spec.reference, cloud.t, grid, cloud_field(spec, cloud, grid));
    c.times.push_back(cloud.t);
    c.values.push_back(e.value);
    c.skipped += e.skipped;
  }
  return c;
}

ErrorCurve error_curve(const VelocityField& field, const ProblemSpec& spec, const DomainBox& box,
                       int grid_per_axis, int batch_N, std::uint64_t seed, int steps,
                       const std::vector<double>& times) {
  return error_curve(spec, evolve_particles(field, spec, batch_N, seed, steps, times), box,
                     grid_per_axis);
}

double relative_l2_error(const VelocityField& field, const ProblemSpec& spec, double t,
                         const DomainBox& box, int grid_per_axis, int batch_N, std::uint64_t seed,
                         int steps) {
  return error_curve(field, spec, box, grid_per_axis, batch_N, seed, steps, {t}).values.at(0);
}

double time_averaged_error(const ErrorCurve& curve) {
  if (curve.values.empty() || curve.values.size() != curve.times.size()) {
    throw std::invalid_argument("time_averaged_error: empty or inconsistent curve");
  }
  const size_t n = curve.values.size();
  const double span = curve.times.back() - curve.times.front();
  if (n == 1 || span <= 0.0) {
    return std::accumulate(curve.values.begin(), curve.values.end(), 0.0) / static_cast<double>(n);
  }
  double integral = 0.0;
  for (size_t i = 1; i < n; ++i) {
    integral += 0.5 * (curve.values[i] + curve.values[i - 1]) * (curve.times[i] - curve.times[i - 1]);
  }
  return integral / span;
}

KlCurve kl_estimate(const VelocityField& field, const ProblemSpec& spec, int traj_count,
                    std::uint64_t seed, int steps, const std::vector<double>& times) {
  if (traj_count < 1) throw std::invalid_argument("kl_estimate: traj_count must be >= 1");
  const std::vector<int> nodes = node_indices(times, spec.horizon, steps);
  const SystemState s0 = initial_state(
      spec, sample_initial(spec.reference, traj_count, derive_seed(seed, 1)), 1, derive_seed(seed, 2));
  const StateLayout l = s0.layout();
  const EinnProblem prob(field, spec, l, dynamics_for(spec));
  KlCurve out;
  out.traj_count = traj_count;
  out.times = times;
  march(prob, s0.pack(), spec.horizon, steps, nodes, [&](size_t k, const Eigen::VectorXd& s) {
    const auto x = l.x(s);
    const Eigen::VectorXd logdens = s.tail(l.B);
    double sum = 0.0;
    int escaped = 0;
    for (Eigen::Index j = 0; j < l.B; ++j) {
      const double lr = log_density(spec.reference, times[k], x.col(j));
      if (std::isfinite(lr)) {
        sum += logdens(j) - lr;
      } else {
        sum += kKlEscapePenalty;
        ++escaped;
      }
    }
    out.values.push_back(sum / static_cast<double>(l.B));
    out.escaped.push_back(escaped);
  });
  return out;
}

double modulated_energy(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() < 2 || b.cols() < 2) {
    throw std::invalid_argument("modulated_energy: need at least two samples on each side");
  }
  if (a.rows() != b.rows() || a.rows() < 1) {
    throw std::invalid_argument("modulated_energy: dimension mismatch");
  }
  if (!a.allFinite() || !b.allFinite()) {
    throw std::invalid_argument("modulated_energy: samples must be finite");
  }
  return 0.5 * (coulomb_pair_mean(a, a, true) - 2.0 * coulomb_pair_mean(a, b, false) +
                coulomb_pair_mean(b, b, true));
}

double modulated_energy(const Eigen::MatrixXd& a, const ReferenceSolution& ref, double t,
                        int quad_count, std::uint64_t seed) {
  if (quad_count < 2) throw std::invalid_argument("modulated_energy: quad_count must be >= 2");
  return modulated_energy(a, sample(ref, t, quad_count, seed));
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length series of length >= 2");
  }
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> even_times(double horizon, int count) {
  if (count < 1 || !(horizon > 0.0)) throw std::invalid_argument("even_times: bad arguments");
  std::vector<double> t(count + 1);
  for (int i = 0; i <= count; ++i) t[i] = horizon * i / count;
  return t;
}

}  // namespace einn
