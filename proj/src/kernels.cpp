#include "einn/kernels.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace einn {

namespace {

std::atomic<std::uint64_t> g_clamp_events{0};

constexpr double kInv2Pi = 0.5 / std::numbers::pi;

struct CoulombCoeffs {
  int d;
  double inv_area;
  double eps;
  double eps2;
  double clamp_scale;  // 1 / (S eps^(d-1))
};

CoulombCoeffs coulomb_coeffs(int d, double eps) {
  const double s = unit_sphere_area(d);
  return {d, 1.0 / s, eps, eps * eps, 1.0 / (s * std::pow(eps, d - 1))};
}

double pow_half(double r2, int d) {
  // r^d from r^2
  switch (d) {
    case 2:
      return r2;
    case 3:
      return r2 * std::sqrt(r2);
    case 4:
      return r2 * r2;
    default:
      return std::pow(r2, 0.5 * d);
  }
}

// K(z) into out (length d); returns true when the clamp fired.
inline bool coulomb_eval(const CoulombCoeffs& c, const double* z, double r2, double* out) {
  if (r2 < c.eps2) {
    const double r = std::sqrt(r2);
    for (int k = 0; k < c.d; ++k) out[k] = z[k] / r * c.clamp_scale;
    return true;
  }
  const double f = c.inv_area / pow_half(r2, c.d);
  for (int k = 0; k < c.d; ++k) out[k] = z[k] * f;
  return false;
}

// DK(z) gamma into out.
inline void coulomb_jvp(const CoulombCoeffs& c, const double* z, double r2, const double* g,
                        double* out) {
  double zg = 0.0;
  for (int k = 0; k < c.d; ++k) zg += z[k] * g[k];
  if (r2 < c.eps2) {
    const double r = std::sqrt(r2);
    const double a = c.clamp_scale / r;
    const double b = zg / r2;
    for (int k = 0; k < c.d; ++k) out[k] = a * (g[k] - b * z[k]);
    return;
  }
  const double rd = pow_half(r2, c.d);
  const double a = c.inv_area / rd;
  const double b = c.d * zg / r2;
  for (int k = 0; k < c.d; ++k) out[k] = a * (g[k] - b * z[k]);
}

void check_sets(const KernelSpec& spec, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                const Eigen::MatrixXd* zetas, bool need_scores = true) {
  spec.validate();
  if (xs.rows() != spec.dim || ys.rows() != spec.dim) {
    throw std::invalid_argument("conv_estimate: point dimension does not match kernel dimension");
  }
  if (ys.cols() == 0) throw std::invalid_argument("conv_estimate: empty particle set");
  if (spec.kind == KernelKind::BiotSavart && need_scores) {
    if (zetas == nullptr) throw std::invalid_argument("conv_estimate: Biot-Savart needs scores");
    if (zetas->rows() != 2 || zetas->cols() != ys.cols()) {
      throw std::invalid_argument("conv_estimate: scores shape does not match particles");
    }
  }
}

}  // namespace

void KernelSpec::validate() const {
  if (!(clamp_eps > 0.0)) throw std::invalid_argument("KernelSpec: clamp_eps must be > 0");
  switch (kind) {
    case KernelKind::Zero:
      if (dim < 1) throw std::invalid_argument("KernelSpec: dimension must be >= 1");
      break;
    case KernelKind::Coulomb:
      if (dim < 2) throw std::invalid_argument("KernelSpec: Coulomb needs d >= 2");
      break;
    case KernelKind::BiotSavart:
      if (dim != 2) throw std::invalid_argument("KernelSpec: Biot-Savart is only valid for d = 2");
      break;
  }
}

const char* kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::Zero:
      return "zero";
    case KernelKind::Coulomb:
      return "coulomb";
    case KernelKind::BiotSavart:
      return "biot_savart";
  }
  return "?";
}

double unit_sphere_area(int d) {
  if (d < 1) throw std::invalid_argument("unit_sphere_area: d must be >= 1");
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

double coulomb_g(int d, const Eigen::VectorXd& x) {
  if (d < 2 || x.size() != d) throw std::invalid_argument("coulomb_g: bad dimension");
  const double r = x.norm();
  if (r == 0.0) throw std::domain_error("coulomb_g: singular at the origin");
  if (d == 2) return -kInv2Pi * std::log(r);
  return 1.0 / ((d - 2) * unit_sphere_area(d) * std::pow(r, d - 2));
}

Eigen::VectorXd coulomb_K(int d, const Eigen::VectorXd& x, double clamp_eps) {
  if (d < 2 || x.size() != d) throw std::invalid_argument("coulomb_K: bad dimension");
  if (!(clamp_eps > 0.0)) throw std::invalid_argument("coulomb_K: clamp_eps must be > 0");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  const double r2 = x.squaredNorm();
  if (r2 == 0.0) {
    g_clamp_events.fetch_add(1, std::memory_order_relaxed);
    return out;
  }
  if (coulomb_eval(coulomb_coeffs(d, clamp_eps), x.data(), r2, out.data())) {
    g_clamp_events.fetch_add(1, std::memory_order_relaxed);
  }
  return out;
}

Eigen::Vector2d biot_savart_K(const Eigen::Vector2d& x) {
  const double r2 = x.squaredNorm();
  if (r2 == 0.0) throw std::domain_error("biot_savart_K: singular at the origin");
  return Eigen::Vector2d(-x(1), x(0)) * (kInv2Pi / r2);
}

Eigen::Matrix2d biot_savart_U(const Eigen::Vector2d& x) {
  Eigen::Matrix2d u = Eigen::Matrix2d::Zero();
  if (x(0) == 0.0 && x(1) == 0.0) return u;
  // x / 0 is +-inf off the origin, and atan(+-inf) = +-pi/2 gives the axis limits
  u(0, 0) = -std::atan(x(0) / x(1)) * kInv2Pi;
  u(1, 1) = std::atan(x(1) / x(0)) * kInv2Pi;
  return u;
}

std::uint64_t clamp_events() { return g_clamp_events.load(std::memory_order_relaxed); }
void reset_clamp_events() { g_clamp_events.store(0, std::memory_order_relaxed); }

Eigen::MatrixXd conv_estimate(const KernelSpec& spec, const Eigen::MatrixXd& xs,
                              const Eigen::MatrixXd& ys, const Eigen::MatrixXd* zetas) {
  check_sets(spec, xs, ys, zetas);
  const int d = spec.dim;
  const Eigen::Index B = xs.cols(), N = ys.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, B);
  if (spec.kind == KernelKind::Zero) return out;
  std::uint64_t clamps = 0;
  if (spec.kind == KernelKind::Coulomb) {
    const CoulombCoeffs c = coulomb_coeffs(d, spec.clamp_eps);
    double z[16], k[16];
    if (d > 16) throw std::invalid_argument("conv_estimate: dimension too large");
    for (Eigen::Index b = 0; b < B; ++b) {
      const double* x = xs.col(b).data();
      double* acc = out.col(b).data();
      Eigen::Index used = 0;
      for (Eigen::Index i = 0; i < N; ++i) {
        const double* y = ys.col(i).data();
        double r2 = 0.0;
        for (int q = 0; q < d; ++q) {
          z[q] = x[q] - y[q];
          r2 += z[q] * z[q];
        }
        if (r2 == 0.0) continue;
        ++used;
        if (coulomb_eval(c, z, r2, k)) ++clamps;
        for (int q = 0; q < d; ++q) acc[q] += k[q];
      }
      if (used == 0) throw std::invalid_argument("conv_estimate: every particle coincides with x");
      for (int q = 0; q < d; ++q) acc[q] /= static_cast<double>(used);
    }
    g_clamp_events.fetch_add(clamps, std::memory_order_relaxed);
    return out;
  }
  // Biot-Savart, divergence form
  const Eigen::MatrixXd& zs = *zetas;
  for (Eigen::Index b = 0; b < B; ++b) {
    const double x1 = xs(0, b), x2 = xs(1, b);
    double a1 = 0.0, a2 = 0.0;
    Eigen::Index used = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
      const double z1 = x1 - ys(0, i), z2 = x2 - ys(1, i);
      if (z1 == 0.0 && z2 == 0.0) continue;
      ++used;
      a1 -= std::atan(z1 / z2) * zs(0, i);
      a2 += std::atan(z2 / z1) * zs(1, i);
    }
    if (used == 0) throw std::invalid_argument("conv_estimate: every particle coincides with x");
    out(0, b) = a1 * kInv2Pi / static_cast<double>(used);
    out(1, b) = a2 * kInv2Pi / static_cast<double>(used);
  }
  return out;
}

Eigen::VectorXd conv_estimate(const KernelSpec& spec, const Eigen::VectorXd& x,
                              const Eigen::MatrixXd& ys, const Eigen::MatrixXd* zetas) {
  const Eigen::MatrixXd xs = x;
  return conv_estimate(spec, xs, ys, zetas).col(0);
}

void conv_pullback(const KernelSpec& spec, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                   const Eigen::MatrixXd* zetas, const Eigen::MatrixXd& gamma,
                   Eigen::MatrixXd* x_bar, Eigen::MatrixXd* y_bar, Eigen::MatrixXd* zeta_bar) {
  check_sets(spec, xs, ys, zetas);
  if (gamma.rows() != spec.dim || gamma.cols() != xs.cols()) {
    throw std::invalid_argument("conv_pullback: covector shape mismatch");
  }
  if (spec.kind == KernelKind::Zero) return;
  const int d = spec.dim;
  const Eigen::Index B = xs.cols(), N = ys.cols();
  auto count_used = [&](Eigen::Index b) {
    Eigen::Index used = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
      if ((xs.col(b) - ys.col(i)).squaredNorm() != 0.0) ++used;
    }
    if (used == 0) throw std::invalid_argument("conv_pullback: every particle coincides with x");
    return used;
  };
  if (spec.kind == KernelKind::Coulomb) {
    const CoulombCoeffs c = coulomb_coeffs(d, spec.clamp_eps);
    double z[16], v[16], g[16];
    if (d > 16) throw std::invalid_argument("conv_pullback: dimension too large");
    for (Eigen::Index b = 0; b < B; ++b) {
      const double inv = 1.0 / static_cast<double>(count_used(b));
      for (int q = 0; q < d; ++q) g[q] = gamma(q, b) * inv;
      for (Eigen::Index i = 0; i < N; ++i) {
        double r2 = 0.0;
        for (int q = 0; q < d; ++q) {
          z[q] = xs(q, b) - ys(q, i);
          r2 += z[q] * z[q];
        }
        if (r2 == 0.0) continue;
        coulomb_jvp(c, z, r2, g, v);
        if (x_bar) {
          for (int q = 0; q < d; ++q) (*x_bar)(q, b) += v[q];
        }
        if (y_bar) {
          for (int q = 0; q < d; ++q) (*y_bar)(q, i) -= v[q];
        }
      }
    }
    return;
  }
  const Eigen::MatrixXd& zs = *zetas;
  for (Eigen::Index b = 0; b < B; ++b) {
    const double inv = 1.0 / static_cast<double>(count_used(b));
    const double g1 = gamma(0, b) * inv, g2 = gamma(1, b) * inv;
    double xb1 = 0.0, xb2 = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      const double z1 = xs(0, b) - ys(0, i), z2 = xs(1, b) - ys(1, i);
      const double r2 = z1 * z1 + z2 * z2;
      if (r2 == 0.0) continue;
      // grad of both diagonal entries of U is K(z)
      const double w = (g1 * zs(0, i) + g2 * zs(1, i)) * kInv2Pi / r2;
      const double k1 = -z2 * w, k2 = z1 * w;
      xb1 += k1;
      xb2 += k2;
      if (y_bar) {
        (*y_bar)(0, i) -= k1;
        (*y_bar)(1, i) -= k2;
      }
      if (zeta_bar) {
        (*zeta_bar)(0, i) -= std::atan(z1 / z2) * kInv2Pi * g1;
        (*zeta_bar)(1, i) += std::atan(z2 / z1) * kInv2Pi * g2;
      }
    }
    if (x_bar) {
      (*x_bar)(0, b) += xb1;
      (*x_bar)(1, b) += xb2;
    }
  }
}

Eigen::MatrixXd direct_field(const KernelSpec& spec, const Eigen::MatrixXd& xs,
                             const Eigen::MatrixXd& ys) {
  check_sets(spec, xs, ys, nullptr, false);
  const int d = spec.dim;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, xs.cols());
  if (spec.kind == KernelKind::Zero) return out;
  const CoulombCoeffs c = coulomb_coeffs(d, spec.clamp_eps);
  std::uint64_t clamps = 0;
  double z[16], k[16];
  if (d > 16) throw std::invalid_argument("direct_field: dimension too large");
  for (Eigen::Index b = 0; b < xs.cols(); ++b) {
    Eigen::Index used = 0;
    for (Eigen::Index i = 0; i < ys.cols(); ++i) {
      double r2 = 0.0;
      for (int q = 0; q < d; ++q) {
        z[q] = xs(q, b) - ys(q, i);
        r2 += z[q] * z[q];
      }
      if (r2 == 0.0) continue;
      ++used;
      if (spec.kind == KernelKind::BiotSavart) {
        // same rescaling policy as the Coulomb branch
        double s = kInv2Pi / r2;
        if (r2 < c.eps2) {
          ++clamps;
          s = kInv2Pi / (std::sqrt(r2) * spec.clamp_eps);
        }
        out(0, b) -= z[1] * s;
        out(1, b) += z[0] * s;
      } else {
        if (coulomb_eval(c, z, r2, k)) ++clamps;
        for (int q = 0; q < d; ++q) out(q, b) += k[q];
      }
    }
    if (used == 0) throw std::invalid_argument("direct_field: every source coincides with target");
    out.col(b) /= static_cast<double>(used);
  }
  g_clamp_events.fetch_add(clamps, std::memory_order_relaxed);
  return out;
}

Eigen::MatrixXd direct_field_self_excluded(const KernelSpec& spec, const Eigen::MatrixXd& pts) {
  if (pts.cols() < 2) {
    throw std::invalid_argument("direct_field_self_excluded: need at least two particles");
  }
  // exact coincidences (including self) are skipped by direct_field
  return direct_field(spec, pts, pts);
}

std::uint64_t branch_signature(const KernelSpec& spec, const Eigen::MatrixXd& xs,
                               const Eigen::MatrixXd& ys) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](unsigned v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  if (spec.kind == KernelKind::Zero) return h;
  for (Eigen::Index b = 0; b < xs.cols(); ++b) {
    for (Eigen::Index i = 0; i < ys.cols(); ++i) {
      if (spec.kind == KernelKind::BiotSavart) {
        const double z1 = xs(0, b) - ys(0, i), z2 = xs(1, b) - ys(1, i);
        mix((std::signbit(z1) ? 1u : 0u) | (std::signbit(z2) ? 2u : 0u) |
            (z1 == 0.0 ? 4u : 0u) | (z2 == 0.0 ? 8u : 0u));
      } else {
        const double r2 = (xs.col(b) - ys.col(i)).squaredNorm();
        mix(r2 < spec.clamp_eps * spec.clamp_eps ? 1u : 0u);
      }
    }
  }
  return h;
}

}  // namespace einn
