#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace einn {

/// Nested dual number with up to three perturbation levels.
///
/// A level-L tower carries 2^L coefficients indexed by subsets of the
/// perturbations {e_1, ..., e_L} (with e_k^2 = 0): coefficient `mask` is the
/// mixed directional derivative along the directions seeded at the levels set
/// in `mask`. Seeding every level with the same direction turns the top
/// coefficient into the L-th directional derivative; seeding different
/// directions yields mixed partials. Level 0 is plain real arithmetic.
///
/// Towers of different levels never mix; doing so throws std::invalid_argument.
class DualTower {
 public:
  static constexpr int kMaxLevel = 3;
  static constexpr std::size_t kMaxSize = std::size_t{1} << kMaxLevel;

  DualTower() = default;
  /// Constant tower at `level` with all perturbation coefficients zero.
  DualTower(int level, double value);

  /// Independent variable: value plus one seed coefficient per level.
  static DualTower variable(int level, double value, std::span<const double> seeds);

  int level() const { return level_; }
  std::size_t size() const { return std::size_t{1} << level_; }
  double value() const { return c_[0]; }
  /// Coefficient of the perturbation product selected by `mask`.
  double operator[](unsigned mask) const { return c_[mask]; }
  double& operator[](unsigned mask) { return c_[mask]; }
  /// Coefficient of e_1 e_2 ... e_L.
  double top() const { return c_[size() - 1]; }

  DualTower& operator+=(const DualTower& o);
  DualTower& operator*=(double s);

  friend DualTower operator+(DualTower a, const DualTower& b) { return a += b; }
  friend DualTower operator-(const DualTower& a, const DualTower& b);
  friend DualTower operator*(const DualTower& a, const DualTower& b);
  friend DualTower operator*(double s, DualTower a) { return a *= s; }
  friend DualTower operator+(DualTower a, double s) {
    a.c_[0] += s;
    return a;
  }

 private:
  int level_ = 0;
  std::array<double, kMaxSize> c_{};
};

/// Applies a scalar function given its derivatives derivs[k] = phi^(k)(value),
/// k = 0..level, via Faa di Bruno over set partitions of the perturbation set.
DualTower apply_scalar(const DualTower& a, std::span<const double> derivs);

DualTower tanh(const DualTower& a);

/// tanh and its first four derivatives at x, in order.
std::array<double, 5> tanh_derivatives(double x);

namespace tower_detail {

/// Reverse rule for z = a * b: accumulates covectors of a and b from z_bar.
void product_pullback(const DualTower& a, const DualTower& b, const DualTower& z_bar,
                      DualTower& a_bar, DualTower& b_bar);

/// Reverse rule for z = phi(a), derivs holds phi^(k)(a.value()) for k = 0..level+1.
void scalar_pullback(const DualTower& a, std::span<const double> derivs,
                     const DualTower& z_bar, DualTower& a_bar);

}  // namespace tower_detail

}  // namespace einn
