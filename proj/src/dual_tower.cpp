#include "einn/dual_tower.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace einn {

namespace {

using Partition = std::vector<unsigned>;

std::vector<Partition> partitions_of(unsigned mask) {
  if (mask == 0) return {Partition{}};
  const unsigned lowest = mask & (~mask + 1u);
  const unsigned rest = mask ^ lowest;
  std::vector<Partition> out;
  // Enumerate every subset of `rest` (including empty) to join `lowest`.
  for (unsigned sub = rest;; sub = (sub - 1) & rest) {
    for (Partition p : partitions_of(rest ^ sub)) {
      p.push_back(lowest | sub);
      out.push_back(std::move(p));
    }
    if (sub == 0) break;
  }
  return out;
}

const std::vector<std::vector<Partition>>& partition_table() {
  static const std::vector<std::vector<Partition>> table = [] {
    std::vector<std::vector<Partition>> t(DualTower::kMaxSize);
    for (unsigned m = 0; m < DualTower::kMaxSize; ++m) t[m] = partitions_of(m);
    return t;
  }();
  return table;
}

void check_level(int level) {
  if (level < 0 || level > DualTower::kMaxLevel) {
    throw std::invalid_argument("DualTower: nesting level must be in 0..3");
  }
}

void check_same(const DualTower& a, const DualTower& b) {
  if (a.level() != b.level()) {
    throw std::invalid_argument("DualTower: cannot mix nesting levels");
  }
}

}  // namespace

DualTower::DualTower(int level, double value) : level_(level) {
  check_level(level);
  c_[0] = value;
}

DualTower DualTower::variable(int level, double value, std::span<const double> seeds) {
  DualTower t(level, value);
  if (static_cast<int>(seeds.size()) != level) {
    throw std::invalid_argument("DualTower::variable: need one seed per level");
  }
  for (int k = 0; k < level; ++k) t.c_[1u << k] = seeds[static_cast<std::size_t>(k)];
  return t;
}

DualTower& DualTower::operator+=(const DualTower& o) {
  check_same(*this, o);
  for (std::size_t i = 0; i < size(); ++i) c_[i] += o.c_[i];
  return *this;
}

DualTower& DualTower::operator*=(double s) {
  for (std::size_t i = 0; i < size(); ++i) c_[i] *= s;
  return *this;
}

DualTower operator-(const DualTower& a, const DualTower& b) {
  check_same(a, b);
  DualTower r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r.c_[i] -= b.c_[i];
  return r;
}

DualTower operator*(const DualTower& a, const DualTower& b) {
  check_same(a, b);
  DualTower r(a.level_, 0.0);
  const unsigned n = static_cast<unsigned>(a.size());
  for (unsigned m = 0; m < n; ++m) {
    double acc = 0.0;
    for (unsigned s = m;; s = (s - 1) & m) {
      acc += a.c_[s] * b.c_[m ^ s];
      if (s == 0) break;
    }
    r.c_[m] = acc;
  }
  return r;
}

DualTower apply_scalar(const DualTower& a, std::span<const double> derivs) {
  if (derivs.size() < static_cast<std::size_t>(a.level()) + 1) {
    throw std::invalid_argument("apply_scalar: not enough derivatives for level");
  }
  const auto& table = partition_table();
  DualTower r(a.level(), derivs[0]);
  for (unsigned m = 1; m < a.size(); ++m) {
    double acc = 0.0;
    for (const Partition& p : table[m]) {
      double prod = derivs[p.size()];
      for (unsigned block : p) prod *= a[block];
      acc += prod;
    }
    r[m] = acc;
  }
  return r;
}

std::array<double, 5> tanh_derivatives(double x) {
  const double s = std::tanh(x);
  const double s1 = 1.0 - s * s;
  const double s2 = -2.0 * s * s1;
  const double s3 = -2.0 * s1 * s1 + 4.0 * s * s * s1;
  const double s4 = -4.0 * s1 * s2 + 8.0 * s * s1 * s1 + 4.0 * s * s * s2;
  return {s, s1, s2, s3, s4};
}

DualTower tanh(const DualTower& a) {
  const auto d = tanh_derivatives(a.value());
  return apply_scalar(a, d);
}

namespace tower_detail {

void product_pullback(const DualTower& a, const DualTower& b, const DualTower& z_bar,
                      DualTower& a_bar, DualTower& b_bar) {
  const unsigned n = static_cast<unsigned>(a.size());
  for (unsigned m = 0; m < n; ++m) {
    const double zb = z_bar[m];
    if (zb == 0.0) continue;
    for (unsigned s = m;; s = (s - 1) & m) {
      a_bar[s] += zb * b[m ^ s];
      b_bar[m ^ s] += zb * a[s];
      if (s == 0) break;
    }
  }
}

void scalar_pullback(const DualTower& a, std::span<const double> derivs,
                     const DualTower& z_bar, DualTower& a_bar) {
  if (derivs.size() < static_cast<std::size_t>(a.level()) + 2) {
    throw std::invalid_argument("scalar_pullback: need derivatives up to level + 1");
  }
  const auto& table = partition_table();
  const unsigned n = static_cast<unsigned>(a.size());
  a_bar[0] += z_bar[0] * derivs[1];
  for (unsigned m = 1; m < n; ++m) {
    const double zb = z_bar[m];
    if (zb == 0.0) continue;
    for (const Partition& p : table[m]) {
      // d/d a[0]: the outer derivative order shifts by one.
      double prod = derivs[p.size() + 1];
      for (unsigned block : p) prod *= a[block];
      a_bar[0] += zb * prod;
      // d/d a[block]: product of the other blocks.
      for (std::size_t k = 0; k < p.size(); ++k) {
        double others = derivs[p.size()];
        for (std::size_t j = 0; j < p.size(); ++j) {
          if (j != k) others *= a[p[j]];
        }
        a_bar[p[k]] += zb * others;
      }
    }
  }
}

}  // namespace tower_detail

}  // namespace einn
