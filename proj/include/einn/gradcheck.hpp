#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "einn/adjoint.hpp"
#include "einn/kernels.hpp"

namespace einn {

/// One finite-difference check of the adjoint gradient on a tiny network.
struct GradcheckCase {
  KernelKind kernel = KernelKind::BiotSavart;
  int hidden_layers = 1;
  int width = 4;
  int probes = 2;
  int particles = 8;
  int steps = 10;
  double horizon = 1.0;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the coordinate relative error.
  double floor = 1e-6;
  AdjointScheme scheme = AdjointScheme::Discrete;
  std::uint64_t seed = 0;
  /// Redraws allowed when a finite-difference probe crosses a kernel branch.
  int max_redraws = 20;
};

struct GradcheckResult {
  std::string kernel;
  std::uint64_t seed_used = 0;
  int coords = 0;
  int redraws = 0;
  double max_rel_err = 0.0;
  double loss = 0.0;
  bool passed = false;
};

GradcheckResult run_gradcheck_case(const GradcheckCase& c);

/// Scalar reference problem s' = theta s, g = s^2, s0 = 1, T = 1 at theta = 0,
/// whose exact gradient is 1.
struct ScalarBenchmark {
  double discrete = 0.0;
  double continuous = 0.0;
};
ScalarBenchmark scalar_benchmark(int steps = 100);

struct GradcheckSuite {
  ScalarBenchmark scalar;
  std::vector<GradcheckResult> cases;
  bool passed = false;
};

/// The scalar benchmark plus `configs` random tiny-net cases cycling through
/// Coulomb (d = 3), Biot-Savart (d = 2) and zero kernels.
GradcheckSuite run_gradcheck_suite(int configs, std::uint64_t seed);

}  // namespace einn
