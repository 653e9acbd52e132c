#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "foss/gradcheck.hpp"

namespace foss::diag {

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kModuleTolerance = 1e-4;

struct Oracle {
  double h = 1e-5;
  Difference difference = Difference::central;
};

// Plain central differences at a fixed step lose tiny gradient coordinates
// to rounding noise, so the checks extrapolate from h = 1e-2 downward.
inline constexpr Oracle kPrimitiveOracle{1e-2, Difference::ridders};
inline constexpr Oracle kModuleOracle{1e-2, Difference::ridders};

struct CheckResult {
  std::string name;
  GradCheckReport report;  // worst over all points
  double tolerance = 0.0;
  std::size_t points = 0;
  bool passed() const { return report.max_relative_error < tolerance; }
};

/// Every differentiable primitive at `points` random f64 points.
std::vector<CheckResult> primitive_checks(std::uint64_t seed, std::size_t points, Oracle oracle = kPrimitiveOracle);

/// Layers, the selective SSM block and the frequency branch at tiny dims,
/// with respect to inputs and parameters.
std::vector<CheckResult> module_checks(std::uint64_t seed, std::size_t points, Oracle oracle = kModuleOracle);

/// Full model loss (T_obs=9, T_fut=8, d_model=8, K=3) with respect to a
/// seeded subset of parameters and all inputs.
CheckResult end_to_end_check(std::uint64_t seed, std::size_t points, std::size_t max_coordinates = 400,
                             Oracle oracle = kModuleOracle);

std::string csv_header();
std::string csv_row(const CheckResult& r);

}  // namespace foss::diag
