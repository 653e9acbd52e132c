#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "foss/tensor.hpp"

namespace foss {

enum class Difference {
  central,  // (f(x+h) - f(x-h)) / 2h
  ridders,  // central differences from step h downward, Richardson-extrapolated
};

struct GradCheckOptions {
  /// Check at most this many coordinates (0 = all), drawn without
  /// replacement from a seeded stream.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  Difference difference = Difference::central;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "<operand>[index]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

using InputLossFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;
using ParameterLossFn = std::function<Tensor(Tape&)>;

/// Compares reverse-mode gradients of `fn` at `point` against central
/// differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate.
GradCheckReport grad_check(const InputLossFn& fn, std::span<const Tensor> point, double h,
                           const GradCheckOptions& options = {});

/// Same comparison with respect to parameters; `fn` must obtain them through
/// Tape::leaf. Parameter values are perturbed in place and restored.
GradCheckReport grad_check_parameters(const ParameterLossFn& fn, const ParameterList& params,
                                      double h, const GradCheckOptions& options = {});

}  // namespace foss
