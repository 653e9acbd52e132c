#pragma once

#include <cstddef>
#include <vector>

#include "foss/tensor.hpp"

namespace foss::spectral {

/// Complex sequence as paired real tensors of identical shape [T x d].
struct ComplexSeq {
  Tensor re;
  Tensor im;
};

/// Per-frequency modulus (>= 0) and angle in (-pi, pi].
struct PolarSpectrum {
  Tensor amplitude;
  Tensor phase;
};

/// Below this modulus the phase is pinned to 0 and neither polar component
/// passes gradient.
inline constexpr double kAmplitudeGuard = 1e-12;

/// Residue bound enforced by InverseCheck::strict.
inline constexpr double kImagResidueLimit = 1e-6;

/// F(w) = T^{-1/2} sum_t x(t) exp(-j 2 pi t w / T), independently per column
/// of x[T x d]. Bins above T/2 are written as exact conjugates of their
/// mirror bins, so real-input spectra are conjugate symmetric bit for bit.
ComplexSeq dft_forward(const Tensor& x);

enum class InverseCheck {
  /// Raise SpectralConsistencyError when the imaginary part of the result
  /// exceeds kImagResidueLimit.
  strict,
  /// Return the real part without checking (the spectrum need not be
  /// conjugate symmetric).
  real_part,
};

/// x(t) = T^{-1/2} sum_w F(w) exp(+j 2 pi t w / T); returns the real part.
Tensor dft_inverse(const ComplexSeq& spectrum, InverseCheck check = InverseCheck::strict);

PolarSpectrum to_polar(const ComplexSeq& spectrum);
ComplexSeq from_polar(const PolarSpectrum& polar);

}  // namespace foss::spectral
