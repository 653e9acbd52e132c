#include "foss/spectral.hpp"

#include <cmath>
#include <numbers>

namespace foss::spectral {
namespace {

using detail::Node;

// Radix-2 is used for power-of-two lengths at or above this size; shorter
// transforms use direct summation.
constexpr std::size_t kFastMinLength = 64;

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

// cos/sin of 2 pi k / T, built so that entry T-k mirrors entry k exactly and
// the quarter points are exact.
struct Twiddles {
  std::vector<double> c, s;
  explicit Twiddles(std::size_t T) : c(T), s(T) {
    for (std::size_t k = 0; 2 * k <= T; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(T);
      c[k] = std::cos(a);
      s[k] = std::sin(a);
      if (4 * k == T) c[k] = 0.0, s[k] = 1.0;
      if (2 * k == T) c[k] = -1.0, s[k] = 0.0;
    }
    c[0] = 1.0;
    s[0] = 0.0;
    for (std::size_t k = T / 2 + 1; k < T; ++k) {
      c[k] = c[T - k];
      s[k] = -s[T - k];
    }
  }
};

// Unitary complex DFT of every column of [T x d] row-major buffers.
// sign = -1 forward, +1 inverse. `bins` limits the output bins computed by
// the direct path (the rest are left untouched).
void transform(const double* re_in, const double* im_in, std::size_t T, std::size_t d, int sign,
               double* re_out, double* im_out, std::size_t bins) {
  const Twiddles tw(T);
  const double norm = 1.0 / std::sqrt(static_cast<double>(T));
  const double sg = static_cast<double>(sign);
  if (is_pow2(T) && T >= kFastMinLength) {
    std::vector<double> br(T), bi(T);
    unsigned bits = 0;
    while ((std::size_t{1} << bits) < T) ++bits;
    for (std::size_t col = 0; col < d; ++col) {
      for (std::size_t t = 0; t < T; ++t) {
        std::size_t r = 0;
        for (unsigned b = 0; b < bits; ++b)
          if (t & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
        br[r] = re_in[t * d + col];
        bi[r] = im_in ? im_in[t * d + col] : 0.0;
      }
      for (std::size_t len = 2; len <= T; len <<= 1) {
        const std::size_t step = T / len;
        for (std::size_t start = 0; start < T; start += len)
          for (std::size_t k = 0; k < len / 2; ++k) {
            const double wr = tw.c[k * step];
            const double wi = sg * tw.s[k * step];
            const std::size_t u = start + k, v = u + len / 2;
            const double xr = br[v] * wr - bi[v] * wi;
            const double xi = br[v] * wi + bi[v] * wr;
            br[v] = br[u] - xr;
            bi[v] = bi[u] - xi;
            br[u] += xr;
            bi[u] += xi;
          }
      }
      for (std::size_t w = 0; w < bins; ++w) {
        re_out[w * d + col] = br[w] * norm;
        im_out[w * d + col] = bi[w] * norm;
      }
    }
    return;
  }
  for (std::size_t w = 0; w < bins; ++w) {
    double* ro = re_out + w * d;
    double* io = im_out + w * d;
    for (std::size_t col = 0; col < d; ++col) ro[col] = io[col] = 0.0;
    std::size_t k = 0;  // (t * w) mod T
    for (std::size_t t = 0; t < T; ++t) {
      const double cr = tw.c[k];
      const double ci = sg * tw.s[k];
      const double* xr = re_in + t * d;
      if (im_in) {
        const double* xi = im_in + t * d;
        for (std::size_t col = 0; col < d; ++col) {
          ro[col] += xr[col] * cr - xi[col] * ci;
          io[col] += xr[col] * ci + xi[col] * cr;
        }
      } else {
        for (std::size_t col = 0; col < d; ++col) {
          ro[col] += xr[col] * cr;
          io[col] += xr[col] * ci;
        }
      }
      k += w;
      if (k >= T) k -= T;
    }
    for (std::size_t col = 0; col < d; ++col) {
      ro[col] *= norm;
      io[col] *= norm;
    }
  }
}

// Forward transform of a real [T x d] signal with exact conjugate symmetry.
void forward_real(const double* x, std::size_t T, std::size_t d, double* re, double* im) {
  const std::size_t half = T / 2 + 1;
  transform(x, nullptr, T, d, -1, re, im, is_pow2(T) && T >= kFastMinLength ? T : half);
  for (std::size_t w = half; w < T; ++w)
    for (std::size_t col = 0; col < d; ++col) {
      re[w * d + col] = re[(T - w) * d + col];
      im[w * d + col] = -im[(T - w) * d + col];
    }
}

void require_seq(const Tensor& x, const char* op) {
  if (x.rank() != 2 || x.dim(0) == 0) {
    throw DimensionError(std::string(op) + ": expected a [T x d] tensor with T >= 1, got " +
                         to_string(x.shape()));
  }
}

void require_pair(const Tensor& a, const Tensor& b, const char* op) {
  require_seq(a, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": component shapes differ: " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

}  // namespace

ComplexSeq dft_forward(const Tensor& x) {
  require_seq(x, "dft_forward");
  const std::size_t T = x.dim(0), d = x.dim(1);
  std::vector<double> re(T * d), im(T * d);
  forward_real(x.data().data(), T, d, re.data(), im.data());

  // Adjoint of a real-part (imag-part) output: Re(inverse DFT of g (j g)).
  auto adjoint = [T, d](bool imag_part) {
    return [T, d, imag_part](Node& o) {
      Node& in = *o.inputs[0];
      if (!in.differentiable()) return;
      std::vector<double> zero(T * d, 0.0), gr(T * d), gi(T * d);
      if (imag_part) {
        transform(zero.data(), o.grad.data(), T, d, +1, gr.data(), gi.data(), T);
      } else {
        transform(o.grad.data(), nullptr, T, d, +1, gr.data(), gi.data(), T);
      }
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gr[i];
    };
  };
  return {make_result({T, d}, x.dtype(), std::move(re), {x}, adjoint(false)),
          make_result({T, d}, x.dtype(), std::move(im), {x}, adjoint(true))};
}

Tensor dft_inverse(const ComplexSeq& spectrum, InverseCheck check) {
  require_pair(spectrum.re, spectrum.im, "dft_inverse");
  const DType dtype = common_dtype({&spectrum.re, &spectrum.im});
  const std::size_t T = spectrum.re.dim(0), d = spectrum.re.dim(1);
  std::vector<double> xr(T * d), xi(T * d);
  transform(spectrum.re.data().data(), spectrum.im.data().data(), T, d, +1, xr.data(), xi.data(), T);
  if (check == InverseCheck::strict) {
    for (std::size_t i = 0; i < xi.size(); ++i) {
      if (!(std::fabs(xi[i]) <= kImagResidueLimit)) {
        throw SpectralConsistencyError("dft_inverse: imaginary residue " + std::to_string(xi[i]) +
                                       " at t=" + std::to_string(i / d) + ", dim " +
                                       std::to_string(i % d) + " (spectrum is not conjugate symmetric)");
      }
    }
  }
  return make_result({T, d}, dtype, std::move(xr), {spectrum.re, spectrum.im}, [T, d](Node& o) {
    Node& nre = *o.inputs[0];
    Node& nim = *o.inputs[1];
    if (!nre.differentiable() && !nim.differentiable()) return;
    std::vector<double> gr(T * d), gi(T * d);
    transform(o.grad.data(), nullptr, T, d, -1, gr.data(), gi.data(), T);
    if (nre.differentiable()) {
      auto& g = nre.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gr[i];
    }
    if (nim.differentiable()) {
      auto& g = nim.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gi[i];
    }
  });
}

PolarSpectrum to_polar(const ComplexSeq& spectrum) {
  require_pair(spectrum.re, spectrum.im, "to_polar");
  const DType dtype = common_dtype({&spectrum.re, &spectrum.im});
  const auto R = spectrum.re.data();
  const auto I = spectrum.im.data();
  const std::size_t n = R.size();
  std::vector<double> amp(n), phase(n);
  for (std::size_t i = 0; i < n; ++i) {
    amp[i] = std::sqrt(R[i] * R[i] + I[i] * I[i]);
    if (amp[i] < kAmplitudeGuard) {
      phase[i] = 0.0;
    } else {
      phase[i] = std::atan2(I[i], R[i]);
      if (phase[i] <= -std::numbers::pi) phase[i] = std::numbers::pi;
    }
  }
  // d|F|/d(re, im) = (re, im) / |F|;  dangle/d(re, im) = (-im, re) / |F|^2
  auto amplitude_adjoint = [](Node& o) {
    Node& nr = *o.inputs[0];
    Node& ni = *o.inputs[1];
    for (std::size_t i = 0; i < o.value.size(); ++i) {
      const double re = nr.value[i], im = ni.value[i];
      const double a = std::sqrt(re * re + im * im);
      if (a < kAmplitudeGuard) continue;
      if (nr.differentiable()) nr.grad_buffer()[i] += o.grad[i] * re / a;
      if (ni.differentiable()) ni.grad_buffer()[i] += o.grad[i] * im / a;
    }
  };
  auto phase_adjoint = [](Node& o) {
    Node& nr = *o.inputs[0];
    Node& ni = *o.inputs[1];
    for (std::size_t i = 0; i < o.value.size(); ++i) {
      const double re = nr.value[i], im = ni.value[i];
      const double a2 = re * re + im * im;
      if (std::sqrt(a2) < kAmplitudeGuard) continue;
      if (nr.differentiable()) nr.grad_buffer()[i] += -o.grad[i] * im / a2;
      if (ni.differentiable()) ni.grad_buffer()[i] += o.grad[i] * re / a2;
    }
  };
  const Shape shape = spectrum.re.shape();
  return {make_result(shape, dtype, std::move(amp), {spectrum.re, spectrum.im}, amplitude_adjoint),
          make_result(shape, dtype, std::move(phase), {spectrum.re, spectrum.im}, phase_adjoint)};
}

ComplexSeq from_polar(const PolarSpectrum& polar) {
  require_pair(polar.amplitude, polar.phase, "from_polar");
  const DType dtype = common_dtype({&polar.amplitude, &polar.phase});
  const auto A = polar.amplitude.data();
  const auto P = polar.phase.data();
  const std::size_t n = A.size();
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = A[i] * std::cos(P[i]);
    im[i] = A[i] * std::sin(P[i]);
  }
  auto real_adjoint = [](Node& o) {
    Node& na = *o.inputs[0];
    Node& np = *o.inputs[1];
    for (std::size_t i = 0; i < o.value.size(); ++i) {
      const double a = na.value[i], p = np.value[i];
      if (na.differentiable()) na.grad_buffer()[i] += o.grad[i] * std::cos(p);
      if (np.differentiable()) np.grad_buffer()[i] += -o.grad[i] * a * std::sin(p);
    }
  };
  auto imag_adjoint = [](Node& o) {
    Node& na = *o.inputs[0];
    Node& np = *o.inputs[1];
    for (std::size_t i = 0; i < o.value.size(); ++i) {
      const double a = na.value[i], p = np.value[i];
      if (na.differentiable()) na.grad_buffer()[i] += o.grad[i] * std::sin(p);
      if (np.differentiable()) np.grad_buffer()[i] += o.grad[i] * a * std::cos(p);
    }
  };
  const Shape shape = polar.amplitude.shape();
  return {make_result(shape, dtype, std::move(re), {polar.amplitude, polar.phase}, real_adjoint),
          make_result(shape, dtype, std::move(im), {polar.amplitude, polar.phase}, imag_adjoint)};
}

}  // namespace foss::spectral
