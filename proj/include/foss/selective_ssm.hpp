#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "foss/layers.hpp"
#include "foss/tensor.hpp"

namespace foss::ssm {

/// Where the normalized state LN(SiLU(h)) is consumed.
enum class StateNorm {
  disabled,      // plain linear recurrence
  feed_forward,  // normalized state drives both the next update and the read-out
  output_only,   // recurrence stays linear; only the read-out sees the normalized state
};

struct SelectiveSSMConfig {
  std::size_t state_size = 16;  // n
  std::size_t d_in = 1;
  std::size_t d_out = 1;  // p
  std::size_t conv_width = 3;
  std::size_t generator_hidden = 16;
  StateNorm norm = StateNorm::feed_forward;
  double norm_eps = 1e-5;

  void validate() const;
};

/// Per-step matrices for one time step, dense row-major.
/// A: diagonal of the transition (length n), B: n x d_in, C: p x n, D: p x d_in.
struct SSMStepParams {
  std::vector<double> A, B, C, D;
};

/// Per-step matrices for a whole sequence as tensors:
/// A [T x n], B [T x n*d_in], C [T x p*n], D [T x p*d_in].
struct StepParamSeq {
  Tensor A, B, C, D;
};

/// Margin keeping squashed transition entries strictly inside (0, 1) after
/// rounding to either storage precision.
inline constexpr double kDecayMargin = 1e-6;

/// A = m + (1 - 2m) * exp(-softplus(raw)), m = kDecayMargin. Differentiable.
Tensor decay_squash(const Tensor& raw);
/// Scalar form of decay_squash.
double decay_squash(double raw);

/// Left-to-right selective scan. For t = 0..T-1:
///   y(t)   = C_t h(t) + D_t x(t)
///   h(t+1) = A_t * h(t) + B_t x(t)
/// then, depending on `norm`, LN(SiLU(.)) with (gamma, beta) is applied to the
/// new state (feed_forward) or to the state seen by the read-out
/// (output_only). Raises NumericalError naming the step on NaN/Inf.
Tensor selective_scan(const StepParamSeq& params, const Tensor& x, const Tensor& h0, const Tensor& gamma,
                      const Tensor& beta, StateNorm norm, double eps = 1e-5);

/// Reference recurrence with full n x n transition matrices (the diagonal of
/// each A_t is embedded into a dense matrix) and no normalization.
Tensor dense_unroll_oracle(const std::vector<SSMStepParams>& steps, const Tensor& x,
                           const std::vector<double>& h0);

/// Packs explicit per-step parameters into scan tensors.
StepParamSeq pack_step_params(const std::vector<SSMStepParams>& steps, std::size_t n, std::size_t d_in,
                              std::size_t p, DType dtype);

/// Input-dependent selective SSM block: local depthwise features, four
/// two-layer generators over concat(x, x_local), and the scan.
class SelectiveSSM {
 public:
  SelectiveSSM(const std::string& name, const SelectiveSSMConfig& config, SplitMix64& rng, DType dtype);
  SelectiveSSM(const SelectiveSSM&) = delete;
  SelectiveSSM& operator=(const SelectiveSSM&) = delete;

  const SelectiveSSMConfig& config() const { return config_; }

  /// Depthwise same-length convolution of x [T x d_in].
  Tensor local_features(Tape& tape, const Tensor& x) const;

  /// A_t..D_t for every step. B, C, D are scaled by 1/sqrt(fan-in) of the
  /// product they enter so that initial outputs stay O(1).
  StepParamSeq generate_step_params(Tape& tape, const Tensor& x, const Tensor& x_local) const;

  Tensor forward(Tape& tape, const Tensor& x, const std::optional<Tensor>& h0 = std::nullopt) const;

  void collect(ParameterList& out);

  Parameter& conv_kernel() { return conv_kernel_; }
  Parameter& conv_bias() { return conv_bias_; }
  layers::Mlp& generator(char which);
  Parameter& norm_gamma() { return norm_gamma_; }
  Parameter& norm_beta() { return norm_beta_; }

 private:
  SelectiveSSMConfig config_;
  DType dtype_;
  Parameter conv_kernel_;
  Parameter conv_bias_;
  layers::Mlp gen_a_, gen_b_, gen_c_, gen_d_;
  Parameter norm_gamma_;
  Parameter norm_beta_;
};

}  // namespace foss::ssm
