#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "foss/helixsort.hpp"
#include "foss/layers.hpp"
#include "foss/selective_ssm.hpp"

namespace foss::fd {

struct FDBranchConfig {
  std::size_t d_model = 32;  // C
  std::size_t seq_len = 20;  // L
  std::size_t state_size = 16;
  std::size_t generator_hidden = 16;
  std::size_t conv_width = 3;    // local-feature conv inside each scan
  std::size_t dwconv_width = 3;  // depthwise separable conv before the spatial scan
  ssm::StateNorm state_norm = ssm::StateNorm::feed_forward;

  /// Use the identity ordering instead of the helix spiral.
  bool identity_helix = false;
  /// Replace the spectral processing stages (conv/scan/norm) with identity.
  bool identity_processing = false;
  /// Channel evolution without a scan between reorder and inverse transform.
  bool specevolve_prose_mode = false;
  /// Separate conv/scan/norm stacks for amplitude and phase.
  bool separate_stream_stacks = false;

  void validate() const;
};

struct FDFeatures {
  Tensor F_f;
  Tensor F_enhance;
  Tensor F_freq;
};

/// Spatial spectral interaction: DFT along L, polar split, helix reorder,
/// conv -> SiLU -> selective scan -> LayerNorm on the reordered streams,
/// un-reorder, back to Cartesian, inverse DFT, gate with SiLU(F_l).
class Coarse2FineSSM {
 public:
  Coarse2FineSSM(const std::string& name, const FDBranchConfig& config, SplitMix64& rng, DType dtype);

  Tensor forward(Tape& tape, const Tensor& f_l) const;
  void collect(ParameterList& out);
  const helix::HelixPermutation& permutation() const { return perm_; }

 private:
  struct Stack {
    layers::DepthwiseSeparableConv conv;
    std::unique_ptr<ssm::SelectiveSSM> scan;
    layers::LayerNorm norm;
    Tensor forward(Tape& tape, const Tensor& x) const;
  };

  FDBranchConfig config_;
  helix::HelixPermutation perm_;
  std::vector<Stack> stacks_;  // one shared stack, or amplitude + phase
};

/// Channel spectral evolution: pool over L, DFT across channels, order
/// channels by ascending magnitude, selective scan over (amplitude, phase),
/// restore order, inverse DFT, gate with SiLU(F_g), then gate F_in.
class SpecEvolveSSM {
 public:
  SpecEvolveSSM(const std::string& name, const FDBranchConfig& config, SplitMix64& rng, DType dtype);

  Tensor forward(Tape& tape, const Tensor& f_in) const;
  void collect(ParameterList& out);

 private:
  FDBranchConfig config_;
  std::unique_ptr<ssm::SelectiveSSM> scan_;
};

class FDBranch {
 public:
  FDBranch(const std::string& name, const FDBranchConfig& config, SplitMix64& rng, DType dtype);

  FDFeatures features(Tape& tape, const Tensor& x_embedded) const;
  Tensor forward(Tape& tape, const Tensor& x_embedded) const { return features(tape, x_embedded).F_freq; }
  void collect(ParameterList& out);

  const FDBranchConfig& config() const { return config_; }
  layers::Linear& projection() { return projection_; }
  layers::LayerNorm& input_norm() { return input_norm_; }
  const Coarse2FineSSM& coarse2fine() const { return coarse_; }
  const SpecEvolveSSM& specevolve() const { return evolve_; }

 private:
  FDBranchConfig config_;
  layers::LayerNorm input_norm_;
  Coarse2FineSSM coarse_;
  SpecEvolveSSM evolve_;
  layers::Linear projection_;
};

}  // namespace foss::fd
