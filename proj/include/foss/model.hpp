#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "foss/fd_branch.hpp"
#include "foss/layers.hpp"
#include "foss/selective_ssm.hpp"

namespace foss::model {

struct AblationFlags {
  bool disable_fd_branch = false;
  bool identity_helix = false;
  bool identity_fourier_ssm = false;
  bool concat_mlp_fusion = false;
  bool specevolve_prose_mode = false;
  bool eq7_output_only = false;
};

struct FoSSConfig {
  std::size_t t_obs = 20;
  std::size_t t_fut = 30;
  std::size_t d_raw = 2;
  std::size_t d_model = 32;
  std::size_t state_size = 16;
  std::size_t generator_hidden = 16;
  std::size_t conv_width = 3;
  std::size_t dwconv_width = 3;
  std::size_t head_hidden = 64;  // hidden width of the decoder / fusion perceptrons
  std::size_t heads = 1;
  std::size_t k = 6;
  double lambda = 0.1;
  /// Positions are divided by this before embedding and predictions are
  /// multiplied by it, so the network works in O(1) units.
  double coord_scale = 10.0;
  DType dtype = DType::f32;
  std::uint64_t init_seed = 0;
  AblationFlags ablation;

  void validate() const;
  fd::FDBranchConfig fd_config() const;
  ssm::SelectiveSSMConfig td_config() const;
};

/// K candidate futures (tensor [K x T_fut x 2], meters) and their
/// probabilities (tensor [K], sums to 1).
struct CandidateSet {
  Tensor trajectories;
  Tensor probabilities;
};

struct LossBreakdown {
  Tensor total;  // differentiable scalar
  double l_time = 0.0;
  double l_freq = 0.0;
  double l_total = 0.0;
};

struct Prediction {
  CandidateSet candidates;
  Tensor final_trajectory;  // [T_fut x 2]
};

/// Time-domain selective scan + frequency branch, cross-attention fusion,
/// learnable-query candidate decoding and probability-weighted fusion.
class FoSSModel {
 public:
  explicit FoSSModel(const FoSSConfig& config);
  FoSSModel(const FoSSModel&) = delete;
  FoSSModel& operator=(const FoSSModel&) = delete;

  const FoSSConfig& config() const { return config_; }

  Tensor embed(Tape& tape, const Tensor& x) const;
  Tensor td_branch_forward(Tape& tape, const Tensor& e) const;
  Tensor fd_branch_forward(Tape& tape, const Tensor& e) const;
  Tensor fuse(Tape& tape, const Tensor& y_time, const Tensor& f_freq) const;
  Tensor fuse_concat_mlp(Tape& tape, const Tensor& y_time, const Tensor& f_freq) const;
  CandidateSet decode_candidates(Tape& tape, const Tensor& z) const;

  /// x: observed positions [T_obs x d_raw] in meters.
  Prediction forward(Tape& tape, const Tensor& x) const;

  /// Trainable parameters on the configured forward path, in a fixed order
  /// with unique names.
  ParameterList parameters();
  std::size_t param_count();

  layers::Linear& embed_linear() { return embed_linear_; }
  layers::LayerNorm& embed_norm() { return embed_norm_; }
  ssm::SelectiveSSM& td_branch() { return *td_; }
  fd::FDBranch& fd_branch() { return *fd_; }
  layers::Attention& fusion_attention() { return fuse_attn_; }
  layers::LayerNorm& fusion_norm() { return fuse_norm_; }
  layers::Mlp& fusion_mlp() { return fuse_mlp_; }
  Parameter& queries() { return queries_; }
  layers::Attention& decoder_attention() { return dec_attn_; }
  layers::Mlp& trajectory_head() { return traj_head_; }
  layers::Mlp& score_head() { return score_head_; }

 private:
  FoSSConfig config_;
  layers::Linear embed_linear_;
  layers::LayerNorm embed_norm_;
  std::unique_ptr<ssm::SelectiveSSM> td_;
  std::unique_ptr<fd::FDBranch> fd_;
  layers::Attention fuse_attn_;
  layers::LayerNorm fuse_norm_;
  layers::Mlp fuse_mlp_;
  Parameter queries_;
  layers::Attention dec_attn_;
  layers::Mlp traj_head_;
  layers::Mlp score_head_;
};

/// Probability-weighted sum of the candidates -> [T_fut x 2].
Tensor fuse_candidates(const CandidateSet& candidates);

/// l_time = mean |pred - truth| over all entries; l_freq = mean over the
/// T_fut x 2 complex coefficients of |dRe| + |dIm| between the per-dimension
/// spectra; l_total = l_time + lambda * l_freq.
LossBreakdown loss(const Tensor& prediction, const Tensor& truth, double lambda);

/// Number of scalar parameters.
std::size_t param_count(FoSSModel& model);

}  // namespace foss::model
