#include "foss/model.hpp"

#include <cmath>

#include "foss/ops.hpp"
#include "foss/spectral.hpp"

namespace foss::model {

void FoSSConfig::validate() const {
  if (k == 0) throw ConfigError("K must be >= 1");
  if (t_obs == 0 || t_fut == 0) throw ConfigError("T_obs and T_fut must be >= 1");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (d_raw == 0 || d_model == 0 || state_size == 0 || generator_hidden == 0 || head_hidden == 0) {
    throw ConfigError("model widths must be >= 1");
  }
  if (heads == 0 || d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (!(coord_scale > 0.0)) throw ConfigError("coord_scale must be positive");
  if (conv_width % 2 == 0 || dwconv_width % 2 == 0) throw ConfigError("conv widths must be odd");
}

fd::FDBranchConfig FoSSConfig::fd_config() const {
  fd::FDBranchConfig c;
  c.d_model = d_model;
  c.seq_len = t_obs;
  c.state_size = state_size;
  c.generator_hidden = generator_hidden;
  c.conv_width = conv_width;
  c.dwconv_width = dwconv_width;
  c.state_norm = ablation.eq7_output_only ? ssm::StateNorm::output_only : ssm::StateNorm::feed_forward;
  c.identity_helix = ablation.identity_helix;
  c.identity_processing = ablation.identity_fourier_ssm;
  c.specevolve_prose_mode = ablation.specevolve_prose_mode;
  return c;
}

ssm::SelectiveSSMConfig FoSSConfig::td_config() const {
  ssm::SelectiveSSMConfig c;
  c.state_size = state_size;
  c.d_in = c.d_out = d_model;
  c.conv_width = conv_width;
  c.generator_hidden = generator_hidden;
  c.norm = ablation.eq7_output_only ? ssm::StateNorm::output_only : ssm::StateNorm::feed_forward;
  return c;
}

namespace {

SplitMix64& validated_rng(const FoSSConfig& config, SplitMix64& rng) {
  config.validate();
  return rng;
}

Tensor normal_tensor(Shape shape, double stddev, SplitMix64& rng, DType dtype) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v), dtype);
}

}  // namespace

FoSSModel::FoSSModel(const FoSSConfig& config) : config_(config) {
  SplitMix64 seed_rng(config.init_seed);
  SplitMix64& rng = validated_rng(config, seed_rng);
  const std::size_t C = config.d_model;
  const DType dt = config.dtype;
  embed_linear_ = layers::Linear("embed.linear", config.d_raw, C, rng, dt);
  embed_norm_ = layers::LayerNorm("embed.norm", C, dt);
  td_ = std::make_unique<ssm::SelectiveSSM>("td", config.td_config(), rng, dt);
  fd_ = std::make_unique<fd::FDBranch>("fd", config.fd_config(), rng, dt);
  fuse_attn_ = layers::Attention("fusion.attention", C, C, C, config.heads, rng, dt);
  fuse_norm_ = layers::LayerNorm("fusion.norm", C, dt);
  fuse_mlp_ = layers::Mlp("fusion.mlp", 2 * C, config.head_hidden, C, rng, dt);
  queries_ = Parameter("decoder.queries",
                       normal_tensor({config.k, C}, 1.0 / std::sqrt(static_cast<double>(C)), rng, dt));
  dec_attn_ = layers::Attention("decoder.attention", C, C, C, config.heads, rng, dt);
  traj_head_ = layers::Mlp("decoder.trajectory", C, config.head_hidden, 2 * config.t_fut, rng, dt);
  score_head_ = layers::Mlp("decoder.score", C, config.head_hidden, 1, rng, dt);
}

Tensor FoSSModel::embed(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != config_.d_raw) {
    throw DimensionError("embed: expected [T x " + std::to_string(config_.d_raw) + "], got " +
                         to_string(x.shape()));
  }
  const Tensor scaled = ops::scale(x, 1.0 / config_.coord_scale);
  return embed_norm_.forward(tape, embed_linear_.forward(tape, scaled));
}

Tensor FoSSModel::td_branch_forward(Tape& tape, const Tensor& e) const { return td_->forward(tape, e); }

Tensor FoSSModel::fd_branch_forward(Tape& tape, const Tensor& e) const { return fd_->forward(tape, e); }

Tensor FoSSModel::fuse(Tape& tape, const Tensor& y_time, const Tensor& f_freq) const {
  if (y_time.shape() != f_freq.shape()) {
    throw DimensionError("fuse: branch shapes differ: " + to_string(y_time.shape()) + " vs " +
                         to_string(f_freq.shape()));
  }
  return fuse_norm_.forward(tape, ops::add(y_time, fuse_attn_.forward(tape, y_time, f_freq)));
}

Tensor FoSSModel::fuse_concat_mlp(Tape& tape, const Tensor& y_time, const Tensor& f_freq) const {
  if (y_time.shape() != f_freq.shape()) {
    throw DimensionError("fuse_concat_mlp: branch shapes differ: " + to_string(y_time.shape()) + " vs " +
                         to_string(f_freq.shape()));
  }
  return fuse_mlp_.forward(tape, ops::concat(y_time, f_freq, 1));
}

CandidateSet FoSSModel::decode_candidates(Tape& tape, const Tensor& z) const {
  const Tensor attended = dec_attn_.forward(tape, tape.leaf(queries_), z);  // [K x C]
  Tensor traj = ops::scale(traj_head_.forward(tape, attended), config_.coord_scale);
  traj = ops::reshape(traj, {config_.k, config_.t_fut, 2});
  const Tensor logits = ops::reshape(score_head_.forward(tape, attended), {config_.k});
  return {traj, ops::softmax(logits, 0)};
}

Prediction FoSSModel::forward(Tape& tape, const Tensor& x) const {
  const Tensor e = embed(tape, x);
  const Tensor y_time = td_branch_forward(tape, e);
  const Tensor f_freq =
      config_.ablation.disable_fd_branch ? Tensor::zeros(y_time.shape(), y_time.dtype()) : fd_branch_forward(tape, e);
  const Tensor z =
      config_.ablation.concat_mlp_fusion ? fuse_concat_mlp(tape, y_time, f_freq) : fuse(tape, y_time, f_freq);
  Prediction p;
  p.candidates = decode_candidates(tape, z);
  p.final_trajectory = fuse_candidates(p.candidates);
  return p;
}

ParameterList FoSSModel::parameters() {
  ParameterList out;
  embed_linear_.collect(out);
  embed_norm_.collect(out);
  td_->collect(out);
  // Every submodule is constructed (so shared weights initialize identically
  // across variants) but only the ones on the configured path are listed.
  if (!config_.ablation.disable_fd_branch) fd_->collect(out);
  if (config_.ablation.concat_mlp_fusion) {
    fuse_mlp_.collect(out);
  } else {
    fuse_attn_.collect(out);
    fuse_norm_.collect(out);
  }
  out.push_back(&queries_);
  dec_attn_.collect(out);
  traj_head_.collect(out);
  score_head_.collect(out);
  return out;
}

std::size_t FoSSModel::param_count() { return count_scalars(parameters()); }

std::size_t param_count(FoSSModel& model) { return model.param_count(); }

Tensor fuse_candidates(const CandidateSet& candidates) {
  const auto& traj = candidates.trajectories;
  if (traj.rank() != 3 || traj.dim(2) != 2 || candidates.probabilities.numel() != traj.dim(0)) {
    throw DimensionError("fuse_candidates: expected [K x T x 2] with K probabilities, got " +
                         to_string(traj.shape()) + " and " + to_string(candidates.probabilities.shape()));
  }
  const std::size_t K = traj.dim(0), T = traj.dim(1);
  const Tensor weights = ops::reshape(candidates.probabilities, {1, K});
  const Tensor flat = ops::reshape(traj, {K, 2 * T});
  return ops::reshape(ops::matmul(weights, flat), {T, 2});
}

LossBreakdown loss(const Tensor& prediction, const Tensor& truth, double lambda) {
  if (prediction.shape() != truth.shape() || prediction.rank() != 2) {
    throw DimensionError("loss: prediction " + to_string(prediction.shape()) + " vs truth " +
                         to_string(truth.shape()));
  }
  const Tensor l_time = ops::mean(ops::abs(ops::sub(prediction, truth)));
  const auto fp = spectral::dft_forward(prediction);
  const auto ft = spectral::dft_forward(truth);
  const double coeffs = static_cast<double>(prediction.numel());
  const Tensor l_freq =
      ops::scale(ops::add(ops::sum(ops::abs(ops::sub(fp.re, ft.re))), ops::sum(ops::abs(ops::sub(fp.im, ft.im)))),
                 1.0 / coeffs);
  LossBreakdown out;
  out.total = ops::add(l_time, ops::scale(l_freq, lambda));
  out.l_time = l_time.item();
  out.l_freq = l_freq.item();
  out.l_total = out.total.item();
  return out;
}

}  // namespace foss::model
