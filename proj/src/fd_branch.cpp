#include "foss/fd_branch.hpp"

#include "foss/ops.hpp"
#include "foss/spectral.hpp"

namespace foss::fd {

void FDBranchConfig::validate() const {
  if (d_model == 0 || seq_len == 0 || state_size == 0 || generator_hidden == 0) {
    throw ConfigError("fd branch: sizes must be >= 1");
  }
  if (dwconv_width % 2 == 0 || conv_width % 2 == 0) throw ConfigError("fd branch: conv widths must be odd");
}

namespace {

ssm::SelectiveSSMConfig scan_config(const FDBranchConfig& c, std::size_t width) {
  ssm::SelectiveSSMConfig s;
  s.state_size = c.state_size;
  s.d_in = s.d_out = width;
  s.conv_width = c.conv_width;
  s.generator_hidden = c.generator_hidden;
  s.norm = c.state_norm;
  return s;
}

}  // namespace

Tensor Coarse2FineSSM::Stack::forward(Tape& tape, const Tensor& x) const {
  Tensor y = ops::silu(conv.forward(tape, x));
  y = scan->forward(tape, y);
  return norm.forward(tape, y);
}

Coarse2FineSSM::Coarse2FineSSM(const std::string& name, const FDBranchConfig& config, SplitMix64& rng,
                               DType dtype)
    : config_(config),
      perm_(config.identity_helix ? helix::HelixPermutation::identity(config.seq_len)
                                  : helix::build_helix_permutation(config.seq_len)) {
  const std::size_t C = config.d_model;
  auto make = [&](const std::string& n, std::size_t width) {
    Stack s;
    s.conv = layers::DepthwiseSeparableConv(n + ".dwconv", width, config.dwconv_width, rng, dtype);
    s.scan = std::make_unique<ssm::SelectiveSSM>(n + ".ssm", scan_config(config, width), rng, dtype);
    s.norm = layers::LayerNorm(n + ".norm", width, dtype);
    return s;
  };
  if (config.separate_stream_stacks) {
    stacks_.push_back(make(name + ".amplitude", C));
    stacks_.push_back(make(name + ".phase", C));
  } else {
    stacks_.push_back(make(name + ".stack", 2 * C));
  }
}

Tensor Coarse2FineSSM::forward(Tape& tape, const Tensor& f_l) const {
  if (f_l.rank() != 2 || f_l.dim(0) != config_.seq_len || f_l.dim(1) != config_.d_model) {
    throw DimensionError("coarse2fine: expected [" + std::to_string(config_.seq_len) + "x" +
                         std::to_string(config_.d_model) + "], got " + to_string(f_l.shape()));
  }
  const std::size_t C = config_.d_model;
  const auto polar = spectral::to_polar(spectral::dft_forward(f_l));
  Tensor amp = helix::apply(perm_, polar.amplitude);
  Tensor phase = helix::apply(perm_, polar.phase);
  if (!config_.identity_processing) {
    if (stacks_.size() == 2) {
      amp = stacks_[0].forward(tape, amp);
      phase = stacks_[1].forward(tape, phase);
    } else {
      const Tensor both = stacks_[0].forward(tape, ops::concat(amp, phase, 1));
      amp = ops::slice(both, 1, 0, C);
      phase = ops::slice(both, 1, C, 2 * C);
    }
  }
  amp = helix::invert_apply(perm_, amp);
  phase = helix::invert_apply(perm_, phase);
  const Tensor restored =
      spectral::dft_inverse(spectral::from_polar({amp, phase}), spectral::InverseCheck::real_part);
  return ops::mul(restored, ops::silu(f_l));
}

void Coarse2FineSSM::collect(ParameterList& out) {
  if (config_.identity_processing) return;
  for (auto& s : stacks_) {
    s.conv.collect(out);
    s.scan->collect(out);
    s.norm.collect(out);
  }
}

SpecEvolveSSM::SpecEvolveSSM(const std::string& name, const FDBranchConfig& config, SplitMix64& rng,
                             DType dtype)
    : config_(config), scan_(std::make_unique<ssm::SelectiveSSM>(name + ".ssm", scan_config(config, 2), rng, dtype)) {}

Tensor SpecEvolveSSM::forward(Tape& tape, const Tensor& f_in) const {
  if (f_in.rank() != 2) throw DimensionError("specevolve: expected [L x C], got " + to_string(f_in.shape()));
  const Tensor pooled = ops::mean_rows(f_in);           // F_g [1 x C]
  const Tensor channels = ops::transpose(pooled);       // [C x 1]
  const auto spectrum = spectral::dft_forward(channels);
  const auto polar = spectral::to_polar(spectrum);
  const auto scan_order = helix::channel_scan_order(spectrum);
  Tensor amp = ops::gather_rows(polar.amplitude, scan_order.order);
  Tensor phase = ops::gather_rows(polar.phase, scan_order.order);
  if (!config_.identity_processing && !config_.specevolve_prose_mode) {
    const Tensor y = scan_->forward(tape, ops::concat(amp, phase, 1));
    amp = ops::slice(y, 1, 0, 1);
    phase = ops::slice(y, 1, 1, 2);
  }
  const auto inverse = scan_order.inverse();
  amp = ops::gather_rows(amp, inverse);
  phase = ops::gather_rows(phase, inverse);
  const Tensor processed = ops::transpose(
      spectral::dft_inverse(spectral::from_polar({amp, phase}), spectral::InverseCheck::real_part));
  const Tensor gate = ops::mul(processed, ops::silu(pooled));  // F_a [1 x C]
  return ops::mul(f_in, gate);
}

void SpecEvolveSSM::collect(ParameterList& out) {
  if (config_.identity_processing || config_.specevolve_prose_mode) return;
  scan_->collect(out);
}

FDBranch::FDBranch(const std::string& name, const FDBranchConfig& config, SplitMix64& rng, DType dtype)
    : config_((config.validate(), config)),
      input_norm_(name + ".input_norm", config.d_model, dtype),
      coarse_(name + ".coarse2fine", config, rng, dtype),
      evolve_(name + ".specevolve", config, rng, dtype),
      projection_(name + ".projection", 2 * config.d_model, config.d_model, rng, dtype) {}

FDFeatures FDBranch::features(Tape& tape, const Tensor& x_embedded) const {
  FDFeatures f;
  const Tensor f_l = input_norm_.forward(tape, x_embedded);
  f.F_f = coarse_.forward(tape, f_l);
  f.F_enhance = evolve_.forward(tape, f_l);
  f.F_freq = projection_.forward(tape, ops::concat(f.F_f, f.F_enhance, 1));
  return f;
}

void FDBranch::collect(ParameterList& out) {
  input_norm_.collect(out);
  coarse_.collect(out);
  evolve_.collect(out);
  projection_.collect(out);
}

}  // namespace foss::fd
