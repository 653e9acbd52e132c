#include "foss/layers.hpp"

#include <cmath>

namespace foss::layers {
namespace {

Tensor uniform_tensor(Shape shape, double bound, SplitMix64& rng, DType dtype) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), dtype);
}

}  // namespace

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, SplitMix64& rng, DType dtype,
               bool bias)
    : weight_(name + ".weight",
              uniform_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng, dtype)),
      bias_(name + ".bias", Tensor::zeros({out}, dtype)),
      has_bias_(bias) {}

Tensor Linear::forward(Tape& tape, const Tensor& x) const {
  Tensor y = ops::matmul(x, tape.leaf(weight_));
  if (has_bias_) y = ops::add(y, tape.leaf(bias_));
  return y;
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

LayerNorm::LayerNorm(const std::string& name, std::size_t dim, DType dtype, double eps)
    : gamma_(name + ".gamma", Tensor::full({dim}, 1.0, dtype)),
      beta_(name + ".beta", Tensor::zeros({dim}, dtype)),
      eps_(eps) {}

Tensor LayerNorm::forward(Tape& tape, const Tensor& x) const {
  return ops::layer_norm(x, tape.leaf(gamma_), tape.leaf(beta_), eps_);
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

Mlp::Mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, SplitMix64& rng,
         DType dtype)
    : first_(name + ".0", in, hidden, rng, dtype), second_(name + ".1", hidden, out, rng, dtype) {}

Tensor Mlp::forward(Tape& tape, const Tensor& x) const {
  return second_.forward(tape, ops::silu(first_.forward(tape, x)));
}

void Mlp::collect(ParameterList& out) {
  first_.collect(out);
  second_.collect(out);
}

DepthwiseSeparableConv::DepthwiseSeparableConv(const std::string& name, std::size_t channels,
                                               std::size_t width, SplitMix64& rng, DType dtype)
    : kernel_(name + ".depthwise.kernel",
              uniform_tensor({channels, width}, 1.0 / std::sqrt(static_cast<double>(width)), rng, dtype)),
      bias_(name + ".depthwise.bias", Tensor::zeros({channels}, dtype)),
      pointwise_(name + ".pointwise", channels, channels, rng, dtype) {
  if (width % 2 == 0) throw ConfigError(name + ": kernel width must be odd");
}

Tensor DepthwiseSeparableConv::forward(Tape& tape, const Tensor& x) const {
  Tensor y = ops::conv1d(x, tape.leaf(kernel_), ops::ConvMode::depthwise);
  y = ops::add(y, tape.leaf(bias_));
  return pointwise_.forward(tape, y);
}

void DepthwiseSeparableConv::collect(ParameterList& out) {
  out.push_back(&kernel_);
  out.push_back(&bias_);
  pointwise_.collect(out);
}

Attention::Attention(const std::string& name, std::size_t query_dim, std::size_t kv_dim, std::size_t width,
                     std::size_t heads, SplitMix64& rng, DType dtype)
    : wq_(name + ".wq", query_dim, width, rng, dtype, false),
      wk_(name + ".wk", kv_dim, width, rng, dtype, false),
      wv_(name + ".wv", kv_dim, width, rng, dtype, false),
      heads_(heads) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError(name + ": width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = ops::scale(ops::matmul(q, ops::transpose(k)), scale);
  return ops::matmul(ops::softmax(scores, 1), v);
}

Tensor Attention::forward(Tape& tape, const Tensor& query, const Tensor& context) const {
  Tensor q = wq_.forward(tape, query);
  Tensor k = wk_.forward(tape, context);
  Tensor v = wv_.forward(tape, context);
  if (heads_ == 1) return attend(q, k, v);
  const std::size_t hw = q.dim(1) / heads_;
  Tensor out;
  for (std::size_t h = 0; h < heads_; ++h) {
    Tensor part = attend(ops::slice(q, 1, h * hw, (h + 1) * hw), ops::slice(k, 1, h * hw, (h + 1) * hw),
                         ops::slice(v, 1, h * hw, (h + 1) * hw));
    out = out.defined() ? ops::concat(out, part, 1) : part;
  }
  return out;
}

void Attention::collect(ParameterList& out) {
  wq_.collect(out);
  wk_.collect(out);
  wv_.collect(out);
}

}  // namespace foss::layers
