#pragma once

#include <cstddef>
#include <string>

#include "foss/ops.hpp"
#include "foss/rng.hpp"
#include "foss/tensor.hpp"

// Small trainable building blocks shared by the branches and heads.
namespace foss::layers {

/// Row-wise affine map x[N x in] -> x W + b, W [in x out].
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, SplitMix64& rng, DType dtype,
         bool bias = true);

  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect(ParameterList& out);

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  bool has_bias() const { return has_bias_; }
  std::size_t in() const { return weight_.shape()[0]; }
  std::size_t out() const { return weight_.shape()[1]; }

 private:
  Parameter weight_;
  Parameter bias_;
  bool has_bias_ = false;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim, DType dtype, double eps = 1e-5);

  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect(ParameterList& out);

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }

 private:
  Parameter gamma_;
  Parameter beta_;
  double eps_ = 1e-5;
};

/// Two-layer perceptron: Linear -> SiLU -> Linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, SplitMix64& rng,
      DType dtype);

  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect(ParameterList& out);

  Linear& first() { return first_; }
  Linear& second() { return second_; }

 private:
  Linear first_;
  Linear second_;
};

/// Depthwise conv (per-channel kernel + bias) followed by a pointwise linear
/// mix across channels. Same-length output.
class DepthwiseSeparableConv {
 public:
  DepthwiseSeparableConv() = default;
  DepthwiseSeparableConv(const std::string& name, std::size_t channels, std::size_t width,
                         SplitMix64& rng, DType dtype);

  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect(ParameterList& out);

 private:
  Parameter kernel_;
  Parameter bias_;
  Linear pointwise_;
};

/// Scaled dot-product attention with learned projections and no output
/// projection: heads split the key/value width evenly and are concatenated.
class Attention {
 public:
  Attention() = default;
  Attention(const std::string& name, std::size_t query_dim, std::size_t kv_dim, std::size_t width,
            std::size_t heads, SplitMix64& rng, DType dtype);

  /// query [Nq x query_dim], context [Nk x kv_dim] -> [Nq x width]
  Tensor forward(Tape& tape, const Tensor& query, const Tensor& context) const;
  void collect(ParameterList& out);

  Linear& wq() { return wq_; }
  Linear& wk() { return wk_; }
  Linear& wv() { return wv_; }
  std::size_t heads() const { return heads_; }

 private:
  Linear wq_, wk_, wv_;
  std::size_t heads_ = 1;
};

/// Scaled dot-product attention on already projected q [Nq x dk],
/// k [Nk x dk], v [Nk x dv].
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace foss::layers
