#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "foss/tensor.hpp"

// Differentiable tensor primitives. Every function records its adjoint on the
// operands' tape (if any) and raises DimensionError on incompatible shapes.
namespace foss::ops {

Tensor matmul(const Tensor& a, const Tensor& b);

enum class EwOp { add, sub, mul };

/// Element-wise binary op with numpy-style broadcasting (axes aligned from the
/// right, size-1 axes stretch). Adjoints are summed back over stretched axes.
Tensor ew(EwOp op, const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, const Tensor& b) { return ew(EwOp::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return ew(EwOp::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return ew(EwOp::mul, a, b); }

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over the first axis of a rank-2 tensor: [T x C] -> [1 x C].
Tensor mean_rows(const Tensor& x);

/// Normalizes over the last axis, then applies gamma/beta of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Max-shifted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

enum class ConvMode { standard, depthwise };

/// Same-length 1D convolution (cross-correlation) over the first axis of
/// x[T x C] with symmetric zero padding.
///   standard:  kernel [C_out x C x w]   -> [T x C_out]
///   depthwise: kernel [C x w]           -> [T x C]
/// out[t][c] = sum_j kernel[..][j] * x[t + j - w/2][..]. Width must be odd.
Tensor conv1d(const Tensor& x, const Tensor& kernel, ConvMode mode);

Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Concatenation of equal-rank tensors along `axis`.
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
/// out[i] = x[index[i]] along the first axis.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

}  // namespace foss::ops
