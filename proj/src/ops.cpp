#include "foss/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace foss::ops {
namespace {

using detail::Node;

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(x.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Offset into an operand of shape `in` for every element of the broadcast
// output shape `out` (in row-major order of `out`).
std::vector<std::size_t> broadcast_offsets(const Shape& out, const Shape& in) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t axis_in = in.size() - 1 - k;
    const std::size_t axis_out = rank - 1 - k;
    stride[axis_out] = in[axis_in] == 1 ? 0 : s;
    s *= in[axis_in];
  }
  const std::size_t n = numel(out);
  std::vector<std::size_t> offsets(n);
  // Common case: `in` is a trailing block of `out` (bias rows, scalars).
  std::size_t lead = 0;
  while (lead < rank && stride[lead] == 0) ++lead;
  bool suffix = true;
  for (std::size_t a = lead; a < rank && suffix; ++a) suffix = a >= rank - in.size() && in[a - (rank - in.size())] == out[a];
  if (suffix) {
    const std::size_t block = std::max<std::size_t>(numel(in), 1);
    for (std::size_t i = 0; i < n; ++i) offsets[i] = i % block;
    return offsets;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    offsets[i] = off;
    for (std::size_t a = rank; a-- > 0;) {
      ++idx[a];
      off += stride[a];
      if (idx[a] < out[a]) break;
      off -= stride[a] * idx[a];
      idx[a] = 0;
    }
  }
  return offsets;
}

// Fixed four-lane split so the reduction vectorizes without reassociation
// flags; the summation order is the same on every run.
double dot(const double* x, const double* y, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    for (std::size_t l = 0; l < 4; ++l) lane[l] += x[j + l] * y[j + l];
  }
  for (; j < n; ++j) lane[0] += x[j] * y[j];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " +
                         to_string(b.shape()));
  }
  const DType dtype = common_dtype({&a, &b});
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, dtype, std::move(out), {a, b}, [m, k, n](Node& o) {
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    const auto& g = o.grad;
    if (na.differentiable()) {
      auto& ga = na.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          ga[i * k + p] += dot(g.data() + i * n, nb.value.data() + p * n, n);
        }
    }
    if (nb.differentiable()) {
      auto& gb = nb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = na.value[i * k + p];
          const double* grow = g.data() + i * n;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
    }
  });
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[rank - 1 - k] = std::max(da, db);
  }
  return out;
}

Tensor ew(EwOp op, const Tensor& a, const Tensor& b) {
  const DType dtype = common_dtype({&a, &b});
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = numel(out_shape);
  const bool same = a.shape() == b.shape();
  std::vector<std::size_t> oa, ob;
  if (!same) {
    oa = broadcast_offsets(out_shape, a.shape());
    ob = broadcast_offsets(out_shape, b.shape());
  }
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = A[same ? i : oa[i]];
    const double y = B[same ? i : ob[i]];
    switch (op) {
      case EwOp::add: out[i] = x + y; break;
      case EwOp::sub: out[i] = x - y; break;
      case EwOp::mul: out[i] = x * y; break;
    }
  }
  return make_result(std::move(out_shape), dtype, std::move(out), {a, b},
                     [op, same, n, oa = std::move(oa), ob = std::move(ob)](Node& o) {
                       Node& na = *o.inputs[0];
                       Node& nb = *o.inputs[1];
                       const auto& g = o.grad;
                       if (na.differentiable()) {
                         auto& ga = na.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t ia = same ? i : oa[i];
                           const double d = op == EwOp::mul ? nb.value[same ? i : ob[i]] : 1.0;
                           ga[ia] += g[i] * d;
                         }
                       }
                       if (nb.differentiable()) {
                         auto& gb = nb.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t ib = same ? i : ob[i];
                           double d = 1.0;
                           if (op == EwOp::sub) d = -1.0;
                           if (op == EwOp::mul) d = na.value[same ? i : oa[i]];
                           gb[ib] += g[i] * d;
                         }
                       }
                     });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), x.dtype(), std::move(out), {x}, [factor](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += factor * o.grad[i];
  });
}

Tensor add_scalar(const Tensor& x, double offset) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v += offset;
  return make_result(x.shape(), x.dtype(), std::move(out), {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += o.grad[i];
  });
}

Tensor silu(const Tensor& x) {
  const auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] * stable_sigmoid(X[i]);
  return make_result(x.shape(), x.dtype(), std::move(out), {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i) {
      const double v = in.value[i];
      const double s = stable_sigmoid(v);
      gi[i] += o.grad[i] * s * (1.0 + v * (1.0 - s));
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = stable_sigmoid(X[i]);
  return make_result(x.shape(), x.dtype(), std::move(out), {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i) {
      const double s = o.value[i];
      gi[i] += o.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor abs(const Tensor& x) {
  const auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::fabs(X[i]);
  return make_result(x.shape(), x.dtype(), std::move(out), {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i) {
      const double v = in.value[i];
      gi[i] += o.grad[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({}, x.dtype(), {acc}, {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (auto& v : gi) v += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (rows == 0) throw DimensionError("mean_rows: empty first axis");
  const auto X = x.data();
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += X[r * cols + c];
  for (auto& v : out) v /= static_cast<double>(rows);
  return make_result({1, cols}, x.dtype(), std::move(out), {x}, [rows, cols](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gi[r * cols + c] += o.grad[c] * inv;
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: gamma/beta " + to_string(gamma.shape()) + "/" +
                         to_string(beta.shape()) + " do not match last axis of " +
                         to_string(x.shape()));
  }
  const DType dtype = common_dtype({&x, &gamma, &beta});
  const std::size_t rows = x.numel() / d;
  const auto X = x.data();
  const auto G = gamma.data();
  const auto Bt = beta.data();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = X.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = G[j] * h + Bt[j];
    }
  }
  return make_result(x.shape(), dtype, std::move(out), {x, gamma, beta},
                     [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
                       Node& nx = *o.inputs[0];
                       Node& ng = *o.inputs[1];
                       Node& nbeta = *o.inputs[2];
                       const auto& g = o.grad;
                       if (ng.differentiable()) {
                         auto& gg = ng.grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
                       }
                       if (nbeta.differentiable()) {
                         auto& gb = nbeta.grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                       }
                       if (nx.differentiable()) {
                         auto& gx = nx.grad_buffer();
                         const double inv_d = 1.0 / static_cast<double>(d);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double m1 = 0.0, m2 = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gh = g[r * d + j] * ng.value[j];
                             m1 += gh;
                             m2 += gh * xhat[r * d + j];
                           }
                           m1 *= inv_d;
                           m2 *= inv_d;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gh = g[r * d + j] * ng.value[j];
                             gx[r * d + j] += inv_std[r] * (gh - m1 - xhat[r * d + j] * m2);
                           }
                         }
                       }
                     });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const std::size_t len = s[axis];
  const auto X = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, X[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(X[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  return make_result(s, x.dtype(), std::move(out), {x}, [outer, inner, len](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = a * len * inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += o.grad[base + k * inner] * o.value[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          gi[idx] += o.value[idx] * (o.grad[idx] - dot);
        }
      }
  });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, ConvMode mode) {
  require_rank(x, 2, "conv1d");
  const std::size_t T = x.dim(0), C = x.dim(1);
  const DType dtype = common_dtype({&x, &kernel});
  std::size_t w = 0, c_out = 0;
  if (mode == ConvMode::depthwise) {
    if (kernel.rank() != 2 || kernel.dim(0) != C) {
      throw DimensionError("conv1d depthwise: kernel " + to_string(kernel.shape()) +
                           " must be [C x w] for input " + to_string(x.shape()));
    }
    w = kernel.dim(1);
    c_out = C;
  } else {
    if (kernel.rank() != 3 || kernel.dim(1) != C) {
      throw DimensionError("conv1d standard: kernel " + to_string(kernel.shape()) +
                           " must be [C_out x C x w] for input " + to_string(x.shape()));
    }
    w = kernel.dim(2);
    c_out = kernel.dim(0);
  }
  if (w % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(w));
  const auto half = static_cast<std::ptrdiff_t>(w / 2);
  const auto X = x.data();
  const auto K = kernel.data();
  std::vector<double> out(T * c_out, 0.0);
  auto source = [&](std::size_t t, std::size_t j) -> std::ptrdiff_t {
    return static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - half;
  };
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < w; ++j) {
      const auto s = source(t, j);
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
      const double* xs = X.data() + static_cast<std::size_t>(s) * C;
      if (mode == ConvMode::depthwise) {
        for (std::size_t c = 0; c < C; ++c) out[t * C + c] += K[c * w + j] * xs[c];
      } else {
        for (std::size_t co = 0; co < c_out; ++co) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c) acc += K[(co * C + c) * w + j] * xs[c];
          out[t * c_out + co] += acc;
        }
      }
    }
  return make_result({T, c_out}, dtype, std::move(out), {x, kernel},
                     [T, C, w, c_out, half, mode](Node& o) {
                       Node& nx = *o.inputs[0];
                       Node& nk = *o.inputs[1];
                       const auto& g = o.grad;
                       const bool dx = nx.differentiable(), dk = nk.differentiable();
                       std::vector<double>* gx = dx ? &nx.grad_buffer() : nullptr;
                       std::vector<double>* gk = dk ? &nk.grad_buffer() : nullptr;
                       for (std::size_t t = 0; t < T; ++t)
                         for (std::size_t j = 0; j < w; ++j) {
                           const auto s = static_cast<std::ptrdiff_t>(t) +
                                          static_cast<std::ptrdiff_t>(j) - half;
                           if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
                           const std::size_t su = static_cast<std::size_t>(s);
                           if (mode == ConvMode::depthwise) {
                             for (std::size_t c = 0; c < C; ++c) {
                               const double go = g[t * C + c];
                               if (dx) (*gx)[su * C + c] += go * nk.value[c * w + j];
                               if (dk) (*gk)[c * w + j] += go * nx.value[su * C + c];
                             }
                           } else {
                             for (std::size_t co = 0; co < c_out; ++co) {
                               const double go = g[t * c_out + co];
                               for (std::size_t c = 0; c < C; ++c) {
                                 const std::size_t ki = (co * C + c) * w + j;
                                 if (dx) (*gx)[su * C + c] += go * nk.value[ki];
                                 if (dk) (*gk)[ki] += go * nx.value[su * C + c];
                               }
                             }
                           }
                         }
                     });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto X = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = X[i * c + j];
  return make_result({c, r}, x.dtype(), std::move(out), {x}, [r, c](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gi[i * c + j] += o.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), x.dtype(), std::move(out), {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += o.grad[i];
  });
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool ok = sa.size() == sb.size() && axis < sa.size();
  for (std::size_t k = 0; ok && k < sa.size(); ++k)
    if (k != axis && sa[k] != sb[k]) ok = false;
  if (!ok) {
    throw DimensionError("concat: cannot join " + to_string(sa) + " and " + to_string(sb) +
                         " along axis " + std::to_string(axis));
  }
  const DType dtype = common_dtype({&a, &b});
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= sa[k];
  for (std::size_t k = axis + 1; k < sa.size(); ++k) inner *= sa[k];
  const std::size_t ca = sa[axis] * inner, cb = sb[axis] * inner;
  Shape so = sa;
  so[axis] = sa[axis] + sb[axis];
  std::vector<double> out(outer * (ca + cb));
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(A.data() + o * ca, ca, out.data() + o * (ca + cb));
    std::copy_n(B.data() + o * cb, cb, out.data() + o * (ca + cb) + ca);
  }
  return make_result(std::move(so), dtype, std::move(out), {a, b}, [outer, ca, cb](Node& o) {
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    if (na.differentiable()) {
      auto& ga = na.grad_buffer();
      for (std::size_t r = 0; r < outer; ++r)
        for (std::size_t i = 0; i < ca; ++i) ga[r * ca + i] += o.grad[r * (ca + cb) + i];
    }
    if (nb.differentiable()) {
      auto& gb = nb.grad_buffer();
      for (std::size_t r = 0; r < outer; ++r)
        for (std::size_t i = 0; i < cb; ++i) gb[r * cb + i] += o.grad[r * (ca + cb) + ca + i];
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& s = x.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw DimensionError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") along axis " + std::to_string(axis) + " of " + to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= s[k];
  for (std::size_t k = axis + 1; k < s.size(); ++k) inner *= s[k];
  const std::size_t full = s[axis] * inner;
  const std::size_t part = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Shape so = s;
  so[axis] = end - begin;
  const auto X = x.data();
  std::vector<double> out(outer * part);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(X.data() + o * full + off, part, out.data() + o * part);
  return make_result(std::move(so), x.dtype(), std::move(out), {x}, [outer, full, part, off](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t r = 0; r < outer; ++r)
      for (std::size_t i = 0; i < part; ++i) gi[r * full + off + i] += o.grad[r * part + i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  if (x.rank() == 0) throw DimensionError("gather_rows: scalar input");
  const std::size_t rows = x.dim(0);
  const std::size_t width = rows == 0 ? 0 : x.numel() / rows;
  for (auto i : index) {
    if (i >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range for " +
                           to_string(x.shape()));
    }
  }
  Shape so = x.shape();
  so[0] = index.size();
  const auto X = x.data();
  std::vector<double> out(index.size() * width);
  for (std::size_t r = 0; r < index.size(); ++r)
    std::copy_n(X.data() + index[r] * width, width, out.data() + r * width);
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result(std::move(so), x.dtype(), std::move(out), {x}, [width, idx = std::move(idx)](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& gi = in.grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < width; ++c) gi[idx[r] * width + c] += o.grad[r * width + c];
  });
}

}  // namespace foss::ops
