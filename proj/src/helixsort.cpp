#include "foss/helixsort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "foss/ops.hpp"

namespace foss::helix {

HelixPermutation HelixPermutation::identity(std::size_t T) {
  HelixPermutation p;
  p.length = T;
  p.grid = 0;
  p.pi.resize(T);
  std::iota(p.pi.begin(), p.pi.end(), std::size_t{0});
  p.pi_inv = p.pi;
  p.radii.assign(T, 0.0);
  return p;
}

HelixPermutation build_helix_permutation(std::size_t T) {
  if (T == 0) throw ConfigError("build_helix_permutation: T must be >= 1");
  std::size_t G = static_cast<std::size_t>(std::sqrt(static_cast<double>(T)));
  while (G * G < T) ++G;
  while (G > 1 && (G - 1) * (G - 1) >= T) --G;
  const std::size_t shift = G / 2;

  // Cell (u, v) of the shifted grid holds original index row * G + col with
  // row = (u - shift) mod G, col = (v - shift) mod G; indices >= T are padding.
  // |u - shift| <= shift since shift = floor(G/2).
  const std::size_t max_r2 = 2 * shift * shift;
  auto for_each_cell = [&](auto&& fn) {
    for (std::size_t u = 0; u < G; ++u) {
      const std::size_t row = u >= shift ? u - shift : u + G - shift;
      const std::size_t du = u >= shift ? u - shift : shift - u;
      std::size_t col = G - shift;
      if (col == G) col = 0;
      for (std::size_t v = 0; v < G; ++v) {
        const std::size_t idx = row * G + col;
        if (idx < T) {
          const std::size_t dv = v >= shift ? v - shift : shift - v;
          fn(idx, du * du + dv * dv);
        }
        if (++col == G) col = 0;
      }
    }
  };

  // Counting sort on integer squared radius; row-major traversal keeps the
  // (row, col) tie-break within a bucket.
  std::vector<std::uint32_t> start(max_r2 + 1, 0);
  for_each_cell([&](std::size_t, std::size_t r2) { ++start[r2]; });
  std::uint32_t acc = 0;
  for (auto& c : start) {
    const std::uint32_t n = c;
    c = acc;
    acc += n;
  }

  HelixPermutation p;
  p.length = T;
  p.grid = G;
  p.center_row = p.center_col = shift;
  p.pi.assign(T, 0);
  p.pi_inv.assign(T, 0);
  // Only pi is written out of order; pi_inv follows the traversal and radii
  // are filled per bucket afterwards.
  for_each_cell([&](std::size_t idx, std::size_t r2) {
    const std::uint32_t pos = start[r2]++;
    p.pi[pos] = idx;
    p.pi_inv[idx] = pos;
  });
  // start[r2] now holds the end of bucket r2.
  p.radii.resize(T);
  std::uint32_t begin = 0;
  for (std::size_t r2 = 0; r2 <= max_r2; ++r2) {
    const double r = std::sqrt(static_cast<double>(r2));
    std::fill(p.radii.begin() + begin, p.radii.begin() + start[r2], r);
    begin = start[r2];
  }
  return p;
}

namespace {
void require_length(const HelixPermutation& perm, const Tensor& seq, const char* op) {
  if (seq.rank() == 0 || seq.dim(0) != perm.length) {
    throw DimensionError(std::string(op) + ": sequence " + to_string(seq.shape()) +
                         " does not match permutation length " + std::to_string(perm.length));
  }
}
}  // namespace

Tensor apply(const HelixPermutation& perm, const Tensor& seq) {
  require_length(perm, seq, "helix::apply");
  return ops::gather_rows(seq, perm.pi);
}

Tensor invert_apply(const HelixPermutation& perm, const Tensor& seq) {
  require_length(perm, seq, "helix::invert_apply");
  return ops::gather_rows(seq, perm.pi_inv);
}

std::vector<std::size_t> ChannelScanOrder::inverse() const {
  std::vector<std::size_t> inv(order.size());
  for (std::size_t s = 0; s < order.size(); ++s) inv[order[s]] = s;
  return inv;
}

ChannelScanOrder channel_scan_order(const spectral::ComplexSeq& spectrum) {
  const auto& re = spectrum.re;
  const auto& im = spectrum.im;
  if (re.rank() != 2 || re.shape() != im.shape() || re.dim(0) == 0) {
    throw DimensionError("channel_scan_order: expected matching [C x d] components, got " +
                         to_string(re.shape()) + " and " + to_string(im.shape()));
  }
  const std::size_t C = re.dim(0), d = re.dim(1);
  ChannelScanOrder out;
  out.channels = C;
  out.key.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double a = re.data()[c * d + j], b = im.data()[c * d + j];
      s += a * a + b * b;
    }
    out.key[c] = std::sqrt(s);
  }
  out.order.resize(C);
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t a, std::size_t b) { return out.key[a] < out.key[b]; });
  return out;
}

}  // namespace foss::helix
