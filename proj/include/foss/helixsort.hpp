#pragma once

#include <cstddef>
#include <vector>

#include "foss/spectral.hpp"
#include "foss/tensor.hpp"

namespace foss::helix {

/// Spiral ordering of T frequency slots.
///
/// The indices 0..T-1 are laid out row-major on a G x G grid (G = ceil(sqrt T)),
/// the grid is circularly shifted by floor(G/2) along both axes so that index
/// 0 (DC) sits at the center cell, and the occupied cells are enumerated by
/// ascending distance from the center with row-then-column tie-break. Padding
/// cells carry no index and are skipped, so the ordering has exactly T entries.
struct HelixPermutation {
  std::size_t length = 0;
  std::size_t grid = 0;
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  /// pi[s]: original frequency index placed at output position s.
  std::vector<std::size_t> pi;
  std::vector<std::size_t> pi_inv;
  /// Spectral radius of each output position; non-decreasing.
  std::vector<double> radii;

  static HelixPermutation identity(std::size_t T);
};

/// O(T) construction (bucketed by integer squared radius).
HelixPermutation build_helix_permutation(std::size_t T);

/// out[s] = seq[pi[s]]
Tensor apply(const HelixPermutation& perm, const Tensor& seq);
/// out[pi[s]] = seq[s]
Tensor invert_apply(const HelixPermutation& perm, const Tensor& seq);

/// HelixSort holds no learnable state.
inline constexpr std::size_t kParameterCount = 0;

/// Data-dependent channel ordering by ascending spectral magnitude.
struct ChannelScanOrder {
  std::size_t channels = 0;
  std::vector<std::size_t> order;
  /// Magnitude of each channel, in original channel order.
  std::vector<double> key;

  std::vector<std::size_t> inverse() const;
};

/// Sorts the C positions of a [C x 1] (or [C x d], keyed on the row norm)
/// spectrum by ascending sqrt(re^2 + im^2); equal keys keep original order.
/// The order is a constant for differentiation.
ChannelScanOrder channel_scan_order(const spectral::ComplexSeq& spectrum);

}  // namespace foss::helix
