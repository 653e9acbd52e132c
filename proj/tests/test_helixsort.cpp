#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <tuple>
#include <vector>

#include "foss/errors.hpp"
#include "foss/helixsort.hpp"
#include "foss/ops.hpp"
#include "foss/rng.hpp"

using namespace foss;

namespace {

struct Cell {
  double r;
  std::size_t u, v, index;
};

// Builds the shifted grid explicitly and stable-sorts (r, u, v).
std::vector<Cell> brute_force(std::size_t T) {
  std::size_t G = 1;
  while (G * G < T) ++G;
  const std::size_t c = G / 2;
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t u = (i / G + c) % G, v = (i % G + c) % G;
    const double du = static_cast<double>(u) - static_cast<double>(c);
    const double dv = static_cast<double>(v) - static_cast<double>(c);
    cells.push_back({std::sqrt(du * du + dv * dv), u, v, i});
  }
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& a, const Cell& b) { return std::tie(a.r, a.u, a.v) < std::tie(b.r, b.u, b.v); });
  return cells;
}

Tensor iota(std::size_t T, std::size_t d) {
  std::vector<double> v(T * d);
  std::iota(v.begin(), v.end(), 0.0);
  return Tensor::from({T, d}, v);
}

}  // namespace

TEST_CASE("T=16 matches the brute-force oracle") {
  const auto perm = helix::build_helix_permutation(16);
  const auto ref = brute_force(16);
  for (std::size_t s = 0; s < 16; ++s) {
    CHECK(perm.pi[s] == ref[s].index);
    CHECK(perm.radii[s] == ref[s].r);
  }
  const std::vector<std::size_t> frozen{0, 12, 3, 1, 4, 15, 13, 7, 5, 8, 2, 11, 9, 14, 6, 10};
  CHECK(perm.pi == frozen);
  CHECK(perm.grid == 4);
  CHECK(perm.center_row == 2);
  CHECK(perm.center_col == 2);
}

TEST_CASE("small lengths match the oracle") {
  for (std::size_t T = 1; T <= 200; ++T) {
    const auto perm = helix::build_helix_permutation(T);
    const auto ref = brute_force(T);
    REQUIRE(perm.pi.size() == T);
    for (std::size_t s = 0; s < T; ++s) CHECK(perm.pi[s] == ref[s].index);
  }
  const auto one = helix::build_helix_permutation(1);
  CHECK(one.pi == std::vector<std::size_t>{0});
  CHECK(one.radii == std::vector<double>{0.0});
  CHECK(helix::build_helix_permutation(5).pi == std::vector<std::size_t>{0, 2, 1, 3, 4});
}

TEST_CASE("bijection, DC first, monotone radii for T up to 256") {
  for (std::size_t T = 1; T <= 256; ++T) {
    const auto perm = helix::build_helix_permutation(T);
    std::vector<std::size_t> sorted = perm.pi;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expect(T);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(sorted == expect);
    CHECK(perm.pi[0] == 0);
    CHECK(perm.radii[0] == 0.0);
    CHECK(std::is_sorted(perm.radii.begin(), perm.radii.end()));
    for (std::size_t s = 0; s < T; ++s) CHECK(perm.pi_inv[perm.pi[s]] == s);
  }
}

TEST_CASE("apply and invert_apply") {
  const auto perm = helix::build_helix_permutation(20);
  const auto x = iota(20, 3);
  const auto y = helix::apply(perm, x);
  for (std::size_t s = 0; s < 20; ++s)
    for (std::size_t j = 0; j < 3; ++j) CHECK(y.at(s, j) == x.at(perm.pi[s], j));
  const auto back = helix::invert_apply(perm, y);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back[i] == x[i]);

  std::vector<double> hot(20, 0.0);
  hot[perm.pi[3]] = 1.0;
  const auto moved = helix::apply(perm, Tensor::from({20, 1}, hot));
  for (std::size_t s = 0; s < 20; ++s) CHECK(moved[s] == (s == 3 ? 1.0 : 0.0));
  std::vector<double> hot3(20, 0.0);
  hot3[3] = 1.0;
  const auto restored = helix::invert_apply(perm, Tensor::from({20, 1}, hot3));
  for (std::size_t i = 0; i < 20; ++i) CHECK(restored[i] == (i == perm.pi[3] ? 1.0 : 0.0));

  const auto id = helix::HelixPermutation::identity(20);
  const auto same = helix::apply(id, x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);
  CHECK(helix::invert_apply(id, x).data()[7] == x[7]);

  CHECK_THROWS_AS(helix::apply(perm, iota(19, 3)), DimensionError);
  CHECK_THROWS_AS(helix::invert_apply(perm, iota(21, 1)), DimensionError);
}

TEST_CASE("gradient scatters back through the permutation") {
  const auto perm = helix::build_helix_permutation(9);
  Tape tape;
  const auto x = tape.watch(iota(9, 1));
  std::vector<double> w(9);
  std::iota(w.begin(), w.end(), 1.0);
  tape.backward(ops::sum(ops::mul(helix::apply(perm, x), Tensor::from({9, 1}, w))));
  for (std::size_t s = 0; s < 9; ++s) CHECK(x.grad()[perm.pi[s]] == w[s]);
}

TEST_CASE("channel scan order") {
  auto seq = [](std::vector<double> re, std::vector<double> im) {
    const std::size_t C = re.size();
    return spectral::ComplexSeq{Tensor::from({C, 1}, std::move(re)), Tensor::from({C, 1}, std::move(im))};
  };
  const auto a = helix::channel_scan_order(seq({3.0, 1.0, 2.0}, {0.0, 0.0, 0.0}));
  CHECK(a.order == std::vector<std::size_t>{1, 2, 0});
  CHECK(a.key == std::vector<double>{3.0, 1.0, 2.0});
  CHECK(a.inverse() == std::vector<std::size_t>{2, 0, 1});

  const auto tie = helix::channel_scan_order(seq({0.6, 0.0, -1.0, 0.8}, {0.8, 1.0, 0.0, -0.6}));
  CHECK(tie.order == std::vector<std::size_t>{0, 1, 2, 3});

  SplitMix64 rng(5);
  std::vector<double> re(32), im(32);
  for (std::size_t i = 0; i < 32; ++i) {
    re[i] = rng.uniform(-1.0, 1.0);
    im[i] = rng.uniform(-1.0, 1.0);
  }
  const auto r = helix::channel_scan_order(seq(re, im));
  std::vector<std::size_t> ref(32);
  std::iota(ref.begin(), ref.end(), 0);
  std::stable_sort(ref.begin(), ref.end(), [&](std::size_t x, std::size_t y) {
    return std::hypot(re[x], im[x]) < std::hypot(re[y], im[y]);
  });
  CHECK(r.order == ref);
}

TEST_CASE("construction scales linearly") {
  auto median_time = [](std::size_t T) {
    std::vector<double> t;
    for (int rep = 0; rep < 7; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      const auto perm = helix::build_helix_permutation(T);
      t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      CHECK(perm.pi.size() == T);
    }
    std::sort(t.begin(), t.end());
    return t[3];
  };
  CHECK(median_time(65536) / median_time(1024) < 100.0);
  CHECK(helix::kParameterCount == 0);
}
