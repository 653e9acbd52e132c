#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <vector>

#include "foss/errors.hpp"
#include "foss/fd_branch.hpp"
#include "foss/gradcheck.hpp"
#include "foss/ops.hpp"
#include "foss/rng.hpp"

using namespace foss;
using cd = std::complex<double>;
using Grid = std::vector<std::vector<cd>>;  // [rows][cols]

namespace {

Tensor rand_t(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), DType::f64);
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

// Unitary DFT down each column.
Grid dft(const Grid& x, bool inverse) {
  const std::size_t T = x.size(), d = x[0].size();
  Grid out(T, std::vector<cd>(d));
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t w = 0; w < T; ++w)
    for (std::size_t c = 0; c < d; ++c) {
      cd s = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((t * w) % T) / static_cast<double>(T);
        s += x[t][c] * cd(std::cos(ang), std::sin(ang));
      }
      out[w][c] = s / std::sqrt(static_cast<double>(T));
    }
  return out;
}

Grid to_grid(const Tensor& t) {
  Grid g(t.dim(0), std::vector<cd>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) g[i][j] = t.at(i, j);
  return g;
}

double phase_of(cd z) {
  const double p = std::arg(z);
  return p == -std::numbers::pi ? std::numbers::pi : p;
}

void copy_values(const ParameterList& from, const ParameterList& to) {
  REQUIRE(from.size() == to.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    REQUIRE(from[i]->numel() == to[i]->numel());
    to[i]->assign(from[i]->value().data());
  }
}

template <typename M>
ParameterList params_of(M& m) {
  ParameterList out;
  m.collect(out);
  return out;
}

void randomize(const ParameterList& params, SplitMix64& rng) {
  for (Parameter* p : params) {
    std::vector<double> v(p->value().data().begin(), p->value().data().end());
    for (auto& x : v) x += rng.uniform(-0.3, 0.3);
    p->assign(v);
  }
}

fd::FDBranchConfig tiny(std::size_t L, std::size_t C) {
  fd::FDBranchConfig c;
  c.d_model = C;
  c.seq_len = L;
  c.state_size = 4;
  c.generator_hidden = 5;
  return c;
}

ssm::SelectiveSSMConfig scan_cfg(const fd::FDBranchConfig& c, std::size_t width) {
  ssm::SelectiveSSMConfig s;
  s.state_size = c.state_size;
  s.d_in = s.d_out = width;
  s.conv_width = c.conv_width;
  s.generator_hidden = c.generator_hidden;
  s.norm = c.state_norm;
  return s;
}

// Straight-line Coarse2Fine: DFT, polar, spiral reorder, conv -> SiLU ->
// scan -> LayerNorm on [amp | phase], restore order, Cartesian, inverse DFT,
// gate.
std::vector<double> coarse2fine_oracle(fd::Coarse2FineSSM& module, const fd::FDBranchConfig& cfg, const Tensor& f_l) {
  const std::size_t L = cfg.seq_len, C = cfg.d_model;
  SplitMix64 dummy(0);
  layers::DepthwiseSeparableConv conv("o.conv", 2 * C, cfg.dwconv_width, dummy, DType::f64);
  ssm::SelectiveSSM scan("o.ssm", scan_cfg(cfg, 2 * C), dummy, DType::f64);
  layers::LayerNorm norm("o.norm", 2 * C, DType::f64);
  ParameterList mine;
  conv.collect(mine);
  scan.collect(mine);
  norm.collect(mine);
  copy_values(params_of(module), mine);

  const Grid spec = dft(to_grid(f_l), false);
  const auto& pi = module.permutation().pi;
  std::vector<double> stacked(L * 2 * C);
  for (std::size_t s = 0; s < L; ++s)
    for (std::size_t c = 0; c < C; ++c) {
      stacked[s * 2 * C + c] = std::abs(spec[pi[s]][c]);
      stacked[s * 2 * C + C + c] = phase_of(spec[pi[s]][c]);
    }
  Tape tape(Tape::Mode::inference);
  Tensor y = ops::silu(conv.forward(tape, Tensor::from({L, 2 * C}, stacked, DType::f64)));
  y = norm.forward(tape, scan.forward(tape, y));

  Grid restored(L, std::vector<cd>(C));
  for (std::size_t s = 0; s < L; ++s)
    for (std::size_t c = 0; c < C; ++c) restored[pi[s]][c] = std::polar(y.at(s, c), y.at(s, C + c));
  const Grid back = dft(restored, true);
  std::vector<double> out(L * C);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < C; ++c) out[t * C + c] = back[t][c].real() * silu(f_l.at(t, c));
  return out;
}

// Straight-line SpecEvolve: pool, channel DFT, magnitude order, scan over
// (amp, phase), restore, Cartesian, inverse DFT, gate twice.
std::vector<double> specevolve_oracle(fd::SpecEvolveSSM& module, const fd::FDBranchConfig& cfg, const Tensor& f_in) {
  const std::size_t L = f_in.dim(0), C = f_in.dim(1);
  SplitMix64 dummy(0);
  ssm::SelectiveSSM scan("o.ssm", scan_cfg(cfg, 2), dummy, DType::f64);
  copy_values(params_of(module), params_of(scan));

  Grid g(C, std::vector<cd>(1));
  std::vector<double> pooled(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < L; ++t) pooled[c] += f_in.at(t, c);
    pooled[c] /= static_cast<double>(L);
    g[c][0] = pooled[c];
  }
  const Grid spec = dft(g, false);
  std::vector<std::size_t> order(C);
  std::iota(order.begin(), order.end(), 0);
  // A real channel vector has |F(c)| == |F(C - c)| exactly; key both on the
  // same coefficient so those ties fall back to channel index.
  auto key = [&](std::size_t c) { return std::abs(spec[std::min(c, (C - c) % C)][0]); };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<double> seq;
  for (std::size_t s = 0; s < C; ++s) {
    seq.push_back(std::abs(spec[order[s]][0]));
    seq.push_back(phase_of(spec[order[s]][0]));
  }
  Tape tape(Tape::Mode::inference);
  const Tensor y = scan.forward(tape, Tensor::from({C, 2}, seq, DType::f64));
  Grid restored(C, std::vector<cd>(1));
  for (std::size_t s = 0; s < C; ++s) restored[order[s]][0] = std::polar(y.at(s, 0), y.at(s, 1));
  const Grid back = dft(restored, true);
  std::vector<double> out(L * C);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < C; ++c) out[t * C + c] = f_in.at(t, c) * back[c][0].real() * silu(pooled[c]);
  return out;
}

}  // namespace

TEST_CASE("coarse2fine matches the scripted oracle") {
  SplitMix64 rng(31);
  for (int rep = 0; rep < 3; ++rep) {
    const auto cfg = tiny(9, 2);
    fd::Coarse2FineSSM module("c2f", cfg, rng, DType::f64);
    randomize(params_of(module), rng);
    const auto x = rand_t({9, 2}, rng);
    Tape tape(Tape::Mode::inference);
    const auto got = module.forward(tape, x);
    const auto ref = coarse2fine_oracle(module, cfg, x);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::fabs(got[i] - ref[i]) < 1e-10);
  }
}

TEST_CASE("specevolve matches the scripted oracle") {
  SplitMix64 rng(32);
  for (int rep = 0; rep < 3; ++rep) {
    const auto cfg = tiny(8, 8);
    fd::SpecEvolveSSM module("se", cfg, rng, DType::f64);
    randomize(params_of(module), rng);
    const auto x = rand_t({8, 8}, rng);
    Tape tape(Tape::Mode::inference);
    const auto got = module.forward(tape, x);
    const auto ref = specevolve_oracle(module, cfg, x);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::fabs(got[i] - ref[i]) < 1e-10);
  }
}

TEST_CASE("gating examples") {
  SplitMix64 rng(33);
  Tape tape(Tape::Mode::inference);

  SUBCASE("zero input annihilates both gates") {
    const auto cfg = tiny(9, 2);
    fd::Coarse2FineSSM c2f("c2f", cfg, rng, DType::f64);
    fd::SpecEvolveSSM se("se", cfg, rng, DType::f64);
    const auto f = c2f.forward(tape, Tensor::zeros({9, 2}));
    const auto e = se.forward(tape, Tensor::zeros({9, 2}));
    for (double v : f.data()) CHECK(v == 0.0);
    for (double v : e.data()) CHECK(v == 0.0);
  }

  SUBCASE("identity processing reduces to a gated roundtrip") {
    auto cfg = tiny(9, 3);
    cfg.identity_processing = true;
    fd::Coarse2FineSSM c2f("c2f", cfg, rng, DType::f64);
    fd::SpecEvolveSSM se("se", cfg, rng, DType::f64);
    const auto x = rand_t({9, 3}, rng);
    const auto f = c2f.forward(tape, x);
    const auto e = se.forward(tape, x);
    for (std::size_t t = 0; t < 9; ++t) {
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::fabs(f.at(t, c) - x.at(t, c) * silu(x.at(t, c))) < 1e-8);
        double g = 0.0;
        for (std::size_t s = 0; s < 9; ++s) g += x.at(s, c);
        g /= 9.0;
        CHECK(std::fabs(e.at(t, c) - x.at(t, c) * g * silu(g)) < 1e-8);
      }
    }
  }

  SUBCASE("prose mode bypasses the channel scan") {
    auto cfg = tiny(6, 4);
    cfg.specevolve_prose_mode = true;
    fd::SpecEvolveSSM se("se", cfg, rng, DType::f64);
    const auto x = rand_t({6, 4}, rng);
    const auto e = se.forward(tape, x);
    for (std::size_t c = 0; c < 4; ++c) {
      double g = 0.0;
      for (std::size_t s = 0; s < 6; ++s) g += x.at(s, c);
      g /= 6.0;
      for (std::size_t t = 0; t < 6; ++t) CHECK(std::fabs(e.at(t, c) - x.at(t, c) * g * silu(g)) < 1e-8);
    }
  }
}

TEST_CASE("projection selectors and composition") {
  SplitMix64 rng(34);
  const std::size_t L = 9, C = 2;
  fd::FDBranch branch("fd", tiny(L, C), rng, DType::f64);
  randomize(params_of(branch), rng);
  const auto x = rand_t({L, C}, rng);
  Tape tape(Tape::Mode::inference);

  auto set_selector = [&](bool first) {
    std::vector<double> w(2 * C * C, 0.0);  // [2C x C], y = [F_f | F_e] W
    for (std::size_t i = 0; i < C; ++i) w[(first ? i : C + i) * C + i] = 1.0;
    branch.projection().weight().assign(w);
    branch.projection().bias().assign(std::vector<double>(C, 0.0));
  };
  const auto saved_w = std::vector<double>(branch.projection().weight().value().data().begin(),
                                           branch.projection().weight().value().data().end());
  const auto saved_b = std::vector<double>(branch.projection().bias().value().data().begin(),
                                           branch.projection().bias().value().data().end());

  set_selector(true);
  auto f = branch.features(tape, x);
  for (std::size_t i = 0; i < L * C; ++i) CHECK(f.F_freq[i] == doctest::Approx(f.F_f[i]).epsilon(1e-14));
  set_selector(false);
  f = branch.features(tape, x);
  for (std::size_t i = 0; i < L * C; ++i) CHECK(f.F_freq[i] == doctest::Approx(f.F_enhance[i]).epsilon(1e-14));

  branch.projection().weight().assign(saved_w);
  branch.projection().bias().assign(saved_b);
  f = branch.features(tape, x);
  // Normalize, run both submodules on the same input, project.
  const auto& gamma = branch.input_norm().gamma().value();
  const auto& beta = branch.input_norm().beta().value();
  std::vector<double> normed(L * C);
  for (std::size_t t = 0; t < L; ++t) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += x.at(t, c);
    mean /= C;
    for (std::size_t c = 0; c < C; ++c) var += (x.at(t, c) - mean) * (x.at(t, c) - mean);
    var /= C;
    for (std::size_t c = 0; c < C; ++c)
      normed[t * C + c] = (x.at(t, c) - mean) / std::sqrt(var + 1e-5) * gamma[c] + beta[c];
  }
  const auto f_l = Tensor::from({L, C}, normed, DType::f64);
  const auto ff = branch.coarse2fine().forward(tape, f_l);
  const auto fe = branch.specevolve().forward(tape, f_l);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t o = 0; o < C; ++o) {
      double acc = saved_b[o];
      for (std::size_t c = 0; c < C; ++c) acc += ff.at(t, c) * saved_w[c * C + o] + fe.at(t, c) * saved_w[(C + c) * C + o];
      CHECK(std::fabs(f.F_freq.at(t, o) - acc) < 1e-10);
    }
}

TEST_CASE("shape preservation and errors") {
  SplitMix64 rng(35);
  for (auto [L, C] : {std::pair<std::size_t, std::size_t>{1, 1}, {5, 3}, {20, 8}}) {
    fd::FDBranch branch("fd", tiny(L, C), rng, DType::f64);
    Tape tape(Tape::Mode::inference);
    const auto out = branch.forward(tape, rand_t({L, C}, rng));
    CHECK(out.shape() == Shape{L, C});
    CHECK_THROWS_AS(branch.forward(tape, rand_t({L + 1, C}, rng)), DimensionError);
  }
  auto bad = tiny(9, 2);
  bad.dwconv_width = 2;
  CHECK_THROWS_AS(fd::FDBranch("fd", bad, rng, DType::f64), ConfigError);
}

TEST_CASE("identity helix changes values, not shapes") {
  auto a = tiny(16, 2), b = tiny(16, 2);
  b.identity_helix = true;
  SplitMix64 ra(36), rb(36), rx(37);
  fd::FDBranch fa("fd", a, ra, DType::f64), fb("fd", b, rb, DType::f64);
  const auto x = rand_t({16, 2}, rx);
  Tape tape(Tape::Mode::inference);
  const auto ya = fa.forward(tape, x), yb = fb.forward(tape, x);
  CHECK(ya.shape() == yb.shape());
  double diff = 0.0;
  for (std::size_t i = 0; i < ya.numel(); ++i) diff += std::fabs(ya[i] - yb[i]);
  CHECK(diff > 1e-6);
}

TEST_CASE("branch gradients") {
  SplitMix64 rng(38);
  fd::FDBranch branch("fd", tiny(9, 2), rng, DType::f64);
  randomize(params_of(branch), rng);
  const auto w = rand_t({9, 2}, rng);
  const std::vector<Tensor> point{rand_t({9, 2}, rng)};
  GradCheckOptions opts;
  opts.difference = Difference::ridders;
  const auto r = grad_check(
      [&](Tape& tape, std::span<const Tensor> in) { return ops::sum(ops::mul(branch.forward(tape, in[0]), w)); },
      point, 1e-2, opts);
  CHECK(r.max_relative_error < 1e-4);
  const auto rp = grad_check_parameters(
      [&](Tape& tape) { return ops::sum(ops::mul(branch.forward(tape, point[0]), w)); }, params_of(branch), 1e-2, opts);
  CHECK(rp.max_relative_error < 1e-4);
}
