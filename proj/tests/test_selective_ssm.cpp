#include <doctest.h>

#include <cmath>
#include <vector>

#include "foss/errors.hpp"
#include "foss/gradcheck.hpp"
#include "foss/ops.hpp"
#include "foss/rng.hpp"
#include "foss/selective_ssm.hpp"

using namespace foss;

namespace {

Tensor rand_t(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), DType::f64);
}

ssm::StepParamSeq scalar_params(std::size_t T, double a, double b, double c, double d) {
  return {Tensor::full({T, 1}, a, DType::f64), Tensor::full({T, 1}, b, DType::f64), Tensor::full({T, 1}, c, DType::f64),
          Tensor::full({T, 1}, d, DType::f64)};
}

Tensor scan_plain(const ssm::StepParamSeq& p, const Tensor& x, std::size_t n, const Tensor& h0) {
  return ssm::selective_scan(p, x, h0, Tensor::full({n}, 1.0, DType::f64), Tensor::zeros({n}, DType::f64),
                             ssm::StateNorm::disabled);
}

// Dense n x n matrices with the diagonal transition written out, propagated
// by explicit matrix-vector products.
std::vector<double> dense_reference(const std::vector<ssm::SSMStepParams>& steps, const Tensor& x, std::size_t n,
                                    std::size_t d, std::size_t p, std::vector<double> h) {
  std::vector<double> y;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto& s = steps[t];
    std::vector<double> A(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) A[i * n + i] = s.A[i];
    for (std::size_t o = 0; o < p; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += s.C[o * n + i] * h[i];
      for (std::size_t j = 0; j < d; ++j) acc += s.D[o * d + j] * x.at(t, j);
      y.push_back(acc);
    }
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) next[i] += A[i * n + k] * h[k];
      for (std::size_t j = 0; j < d; ++j) next[i] += s.B[i * d + j] * x.at(t, j);
    }
    h = next;
  }
  return y;
}

}  // namespace

TEST_CASE("unit delay and prefix sum") {
  const auto x = Tensor::from({3, 1}, {1.0, 2.0, 3.0}, DType::f64);
  const auto h0 = Tensor::zeros({1}, DType::f64);
  const auto delay = scan_plain(scalar_params(3, 0.0, 1.0, 1.0, 0.0), x, 1, h0);
  CHECK(delay.data()[0] == 0.0);
  CHECK(delay.data()[1] == 1.0);
  CHECK(delay.data()[2] == 2.0);
  const auto prefix = scan_plain(scalar_params(3, 1.0, 1.0, 1.0, 0.0), x, 1, h0);
  CHECK(prefix.data()[0] == 0.0);
  CHECK(prefix.data()[1] == 1.0);
  CHECK(prefix.data()[2] == 3.0);
}

TEST_CASE("scan matches the dense oracle on random instances") {
  SplitMix64 rng(21);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + rng.below(8), d = 1 + rng.below(4), p = 1 + rng.below(4), T = 1 + rng.below(32);
    std::vector<ssm::SSMStepParams> steps(T);
    for (auto& s : steps) {
      for (std::size_t i = 0; i < n; ++i) s.A.push_back(rng.uniform(0.05, 0.99));
      for (std::size_t i = 0; i < n * d; ++i) s.B.push_back(rng.uniform(-1.0, 1.0));
      for (std::size_t i = 0; i < p * n; ++i) s.C.push_back(rng.uniform(-1.0, 1.0));
      for (std::size_t i = 0; i < p * d; ++i) s.D.push_back(rng.uniform(-1.0, 1.0));
    }
    const auto x = rand_t({T, d}, rng);
    std::vector<double> h0(n);
    for (auto& v : h0) v = rng.uniform(-1.0, 1.0);
    const auto ref = dense_reference(steps, x, n, d, p, h0);
    const auto got = scan_plain(ssm::pack_step_params(steps, n, d, p, DType::f64), x, n,
                                Tensor::from({n}, h0, DType::f64));
    const auto lib = ssm::dense_unroll_oracle(steps, x, h0);
    REQUIRE(got.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double scale = std::max(std::fabs(ref[i]), 1.0);
      CHECK(std::fabs(got[i] - ref[i]) <= 1e-8 * scale);
      CHECK(std::fabs(lib[i] - ref[i]) <= 1e-8 * scale);
    }
  }
}

TEST_CASE("zero input and h0 propagation") {
  SplitMix64 rng(22);
  const std::size_t T = 6, n = 3;
  const auto zero = ssm::selective_scan(scalar_params(T, 0.5, 1.0, 1.0, 1.0), Tensor::zeros({T, 1}, DType::f64),
                                        Tensor::zeros({1}, DType::f64), Tensor::full({1}, 1.0, DType::f64),
                                        Tensor::zeros({1}, DType::f64), ssm::StateNorm::disabled);
  for (double v : zero.data()) CHECK(v == 0.0);

  // B = 0: y(t) = C A^t h0.
  std::vector<ssm::SSMStepParams> steps(T);
  const std::vector<double> a{0.9, 0.5, 0.2}, c{1.0, -2.0, 0.5};
  for (auto& s : steps) s = {a, {0.0, 0.0, 0.0}, c, {0.0}};
  const std::vector<double> h0{1.0, 1.0, -1.0};
  const auto y = scan_plain(ssm::pack_step_params(steps, n, 1, 1, DType::f64), rand_t({T, 1}, rng), n,
                            Tensor::from({n}, h0, DType::f64));
  for (std::size_t t = 0; t < T; ++t) {
    double expect = 0.0;
    for (std::size_t i = 0; i < n; ++i) expect += c[i] * std::pow(a[i], static_cast<double>(t)) * h0[i];
    CHECK(std::fabs(y[t] - expect) < 1e-14);
  }
}

TEST_CASE("non-finite state names the step") {
  auto p = scalar_params(4, 0.5, 1.0, 1.0, 0.0);
  const auto x = Tensor::from({4, 1}, {1.0, 1.0, INFINITY, 1.0}, DType::f64);
  try {
    scan_plain(p, x, 1, Tensor::zeros({1}, DType::f64));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 2") != std::string::npos);
  }
  CHECK_THROWS_AS(scan_plain(scalar_params(3, 0.5, 1.0, 1.0, 0.0), Tensor::zeros({4, 1}, DType::f64), 1,
                             Tensor::zeros({1}, DType::f64)),
                  DimensionError);
}

TEST_CASE("decay squash stays inside the unit interval") {
  for (double raw : {-1e6, -50.0, -1.0, 0.0, 1.0, 50.0, 1e6}) {
    const double a = ssm::decay_squash(raw);
    CHECK(a > 0.0);
    CHECK(a < 1.0);
    CHECK(static_cast<float>(a) > 0.0f);
    CHECK(static_cast<float>(a) < 1.0f);
  }
  // softplus(0) = ln 2, exp(-ln 2) = 1/2.
  CHECK(std::fabs(ssm::decay_squash(0.0) - (ssm::kDecayMargin + (1.0 - 2.0 * ssm::kDecayMargin) * 0.5)) < 1e-15);
  const std::vector<double> raw{-2.0, 0.0, 3.0};
  const auto t = ssm::decay_squash(Tensor::from({3}, raw, DType::f64));
  for (std::size_t i = 0; i < 3; ++i) CHECK(t[i] == ssm::decay_squash(raw[i]));
}

TEST_CASE("generator behaviour") {
  SplitMix64 rng(23);
  ssm::SelectiveSSMConfig cfg;
  cfg.state_size = 4;
  cfg.d_in = 3;
  cfg.d_out = 2;
  cfg.generator_hidden = 5;
  ssm::SelectiveSSM block("s", cfg, rng, DType::f64);
  ParameterList params;
  block.collect(params);

  SUBCASE("zero weights give squash(0) and zero B, C, D") {
    for (Parameter* p : params) p->assign(std::vector<double>(p->numel(), 0.0));
    Tape tape;
    const auto x = rand_t({5, 3}, rng);
    const auto seq = block.generate_step_params(tape, x, block.local_features(tape, x));
    for (double a : seq.A.data()) CHECK(a == ssm::decay_squash(0.0));
    for (double b : seq.B.data()) CHECK(b == 0.0);
    for (double c : seq.C.data()) CHECK(c == 0.0);
    for (double d : seq.D.data()) CHECK(d == 0.0);
  }

  SUBCASE("input dependence is live") {
    const auto x = rand_t({5, 3}, rng);
    auto a_of = [&](const Tensor& in) {
      Tape tape(Tape::Mode::inference);
      return block.generate_step_params(tape, in, block.local_features(tape, in)).A;
    };
    std::vector<double> bumped(x.data().begin(), x.data().end());
    bumped[2 * 3 + 1] += 1e-3;
    const auto a0 = a_of(x), a1 = a_of(Tensor::from({5, 3}, bumped, DType::f64));
    double diff = 0.0;
    for (std::size_t j = 0; j < 4; ++j) diff += std::fabs(a1.at(2, j) - a0.at(2, j));
    CHECK(diff > 0.0);
  }

  SUBCASE("A stays in (0, 1) under large weights") {
    for (Parameter* p : params) {
      std::vector<double> v(p->numel());
      for (auto& e : v) e = rng.uniform(-30.0, 30.0);
      p->assign(v);
    }
    Tape tape;
    const auto x = rand_t({8, 3}, rng, -5.0, 5.0);
    const auto seq = block.generate_step_params(tape, x, block.local_features(tape, x));
    for (double a : seq.A.data()) {
      CHECK(a > 0.0);
      CHECK(a < 1.0);
    }
  }
}

TEST_CASE("local features") {
  SplitMix64 rng(24);
  ssm::SelectiveSSMConfig cfg;
  cfg.state_size = 2;
  cfg.d_in = 2;
  ssm::SelectiveSSM block("s", cfg, rng, DType::f64);
  const auto x = rand_t({6, 2}, rng);

  // Kernel is [channels x width]; the delta sits on the centre tap.
  block.conv_kernel().assign(std::vector<double>{0.0, 1.0, 0.0, 0.0, 1.0, 0.0});
  block.conv_bias().assign(std::vector<double>{0.0, 0.0});
  Tape tape;
  const auto same = block.local_features(tape, x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::fabs(same[i] - x[i]) < 1e-15);

  block.conv_kernel().assign(std::vector<double>(6, 1.0 / 3.0));
  const auto avg = block.local_features(tape, Tensor::full({6, 2}, 2.0, DType::f64));
  for (std::size_t t = 1; t + 1 < 6; ++t)
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::fabs(avg.at(t, c) - 2.0) < 1e-14);
}

TEST_CASE("end-to-end gradients through the block") {
  SplitMix64 rng(25);
  for (auto norm : {ssm::StateNorm::disabled, ssm::StateNorm::feed_forward, ssm::StateNorm::output_only}) {
    ssm::SelectiveSSMConfig cfg;
    cfg.state_size = 4;
    cfg.d_in = 2;
    cfg.d_out = 2;
    cfg.generator_hidden = 4;
    cfg.norm = norm;
    ssm::SelectiveSSM block("s", cfg, rng, DType::f64);
    const auto w = rand_t({16, 2}, rng);
    const std::vector<Tensor> point{rand_t({16, 2}, rng)};
    GradCheckOptions opts;
    opts.difference = Difference::ridders;
    const auto r = grad_check(
        [&](Tape& tape, std::span<const Tensor> in) { return ops::sum(ops::mul(block.forward(tape, in[0]), w)); },
        point, 1e-2, opts);
    CHECK(r.max_relative_error < 1e-4);
  }
}
