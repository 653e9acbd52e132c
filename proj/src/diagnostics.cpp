#include "foss/diagnostics.hpp"

#include <cstdio>
#include <numeric>

#include "foss/fd_branch.hpp"
#include "foss/helixsort.hpp"
#include "foss/layers.hpp"
#include "foss/model.hpp"
#include "foss/ops.hpp"
#include "foss/rng.hpp"
#include "foss/selective_ssm.hpp"
#include "foss/spectral.hpp"

namespace foss::diag {

namespace {

Tensor rand_t(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), DType::f64);
}

// Random linear functional of `out`, so every output coordinate contributes.
Tensor project(const Tensor& out, std::uint64_t seed) {
  SplitMix64 rng(seed);
  return ops::sum(ops::mul(out, rand_t(out.shape(), rng)));
}

Tensor project(const spectral::ComplexSeq& c, std::uint64_t seed) {
  return ops::add(project(c.re, seed), project(c.im, seed + 1));
}

GradCheckOptions options_for(Oracle oracle) {
  GradCheckOptions o;
  o.difference = oracle.difference;
  return o;
}

void merge(GradCheckReport& into, const GradCheckReport& r) {
  into.coordinates += r.coordinates;
  if (r.max_relative_error >= into.max_relative_error) {
    into.max_relative_error = r.max_relative_error;
    into.worst = r.worst;
    into.worst_analytic = r.worst_analytic;
    into.worst_numeric = r.worst_numeric;
  }
}

// Runs `make(point_rng)` at each point; `make` returns the loss function and
// the point.
using Case = std::pair<InputLossFn, std::vector<Tensor>>;

CheckResult input_check(const std::string& name, std::uint64_t seed, std::size_t points, double tol, Oracle oracle,
                        const std::function<Case(SplitMix64&, std::uint64_t)>& make) {
  CheckResult r;
  r.name = name;
  r.tolerance = tol;
  r.points = points;
  for (std::size_t p = 0; p < points; ++p) {
    SplitMix64 rng(mix_seed(seed, p));
    const auto [fn, point] = make(rng, rng.next());
    merge(r.report, grad_check(fn, point, oracle.h, options_for(oracle)));
  }
  return r;
}

// Adds a uniform offset to every parameter so that norms start away from
// gamma = 1, beta = 0 and weights are generic.
void randomize(const ParameterList& params, SplitMix64& rng, double amount) {
  for (Parameter* p : params) {
    std::vector<double> v(p->value().data().begin(), p->value().data().end());
    for (auto& x : v) x += rng.uniform(-amount, amount);
    p->assign(v);
  }
}

template <typename Module>
ParameterList params_of(Module& m) {
  ParameterList out;
  m.collect(out);
  return out;
}

// Module checks: input gradients and parameter gradients at each point.
template <typename Module>
void module_pair(std::vector<CheckResult>& out, Oracle oracle, const std::string& name, std::uint64_t seed, std::size_t points,
                 const std::function<std::unique_ptr<Module>(SplitMix64&)>& build,
                 const std::function<std::vector<Tensor>(SplitMix64&)>& inputs,
                 const std::function<Tensor(const Module&, Tape&, std::span<const Tensor>)>& apply,
                 std::size_t max_coordinates = 0) {
  CheckResult ri{name + "/inputs", {}, kModuleTolerance, points};
  CheckResult rp{name + "/params", {}, kModuleTolerance, points};
  for (std::size_t p = 0; p < points; ++p) {
    SplitMix64 rng(mix_seed(seed, p));
    auto module = build(rng);
    auto params = params_of(*module);
    randomize(params, rng, 0.3);
    const auto x = inputs(rng);
    const std::uint64_t proj = rng.next();
    merge(ri.report, grad_check(
                         [&](Tape& tape, std::span<const Tensor> in) { return project(apply(*module, tape, in), proj); },
                         x, oracle.h, options_for(oracle)));
    GradCheckOptions opts = options_for(oracle);
    opts.max_coordinates = max_coordinates;
    opts.seed = proj;
    merge(rp.report, grad_check_parameters(
                         [&](Tape& tape) {
                           std::vector<Tensor> consts(x.begin(), x.end());
                           return project(apply(*module, tape, consts), proj);
                         },
                         params, oracle.h, opts));
  }
  out.push_back(ri);
  out.push_back(rp);
}

}  // namespace

std::vector<CheckResult> primitive_checks(std::uint64_t seed, std::size_t points, Oracle oracle) {
  std::vector<CheckResult> out;
  const double tol = kPrimitiveTolerance;
  auto add = [&](const std::string& name, const std::function<Case(SplitMix64&, std::uint64_t)>& make) {
    out.push_back(input_check(name, mix_seed(seed, out.size()), points, tol, oracle, make));
  };
  using S = std::span<const Tensor>;

  add("matmul", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::matmul(in[0], in[1]), s); },
                {rand_t({3, 4}, r), rand_t({4, 5}, r)}};
  });
  add("add_broadcast", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::add(in[0], in[1]), s); }, {rand_t({3, 4}, r), rand_t({4}, r)}};
  });
  add("sub_broadcast", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::sub(in[0], in[1]), s); },
                {rand_t({3, 4}, r), rand_t({3, 1}, r)}};
  });
  add("mul_broadcast", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::mul(in[0], in[1]), s); },
                {rand_t({1, 4}, r), rand_t({3, 4}, r)}};
  });
  add("scale", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::scale(in[0], -1.7), s); }, {rand_t({3, 4}, r)}};
  });
  add("add_scalar", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::add_scalar(in[0], 0.3), s); }, {rand_t({3, 4}, r)}};
  });
  add("silu", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::silu(in[0]), s); }, {rand_t({3, 4}, r, -4.0, 4.0)}};
  });
  add("sigmoid", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::sigmoid(in[0]), s); }, {rand_t({3, 4}, r, -4.0, 4.0)}};
  });
  add("abs", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::abs(in[0]), s); }, {rand_t({3, 4}, r)}};
  });
  add("sum", [](SplitMix64& r, std::uint64_t) {
    return Case{[](Tape&, S in) { return ops::sum(ops::mul(in[0], in[0])); }, {rand_t({3, 4}, r)}};
  });
  add("mean", [](SplitMix64& r, std::uint64_t) {
    return Case{[](Tape&, S in) { return ops::mean(ops::mul(in[0], in[0])); }, {rand_t({3, 4}, r)}};
  });
  add("mean_rows", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::mean_rows(in[0]), s); }, {rand_t({5, 3}, r)}};
  });
  add("layer_norm", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::layer_norm(in[0], in[1], in[2]), s); },
                {rand_t({4, 5}, r), rand_t({5}, r, 0.5, 1.5), rand_t({5}, r)}};
  });
  add("softmax_axis0", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::softmax(in[0], 0), s); }, {rand_t({4, 3}, r, -2.0, 2.0)}};
  });
  add("softmax_axis1", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::softmax(in[0], 1), s); }, {rand_t({4, 3}, r, -2.0, 2.0)}};
  });
  add("conv1d_standard", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::conv1d(in[0], in[1], ops::ConvMode::standard), s); },
                {rand_t({7, 3}, r), rand_t({2, 3, 3}, r)}};
  });
  add("conv1d_depthwise", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::conv1d(in[0], in[1], ops::ConvMode::depthwise), s); },
                {rand_t({7, 3}, r), rand_t({3, 5}, r)}};
  });
  add("transpose", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::transpose(in[0]), s); }, {rand_t({3, 4}, r)}};
  });
  add("reshape", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::reshape(in[0], {2, 6}), s); }, {rand_t({3, 4}, r)}};
  });
  add("concat", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::concat(in[0], in[1], 1), s); },
                {rand_t({3, 2}, r), rand_t({3, 4}, r)}};
  });
  add("slice", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ops::slice(in[0], 0, 1, 3), s); }, {rand_t({4, 3}, r)}};
  });
  add("gather_rows", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) {
                  const std::size_t idx[] = {2, 0, 0, 3};
                  return project(ops::gather_rows(in[0], idx), s);
                },
                {rand_t({4, 3}, r)}};
  });
  add("dft_forward", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(spectral::dft_forward(in[0]), s); }, {rand_t({9, 2}, r)}};
  });
  add("dft_inverse", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) {
                  return project(spectral::dft_inverse({in[0], in[1]}, spectral::InverseCheck::real_part), s);
                },
                {rand_t({9, 2}, r), rand_t({9, 2}, r)}};
  });
  add("to_polar", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) {
                  const auto p = spectral::to_polar({in[0], in[1]});
                  return ops::add(project(p.amplitude, s), project(p.phase, s + 7));
                },
                {rand_t({6, 2}, r), rand_t({6, 2}, r)}};
  });
  add("from_polar", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(spectral::from_polar({in[0], in[1]}), s); },
                {rand_t({6, 2}, r, 0.1, 2.0), rand_t({6, 2}, r, -3.0, 3.0)}};
  });
  add("helix_apply", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) {
                  const auto perm = helix::build_helix_permutation(in[0].dim(0));
                  return project(helix::apply(perm, in[0]), s);
                },
                {rand_t({10, 2}, r)}};
  });
  add("helix_invert_apply", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) {
                  const auto perm = helix::build_helix_permutation(in[0].dim(0));
                  return project(helix::invert_apply(perm, in[0]), s);
                },
                {rand_t({10, 2}, r)}};
  });
  add("decay_squash", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(ssm::decay_squash(in[0]), s); }, {rand_t({3, 4}, r, -3.0, 3.0)}};
  });
  for (const auto& [mode, label] : {std::pair{ssm::StateNorm::disabled, "selective_scan_disabled"},
                                    std::pair{ssm::StateNorm::feed_forward, "selective_scan_feed_forward"},
                                    std::pair{ssm::StateNorm::output_only, "selective_scan_output_only"}}) {
    const auto m = mode;
    add(label, [m](SplitMix64& r, std::uint64_t s) {
      const std::size_t T = 6, n = 3, d = 2, p = 2;
      return Case{[s, m](Tape&, S in) {
                    const ssm::StepParamSeq seq{in[0], in[1], in[2], in[3]};
                    return project(ssm::selective_scan(seq, in[4], in[5], in[6], in[7], m), s);
                  },
                  {rand_t({T, n}, r, 0.2, 0.95), rand_t({T, n * d}, r), rand_t({T, p * n}, r), rand_t({T, p * d}, r),
                   rand_t({T, d}, r), rand_t({n}, r), rand_t({n}, r, 0.5, 1.5), rand_t({n}, r)}};
    });
  }
  add("attend", [](SplitMix64& r, std::uint64_t s) {
    return Case{[s](Tape&, S in) { return project(layers::attend(in[0], in[1], in[2]), s); },
                {rand_t({3, 4}, r), rand_t({5, 4}, r), rand_t({5, 2}, r)}};
  });
  return out;
}

std::vector<CheckResult> module_checks(std::uint64_t seed, std::size_t points, Oracle oracle) {
  std::vector<CheckResult> out;
  using S = std::span<const Tensor>;
  const DType f64 = DType::f64;
  auto sub_seed = [&] { return mix_seed(seed, 100 + out.size()); };

  module_pair<layers::Linear>(
      out, oracle, "linear", sub_seed(), points,
      [&](SplitMix64& r) { return std::make_unique<layers::Linear>("l", 3, 4, r, f64); },
      [](SplitMix64& r) { return std::vector<Tensor>{rand_t({5, 3}, r)}; },
      [](const layers::Linear& m, Tape& t, S in) { return m.forward(t, in[0]); });
  module_pair<layers::LayerNorm>(
      out, oracle, "layer_norm", sub_seed(), points,
      [&](SplitMix64&) { return std::make_unique<layers::LayerNorm>("n", 4, f64); },
      [](SplitMix64& r) { return std::vector<Tensor>{rand_t({5, 4}, r)}; },
      [](const layers::LayerNorm& m, Tape& t, S in) { return m.forward(t, in[0]); });
  module_pair<layers::Mlp>(
      out, oracle, "mlp", sub_seed(), points,
      [&](SplitMix64& r) { return std::make_unique<layers::Mlp>("m", 3, 5, 2, r, f64); },
      [](SplitMix64& r) { return std::vector<Tensor>{rand_t({4, 3}, r)}; },
      [](const layers::Mlp& m, Tape& t, S in) { return m.forward(t, in[0]); });
  module_pair<layers::DepthwiseSeparableConv>(
      out, oracle, "dwsep_conv", sub_seed(), points,
      [&](SplitMix64& r) { return std::make_unique<layers::DepthwiseSeparableConv>("c", 3, 3, r, f64); },
      [](SplitMix64& r) { return std::vector<Tensor>{rand_t({6, 3}, r)}; },
      [](const layers::DepthwiseSeparableConv& m, Tape& t, S in) { return m.forward(t, in[0]); });
  module_pair<layers::Attention>(
      out, oracle, "attention", sub_seed(), points,
      [&](SplitMix64& r) { return std::make_unique<layers::Attention>("a", 4, 3, 4, 2, r, f64); },
      [](SplitMix64& r) { return std::vector<Tensor>{rand_t({3, 4}, r), rand_t({5, 3}, r)}; },
      [](const layers::Attention& m, Tape& t, S in) { return m.forward(t, in[0], in[1]); });
  for (const auto& [mode, label] : {std::pair{ssm::StateNorm::disabled, "selective_ssm_disabled"},
                                    std::pair{ssm::StateNorm::feed_forward, "selective_ssm_feed_forward"},
                                    std::pair{ssm::StateNorm::output_only, "selective_ssm_output_only"}}) {
    const auto m = mode;
    module_pair<ssm::SelectiveSSM>(
        out, oracle, label, sub_seed(), points,
        [&, m](SplitMix64& r) {
          ssm::SelectiveSSMConfig c;
          c.state_size = 4;
          c.d_in = 3;
          c.d_out = 2;
          c.generator_hidden = 5;
          c.norm = m;
          return std::make_unique<ssm::SelectiveSSM>("s", c, r, f64);
        },
        [](SplitMix64& r) { return std::vector<Tensor>{rand_t({7, 3}, r)}; },
        [](const ssm::SelectiveSSM& s, Tape& t, S in) { return s.forward(t, in[0]); });
  }
  auto fd_cfg = [] {
    fd::FDBranchConfig c;
    c.d_model = 2;
    c.seq_len = 9;
    c.state_size = 4;
    c.generator_hidden = 5;
    return c;
  };
  module_pair<fd::Coarse2FineSSM>(
      out, oracle, "coarse2fine", sub_seed(), points,
      [&](SplitMix64& r) { return std::make_unique<fd::Coarse2FineSSM>("c2f", fd_cfg(), r, f64); },
      [](SplitMix64& r) { return std::vector<Tensor>{rand_t({9, 2}, r)}; },
      [](const fd::Coarse2FineSSM& m, Tape& t, S in) { return m.forward(t, in[0]); });
  module_pair<fd::SpecEvolveSSM>(
      out, oracle, "specevolve", sub_seed(), points,
      [&](SplitMix64& r) {
        auto c = fd_cfg();
        c.d_model = 5;
        return std::make_unique<fd::SpecEvolveSSM>("se", c, r, f64);
      },
      [](SplitMix64& r) { return std::vector<Tensor>{rand_t({9, 5}, r)}; },
      [](const fd::SpecEvolveSSM& m, Tape& t, S in) { return m.forward(t, in[0]); });
  module_pair<fd::FDBranch>(
      out, oracle, "fd_branch", sub_seed(), points,
      [&](SplitMix64& r) { return std::make_unique<fd::FDBranch>("fd", fd_cfg(), r, f64); },
      [](SplitMix64& r) { return std::vector<Tensor>{rand_t({9, 2}, r)}; },
      [](const fd::FDBranch& m, Tape& t, S in) { return m.forward(t, in[0]); });
  return out;
}

CheckResult end_to_end_check(std::uint64_t seed, std::size_t points, std::size_t max_coordinates, Oracle oracle) {
  CheckResult r;
  r.name = "end_to_end_loss";
  r.tolerance = kModuleTolerance;
  r.points = points;
  for (std::size_t p = 0; p < points; ++p) {
    SplitMix64 rng(mix_seed(seed, p));
    model::FoSSConfig c;
    c.t_obs = 9;
    c.t_fut = 8;
    c.d_model = 8;
    c.k = 3;
    c.state_size = 4;
    c.generator_hidden = 8;
    c.head_hidden = 16;
    c.dtype = DType::f64;
    c.init_seed = rng.next();
    model::FoSSModel m(c);
    const auto params = m.parameters();
    randomize(params, rng, 0.2);
    const Tensor x = rand_t({c.t_obs, 2}, rng, -10.0, 10.0);
    const Tensor y = rand_t({c.t_fut, 2}, rng, -10.0, 10.0);
    auto loss = [&](Tape& tape, const Tensor& obs) {
      return model::loss(m.forward(tape, obs).final_trajectory, y, c.lambda).total;
    };
    const std::vector<Tensor> point{x};
    merge(r.report, grad_check([&](Tape& tape, std::span<const Tensor> in) { return loss(tape, in[0]); }, point,
                               oracle.h, options_for(oracle)));
    GradCheckOptions opts = options_for(oracle);
    opts.max_coordinates = max_coordinates;
    opts.seed = rng.next();
    merge(r.report, grad_check_parameters([&](Tape& tape) { return loss(tape, x); }, params, oracle.h, opts));
  }
  return r;
}

std::string csv_header() { return "check,points,coordinates,max_relative_error,tolerance,worst,passed"; }

std::string csv_row(const CheckResult& r) {
  char buf[384];
  std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.3e,%.0e,%s,%s", r.name.c_str(), r.points, r.report.coordinates,
                r.report.max_relative_error, r.tolerance, r.report.worst.c_str(), r.passed() ? "true" : "false");
  return buf;
}

}  // namespace foss::diag
