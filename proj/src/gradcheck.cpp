#include "foss/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "foss/rng.hpp"

namespace foss {
namespace {

struct Coord {
  std::size_t operand;
  std::size_t index;
};

std::vector<Coord> pick_coordinates(const std::vector<std::size_t>& sizes, const GradCheckOptions& options) {
  std::vector<Coord> all;
  for (std::size_t o = 0; o < sizes.size(); ++o)
    for (std::size_t i = 0; i < sizes[o]; ++i) all.push_back({o, i});
  if (options.max_coordinates == 0 || options.max_coordinates >= all.size()) return all;
  // partial Fisher-Yates
  SplitMix64 rng(options.seed);
  for (std::size_t i = 0; i < options.max_coordinates; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(all.size() - i));
    std::swap(all[i], all[j]);
  }
  all.resize(options.max_coordinates);
  return all;
}

void update(GradCheckReport& report, const std::string& label, double analytic, double numeric) {
  const double err = relative_error(analytic, numeric);
  ++report.coordinates;
  if (err > report.max_relative_error || !std::isfinite(err)) {
    report.max_relative_error = std::isfinite(err) ? err : INFINITY;
    report.worst = label;
    report.worst_analytic = analytic;
    report.worst_numeric = numeric;
  }
}

// Ridders' extrapolation: central differences on a halving step ladder,
// Richardson tableau, keep the entry with the smallest estimated error.
// The estimate adds rounding noise (~eps |f| / step) to the truncation
// term so noisy small-step entries do not win by chance agreement.
double ridders(const std::function<double(double)>& f, double h0) {
  constexpr std::size_t kLevels = 12;
  constexpr double kShrink = 2.0, kShrink2 = kShrink * kShrink;
  constexpr double kNoise = 3.0 * std::numeric_limits<double>::epsilon();
  double a[kLevels][kLevels];
  double noise[kLevels];
  double hh = h0;
  double best = 0.0, err = INFINITY;
  for (std::size_t i = 0; i < kLevels; ++i, hh /= kShrink) {
    const double up = f(hh), down = f(-hh);
    a[0][i] = (up - down) / (2.0 * hh);
    noise[i] = kNoise * std::max(std::fabs(up), std::fabs(down)) / hh;
    double fac = kShrink2;
    for (std::size_t j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max(std::fabs(a[j][i] - a[j - 1][i]), std::fabs(a[j][i] - a[j - 1][i - 1])) + noise[i];
      if (e < err) {
        err = e;
        best = a[j][i];
      }
    }
  }
  return best;
}

double derivative(const std::function<double(double)>& f, double h, Difference scheme) {
  if (scheme == Difference::ridders) return ridders(f, h);
  return (f(h) - f(-h)) / (2.0 * h);
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const InputLossFn& fn, std::span<const Tensor> point, double h,
                           const GradCheckOptions& options) {
  if (h <= 0.0) throw ConfigError("grad_check: step must be positive");
  std::vector<Tensor> base;
  for (const auto& t : point) base.push_back(t.detach());

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Tensor> watched;
    for (const auto& t : base) watched.push_back(tape.watch(t));
    Tensor loss = fn(tape, watched);
    tape.backward(loss);
    for (const auto& w : watched) analytic.push_back(w.grad());
  }

  std::vector<std::size_t> sizes;
  for (const auto& t : base) sizes.push_back(t.numel());
  auto eval = [&](std::size_t operand, std::size_t index, double delta) {
    std::vector<Tensor> args;
    for (std::size_t o = 0; o < base.size(); ++o) {
      if (o != operand) {
        args.push_back(base[o]);
        continue;
      }
      std::vector<double> v(base[o].data().begin(), base[o].data().end());
      v[index] += delta;
      args.push_back(Tensor::from(base[o].shape(), std::move(v), base[o].dtype()));
    }
    Tape tape(Tape::Mode::inference);
    return fn(tape, args).item();
  };

  GradCheckReport report;
  for (const auto& c : pick_coordinates(sizes, options)) {
    const double numeric =
        derivative([&](double delta) { return eval(c.operand, c.index, delta); }, h, options.difference);
    update(report, "input" + std::to_string(c.operand) + "[" + std::to_string(c.index) + "]",
           analytic[c.operand][c.index], numeric);
  }
  return report;
}

GradCheckReport grad_check_parameters(const ParameterLossFn& fn, const ParameterList& params, double h,
                                      const GradCheckOptions& options) {
  if (h <= 0.0) throw ConfigError("grad_check: step must be positive");
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = fn(tape);
    tape.backward(loss);
    for (const auto* p : params) analytic.push_back(tape.parameter_grad(*p));
  }
  std::vector<std::size_t> sizes;
  for (const auto* p : params) sizes.push_back(p->numel());
  auto eval = [&]() {
    Tape tape(Tape::Mode::inference);
    return fn(tape).item();
  };

  GradCheckReport report;
  for (const auto& c : pick_coordinates(sizes, options)) {
    auto values = params[c.operand]->mutable_values();
    const double original = values[c.index];
    const double numeric = derivative(
        [&](double delta) {
          values[c.index] = original + delta;
          const double v = eval();
          values[c.index] = original;
          return v;
        },
        h, options.difference);
    update(report, params[c.operand]->name() + "[" + std::to_string(c.index) + "]", analytic[c.operand][c.index],
           numeric);
  }
  return report;
}

}  // namespace foss
