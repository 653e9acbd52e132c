#include "foss/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "foss/errors.hpp"
#include "foss/fd_branch.hpp"
#include "foss/helixsort.hpp"
#include "foss/model.hpp"
#include "foss/selective_ssm.hpp"

namespace foss::bench {

namespace {

using Clock = std::chrono::steady_clock;

Tensor random_tensor(Shape shape, SplitMix64& rng, double lo, double hi) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), DType::f64);
}

// Touching a buffer larger than the last-level cache before each run puts
// every length in the same cold-memory regime.
void evict_caches() {
  static std::vector<unsigned char> junk(std::size_t{512} << 20);
  for (std::size_t i = 0; i < junk.size(); i += 64) ++junk[i];
}

double time_median(std::size_t repeats, const std::function<void()>& fn) {
  std::vector<double> t;
  for (std::size_t r = 0; r < repeats; ++r) {
    evict_caches();
    const auto t0 = Clock::now();
    fn();
    t.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return median(std::move(t));
}

template <typename M>
std::size_t scalars(M& module) {
  ParameterList p;
  module.collect(p);
  return count_scalars(p);
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> naive_attention(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                                    std::size_t length, std::size_t dim) {
  if (q.size() != length * dim || k.size() != length * dim || v.size() != length * dim) {
    throw DimensionError("naive_attention: inputs must be [T x d]");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> out(length * dim, 0.0), w(length);
  for (std::size_t i = 0; i < length; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < length; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dim; ++c) s += q[i * dim + c] * k[j * dim + c];
      w[j] = s * scale;
      mx = std::max(mx, w[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < length; ++j) z += (w[j] = std::exp(w[j] - mx));
    double* row = out.data() + i * dim;
    for (std::size_t j = 0; j < length; ++j) {
      const double a = w[j] / z;
      for (std::size_t c = 0; c < dim; ++c) row[c] += a * v[j * dim + c];
    }
  }
  return out;
}

std::vector<Row> run(const Options& o) {
  if (o.repeats == 0) throw ConfigError("bench repeats must be >= 1");
  const std::size_t C = o.d_model, n = o.state_size;
  std::vector<Row> rows;
  SplitMix64 rng(o.seed);
  for (const auto& component : o.components) {
    for (std::size_t T : o.lengths) {
      const double Td = static_cast<double>(T), Cd = static_cast<double>(C), nd = static_cast<double>(n);
      Row row;
      row.component = component;
      row.length = T;
      if (component == "selective_scan") {
        ssm::StepParamSeq p;
        p.A = random_tensor({T, n}, rng, 0.5, 0.99);
        p.B = random_tensor({T, n * C}, rng, -0.2, 0.2);
        p.C = random_tensor({T, C * n}, rng, -0.2, 0.2);
        p.D = random_tensor({T, C * C}, rng, -0.2, 0.2);
        const Tensor x = random_tensor({T, C}, rng, -1.0, 1.0);
        const Tensor h0 = Tensor::zeros({n}, DType::f64);
        const Tensor gamma = Tensor::full({n}, 1.0, DType::f64), beta = Tensor::zeros({n}, DType::f64);
        row.median_seconds = time_median(o.repeats, [&] {
          ssm::selective_scan(p, x, h0, gamma, beta, ssm::StateNorm::feed_forward);
        });
        row.ops_estimate = 2.0 * Td * (nd * Cd + nd + Cd * nd + Cd * Cd);
        ssm::SelectiveSSMConfig sc;
        sc.state_size = n;
        sc.d_in = sc.d_out = C;
        SplitMix64 init(o.seed);
        ssm::SelectiveSSM block("bench", sc, init, DType::f64);
        row.param_count = scalars(block);
      } else if (component == "helixsort") {
        const Tensor x = random_tensor({T, C}, rng, -1.0, 1.0);
        row.median_seconds = time_median(o.repeats, [&] {
          const auto perm = helix::build_helix_permutation(T);
          helix::invert_apply(perm, helix::apply(perm, x));
        });
        row.ops_estimate = 3.0 * Td * Cd;
        row.param_count = helix::kParameterCount;
      } else if (component == "fd_branch") {
        fd::FDBranchConfig fc;
        fc.d_model = C;
        fc.seq_len = T;
        fc.state_size = n;
        SplitMix64 init(o.seed);
        fd::FDBranch branch("bench", fc, init, DType::f64);
        const Tensor x = random_tensor({T, C}, rng, -1.0, 1.0);
        row.median_seconds = time_median(o.repeats, [&] {
          Tape tape(Tape::Mode::inference);
          branch.forward(tape, x);
        });
        const double w = 2.0 * Cd;
        row.ops_estimate = 2.0 * Td * w * (2.0 * nd + w) + 10.0 * Td * std::log2(Td) * Cd;
        row.param_count = scalars(branch);
      } else if (component == "fuse") {
        model::FoSSConfig mc;
        mc.d_model = C;
        mc.state_size = n;
        mc.dtype = DType::f64;
        mc.init_seed = o.seed;
        model::FoSSModel m(mc);
        const Tensor y = random_tensor({T, C}, rng, -1.0, 1.0);
        const Tensor f = random_tensor({T, C}, rng, -1.0, 1.0);
        row.median_seconds = time_median(o.repeats, [&] {
          Tape tape(Tape::Mode::inference);
          m.fuse(tape, y, f);
        });
        row.ops_estimate = 4.0 * Td * Td * Cd + 6.0 * Td * Cd * Cd;
        row.param_count = scalars(m.fusion_attention()) + scalars(m.fusion_norm());
      } else if (component == "naive_attention") {
        const Tensor q = random_tensor({T, C}, rng, -1.0, 1.0);
        const Tensor k = random_tensor({T, C}, rng, -1.0, 1.0);
        const Tensor v = random_tensor({T, C}, rng, -1.0, 1.0);
        row.median_seconds =
            time_median(o.repeats, [&] { naive_attention(q.data(), k.data(), v.data(), T, C); });
        row.ops_estimate = 4.0 * Td * Td * Cd;
        row.param_count = 0;
      } else {
        throw ConfigError("unknown bench component '" + component + "'");
      }
      rows.push_back(row);
    }
  }
  return rows;
}

double scaling_ratio(std::span<const Row> rows, const std::string& component, std::span<const std::size_t> window) {
  std::vector<const Row*> sel;
  for (const auto& r : rows) {
    if (r.component != component) continue;
    if (!window.empty() && std::find(window.begin(), window.end(), r.length) == window.end()) continue;
    sel.push_back(&r);
  }
  std::sort(sel.begin(), sel.end(), [](const Row* a, const Row* b) { return a->length < b->length; });
  std::vector<double> ratios;
  for (std::size_t i = 1; i < sel.size(); ++i) ratios.push_back(sel[i]->median_seconds / sel[i - 1]->median_seconds);
  if (ratios.empty()) throw ConfigError("scaling_ratio: need at least two lengths for '" + component + "'");
  return median(std::move(ratios));
}

std::string csv_header() { return "component,T,median_seconds,ops_estimate,param_count"; }

std::string csv_row(const Row& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%zu,%.9g,%.6g,%zu", r.component.c_str(), r.length, r.median_seconds,
                r.ops_estimate, r.param_count);
  return buf;
}

}  // namespace foss::bench
