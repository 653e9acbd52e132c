#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "foss/errors.hpp"
#include "foss/metrics.hpp"
#include "foss/model.hpp"
#include "foss/rng.hpp"

using namespace foss;
using namespace foss::metrics;

namespace {

std::vector<Point> random_path(SplitMix64& rng, std::size_t T, double spread = 5.0) {
  std::vector<Point> p(T);
  for (auto& q : p) q = {rng.uniform(-spread, spread), rng.uniform(-spread, spread)};
  return p;
}

Candidates random_set(SplitMix64& rng, std::size_t K, std::size_t T) {
  Candidates c;
  double z = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    c.trajectories.push_back(random_path(rng, T));
    c.probabilities.push_back(rng.uniform(0.01, 1.0));
    z += c.probabilities.back();
  }
  for (auto& p : c.probabilities) p /= z;
  return c;
}

std::vector<Point> shifted(const std::vector<Point>& p, double dx, double dy) {
  auto out = p;
  for (auto& q : out) q = {q[0] + dx, q[1] + dy};
  return out;
}

double dist(const Point& a, const Point& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

struct Oracle {
  double ade = INFINITY, fde = INFINITY, bfde = 0.0;
  bool miss = false;
};

// Enumerates every candidate independently.
Oracle brute_force(const Candidates& c, const std::vector<Point>& y) {
  Oracle o;
  std::size_t best = 0;
  for (std::size_t k = 0; k < c.trajectories.size(); ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) s += dist(c.trajectories[k][t], y[t]);
    o.ade = std::min(o.ade, s / static_cast<double>(y.size()));
    const double f = dist(c.trajectories[k].back(), y.back());
    if (f < o.fde) {
      o.fde = f;
      best = k;
    }
  }
  o.bfde = o.fde + (1.0 - c.probabilities[best]) * (1.0 - c.probabilities[best]);
  o.miss = o.fde > 2.0;
  return o;
}

model::FoSSConfig tiny() {
  model::FoSSConfig c;
  c.t_obs = 6;
  c.t_fut = 5;
  c.d_model = 8;
  c.state_size = 4;
  c.generator_hidden = 8;
  c.head_hidden = 16;
  c.k = 6;
  c.dtype = DType::f64;
  return c;
}

}  // namespace

TEST_CASE("metric examples") {
  SplitMix64 rng(1);
  const auto y = random_path(rng, 30);

  Candidates perfect{{random_path(rng, 30), y, random_path(rng, 30)}, {0.3, 0.5, 0.2}};
  CHECK(minade(perfect, y) == 0.0);
  CHECK(minfde(perfect, y) == 0.0);
  CHECK(best_final_index(perfect, y) == 1);
  CHECK(std::abs(b_minfde(perfect, y) - 0.25) < 1e-15);
  CHECK_FALSE(is_miss(perfect, y));

  Candidates sure{{y}, {1.0}};
  CHECK(b_minfde(sure, y) == 0.0);

  Candidates offset{{shifted(y, 0.6, -0.8)}, {1.0}};
  CHECK(std::abs(minade(offset, y) - 1.0) < 1e-12);

  auto final_only = y;
  final_only.back()[1] += 3.0;
  Candidates three{{final_only}, {1.0}};
  CHECK(std::abs(minfde(three, y) - 3.0) < 1e-12);
  CHECK(is_miss(three, y));
}

TEST_CASE("miss threshold is strict") {
  const std::vector<Point> y{{0.0, 0.0}, {1.0, 0.0}};
  CHECK_FALSE(is_miss({{{{0.0, 0.0}, {3.0, 0.0}}}, {1.0}}, y));
  CHECK_FALSE(is_miss({{{{0.0, 0.0}, {1.0, 2.0}}}, {1.0}}, y));
  CHECK(is_miss({{{{0.0, 0.0}, {1.0, std::nextafter(2.0, 3.0)}}}, {1.0}}, y));
  CHECK(kMissThreshold == 2.0);
}

TEST_CASE("metrics match brute force on random sets") {
  SplitMix64 rng(2);
  for (int n = 0; n < 1000; ++n) {
    const std::size_t K = 1 + rng.below(8), T = 1 + rng.below(30);
    const auto c = random_set(rng, K, T);
    const auto y = random_path(rng, T);
    const auto o = brute_force(c, y);
    CHECK(std::abs(minade(c, y) - o.ade) <= 1e-10);
    CHECK(std::abs(minfde(c, y) - o.fde) <= 1e-10);
    CHECK(std::abs(b_minfde(c, y) - o.bfde) <= 1e-10);
    CHECK(is_miss(c, y) == o.miss);
    const auto s = score(c, y);
    CHECK(s.ade == minade(c, y));
    CHECK(s.fde == minfde(c, y));
    CHECK(s.b_fde == b_minfde(c, y));
    CHECK(s.miss == is_miss(c, y));
    CHECK(s.b_fde - s.fde >= 0.0);
    CHECK(s.b_fde - s.fde <= 1.0);
  }
}

TEST_CASE("adding candidates never increases minADE or minFDE") {
  SplitMix64 rng(3);
  for (int n = 0; n < 100; ++n) {
    const auto y = random_path(rng, 12);
    Candidates c;
    double prev_ade = INFINITY, prev_fde = INFINITY;
    for (std::size_t k = 0; k < 8; ++k) {
      c.trajectories.push_back(random_path(rng, 12));
      c.probabilities.assign(k + 1, 1.0 / static_cast<double>(k + 1));
      const double a = minade(c, y), f = minfde(c, y);
      CHECK(a <= prev_ade);
      CHECK(f <= prev_fde);
      prev_ade = a;
      prev_fde = f;
    }
  }
}

TEST_CASE("top_k keeps the most probable candidates in stable order") {
  const std::vector<Point> a{{0.0, 0.0}}, b{{1.0, 0.0}}, c{{2.0, 0.0}}, d{{3.0, 0.0}};
  const Candidates set{{a, b, c, d}, {0.2, 0.4, 0.2, 0.2}};
  const auto one = top_k(set, 1);
  REQUIRE(one.trajectories.size() == 1);
  CHECK(one.trajectories[0] == b);
  CHECK(one.probabilities[0] == 0.4);
  const auto three = top_k(set, 3);
  CHECK(three.trajectories == std::vector<std::vector<Point>>{b, a, c});
  CHECK(top_k(set, 10).trajectories.size() == 4);
}

TEST_CASE("pairwise summation and aggregation") {
  SplitMix64 rng(4);
  for (std::size_t n : {0u, 1u, 2u, 7u, 1000u, 4097u}) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(0.0, 1.0);
    long double exact = 0.0L;
    for (double x : v) exact += x;
    CHECK(std::abs(pairwise_sum(v) - static_cast<double>(exact)) <= 1e-12 * std::max<double>(1.0, n));
  }
  std::vector<double> ones(1u << 20, 0.1);
  CHECK(std::abs(pairwise_sum(ones) - 0.1 * (1u << 20)) < 1e-7);

  std::vector<ScenarioMetrics> scores;
  double ade = 0.0, fde = 0.0, bfde = 0.0, miss = 0.0;
  for (int i = 0; i < 10; ++i) {
    const ScenarioMetrics s{rng.uniform(0.0, 3.0), rng.uniform(0.0, 4.0), 0.0, i % 3 == 0};
    scores.push_back(s);
    scores.back().b_fde = s.fde + 0.5;
    ade += s.ade / 10.0;
    fde += s.fde / 10.0;
    bfde += (s.fde + 0.5) / 10.0;
    miss += s.miss ? 0.1 : 0.0;
  }
  const auto r = aggregate(scores, 6);
  CHECK(std::abs(r.minade_k - ade) < 1e-12);
  CHECK(std::abs(r.minfde_k - fde) < 1e-12);
  CHECK(std::abs(r.b_minfde_k - bfde) < 1e-12);
  CHECK(std::abs(r.mr_k - miss) < 1e-12);
  CHECK(r.k == 6);
  CHECK(r.n_scenarios == 10);
  CHECK(r.b_minfde_k >= r.minfde_k);

  const ScenarioMetrics zero{};
  const auto z = aggregate(std::vector<ScenarioMetrics>{zero}, 1);
  CHECK(z.minade_k == 0.0);
  CHECK(z.b_minfde_k == 0.0);
  CHECK(z.mr_k == 0.0);
  CHECK_THROWS_AS(aggregate(std::vector<ScenarioMetrics>{}, 6), ConfigError);

  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.at("minade_k").get<double>() == doctest::Approx(r.minade_k));
  CHECK(r.to_json().find('\n') == std::string::npos);
  const auto header = EvalReport::csv_header(), row = r.to_csv_row();
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}

TEST_CASE("evaluate matches per-scenario aggregation and K=1 is the argmax") {
  const model::FoSSModel m(tiny());
  data::Horizon h{6, 5, 0.1};
  const auto all = data::generate_dataset({3, 3, 3, 3}, data::ParamRanges{}, 5, h);
  std::vector<const data::Scenario*> ptrs;
  for (const auto& s : all) ptrs.push_back(&s);

  std::vector<ScenarioMetrics> six, one;
  for (const auto* s : ptrs) {
    const auto c = predict(m, *s);
    REQUIRE(c.trajectories.size() == 6);
    six.push_back(score(top_k(c, 6), s->future));
    const std::size_t arg = static_cast<std::size_t>(
        std::max_element(c.probabilities.begin(), c.probabilities.end()) - c.probabilities.begin());
    one.push_back(score({{c.trajectories[arg]}, {c.probabilities[arg]}}, s->future));
  }
  const auto r6 = evaluate(m, ptrs, 6), r1 = evaluate(m, ptrs, 1);
  const auto o6 = aggregate(six, 6), o1 = aggregate(one, 1);
  CHECK(r6.minade_k == o6.minade_k);
  CHECK(r6.minfde_k == o6.minfde_k);
  CHECK(r6.b_minfde_k == o6.b_minfde_k);
  CHECK(r6.mr_k == o6.mr_k);
  CHECK(r1.minade_k == o1.minade_k);
  CHECK(r1.minfde_k == o1.minfde_k);
  CHECK(r1.b_minfde_k == o1.b_minfde_k);
  CHECK(r1.mr_k == o1.mr_k);
  CHECK(r1.minade_k >= r6.minade_k);
  CHECK(r6.mr_k >= 0.0);
  CHECK(r6.mr_k <= 1.0);

  const auto again = evaluate(m, ptrs, 6);
  CHECK(again.to_json() == r6.to_json());
  CHECK_THROWS_AS(evaluate(m, std::vector<const data::Scenario*>{}, 6), ConfigError);
}
