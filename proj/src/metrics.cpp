#include "foss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "foss/errors.hpp"
#include "foss/model.hpp"

namespace foss::metrics {

namespace {

double dist(const Point& a, const Point& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

void check(const Candidates& c, std::span<const Point> truth) {
  if (c.trajectories.empty()) throw DimensionError("metrics: empty candidate set");
  if (c.probabilities.size() != c.trajectories.size()) {
    throw DimensionError("metrics: " + std::to_string(c.trajectories.size()) + " candidates but " +
                         std::to_string(c.probabilities.size()) + " probabilities");
  }
  if (truth.empty()) throw DimensionError("metrics: empty ground truth");
  for (const auto& t : c.trajectories) {
    if (t.size() != truth.size()) {
      throw DimensionError("metrics: candidate length " + std::to_string(t.size()) + " vs truth " +
                           std::to_string(truth.size()));
    }
  }
}

double ade(const std::vector<Point>& cand, std::span<const Point> truth) {
  std::vector<double> d(truth.size());
  for (std::size_t t = 0; t < truth.size(); ++t) d[t] = dist(cand[t], truth[t]);
  return pairwise_sum(d) / static_cast<double>(truth.size());
}

}  // namespace

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

double minade(const Candidates& c, std::span<const Point> truth) {
  check(c, truth);
  double best = ade(c.trajectories[0], truth);
  for (std::size_t k = 1; k < c.trajectories.size(); ++k) best = std::min(best, ade(c.trajectories[k], truth));
  return best;
}

std::size_t best_final_index(const Candidates& c, std::span<const Point> truth) {
  check(c, truth);
  std::size_t best = 0;
  double best_d = dist(c.trajectories[0].back(), truth.back());
  for (std::size_t k = 1; k < c.trajectories.size(); ++k) {
    const double d = dist(c.trajectories[k].back(), truth.back());
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

double minfde(const Candidates& c, std::span<const Point> truth) {
  return dist(c.trajectories[best_final_index(c, truth)].back(), truth.back());
}

double b_minfde(const Candidates& c, std::span<const Point> truth) {
  const std::size_t k = best_final_index(c, truth);
  const double miss_p = 1.0 - c.probabilities[k];
  return dist(c.trajectories[k].back(), truth.back()) + miss_p * miss_p;
}

bool is_miss(const Candidates& c, std::span<const Point> truth) { return minfde(c, truth) > kMissThreshold; }

Candidates top_k(const Candidates& c, std::size_t k) {
  if (k == 0) throw ConfigError("K must be >= 1");
  if (k >= c.trajectories.size()) return c;
  std::vector<std::size_t> idx(c.trajectories.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return c.probabilities[a] > c.probabilities[b]; });
  Candidates out;
  for (std::size_t i = 0; i < k; ++i) {
    out.trajectories.push_back(c.trajectories[idx[i]]);
    out.probabilities.push_back(c.probabilities[idx[i]]);
  }
  return out;
}

ScenarioMetrics score(const Candidates& c, std::span<const Point> truth) {
  ScenarioMetrics m;
  m.ade = minade(c, truth);
  m.fde = minfde(c, truth);
  m.b_fde = b_minfde(c, truth);
  m.miss = m.fde > kMissThreshold;
  return m;
}

EvalReport aggregate(std::span<const ScenarioMetrics> scores, std::size_t k) {
  if (scores.empty()) throw ConfigError("evaluate: no scenarios in split");
  const std::size_t n = scores.size();
  std::vector<double> a(n), f(n), b(n), m(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = scores[i].ade;
    f[i] = scores[i].fde;
    b[i] = scores[i].b_fde;
    m[i] = scores[i].miss ? 1.0 : 0.0;
  }
  const double dn = static_cast<double>(n);
  EvalReport r;
  r.minade_k = pairwise_sum(a) / dn;
  r.minfde_k = pairwise_sum(f) / dn;
  r.b_minfde_k = pairwise_sum(b) / dn;
  r.mr_k = pairwise_sum(m) / dn;
  r.k = k;
  r.n_scenarios = n;
  return r;
}

Candidates predict(const model::FoSSModel& model, const data::Scenario& scenario) {
  const auto& cfg = model.config();
  std::vector<double> x;
  x.reserve(scenario.observed.size() * 2);
  for (const auto& p : scenario.observed) {
    x.push_back(p[0]);
    x.push_back(p[1]);
  }
  Tape tape(Tape::Mode::inference);
  const auto pred = model.forward(tape, Tensor::from({scenario.observed.size(), 2}, std::move(x), cfg.dtype));
  const auto traj = pred.candidates.trajectories.data();
  const auto prob = pred.candidates.probabilities.data();
  const std::size_t K = pred.candidates.trajectories.dim(0), T = pred.candidates.trajectories.dim(1);
  Candidates out;
  out.trajectories.assign(K, std::vector<Point>(T));
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < T; ++t) out.trajectories[k][t] = {traj[(k * T + t) * 2], traj[(k * T + t) * 2 + 1]};
  }
  out.probabilities.assign(prob.begin(), prob.end());
  return out;
}

EvalReport evaluate(const model::FoSSModel& model, std::span<const data::Scenario* const> scenarios,
                    std::size_t k) {
  if (scenarios.empty()) throw ConfigError("evaluate: no scenarios in split");
  std::vector<ScenarioMetrics> scores;
  scores.reserve(scenarios.size());
  for (const auto* s : scenarios) scores.push_back(score(top_k(predict(model, *s), k), s->future));
  return aggregate(scores, k);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["minade_k"] = minade_k;
  j["minfde_k"] = minfde_k;
  j["mr_k"] = mr_k;
  j["b_minfde_k"] = b_minfde_k;
  j["k"] = k;
  j["n_scenarios"] = n_scenarios;
  return j.dump();
}

std::string EvalReport::csv_header() { return "k,n_scenarios,minade_k,minfde_k,mr_k,b_minfde_k"; }

std::string EvalReport::to_csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g,%.9g", k, n_scenarios, minade_k, minfde_k, mr_k,
                b_minfde_k);
  return buf;
}

}  // namespace foss::metrics
