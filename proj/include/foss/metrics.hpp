#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "foss/datagen.hpp"

namespace foss::model {
class FoSSModel;
}

namespace foss::metrics {

using data::Point;

/// K candidate trajectories (each T points) with their probabilities.
struct Candidates {
  std::vector<std::vector<Point>> trajectories;
  std::vector<double> probabilities;
};

/// Strict threshold: a best final error above this counts as a miss.
inline constexpr double kMissThreshold = 2.0;

double minade(const Candidates& c, std::span<const Point> truth);
double minfde(const Candidates& c, std::span<const Point> truth);
/// Index attaining minFDE; the lowest index wins ties.
std::size_t best_final_index(const Candidates& c, std::span<const Point> truth);
/// minFDE + (1 - p_best)^2.
double b_minfde(const Candidates& c, std::span<const Point> truth);
bool is_miss(const Candidates& c, std::span<const Point> truth);

/// The k most probable candidates (stable: equal probabilities keep their
/// original order). Probabilities are not renormalized.
Candidates top_k(const Candidates& c, std::size_t k);

struct ScenarioMetrics {
  double ade = 0.0;
  double fde = 0.0;
  double b_fde = 0.0;
  bool miss = false;
};

ScenarioMetrics score(const Candidates& c, std::span<const Point> truth);

struct EvalReport {
  double minade_k = 0.0;
  double minfde_k = 0.0;
  double mr_k = 0.0;
  double b_minfde_k = 0.0;
  std::size_t k = 0;
  std::size_t n_scenarios = 0;

  std::string to_json() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

/// Pairwise (cascade) summation; the grouping depends only on the length.
double pairwise_sum(std::span<const double> values);

/// Averages per-scenario scores. Raises ConfigError when empty.
EvalReport aggregate(std::span<const ScenarioMetrics> scores, std::size_t k);

/// Runs the model on every scenario (inference tape), keeps the top-K
/// candidates and aggregates. K = 1 is the argmax-probability candidate.
EvalReport evaluate(const model::FoSSModel& model, std::span<const data::Scenario* const> scenarios,
                    std::size_t k);

/// Model output for one scenario as plain candidates.
Candidates predict(const model::FoSSModel& model, const data::Scenario& scenario);

}  // namespace foss::metrics
