#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "foss/config.hpp"
#include "foss/metrics.hpp"

namespace foss::ablate {

struct Variant {
  std::string name;
  model::AblationFlags flags;
};

/// full, no_fd_branch, identity_helix, identity_fourier_ssm, concat_mlp_fusion.
std::vector<Variant> standard_variants();

struct Row {
  std::string variant;
  std::uint64_t seed = 0;
  metrics::EvalReport test;
  double train_seconds = 0.0;
};

struct Summary {
  std::string variant;
  double mean_minade = 0.0;
  double mean_minfde = 0.0;
  double mean_mr = 0.0;
  double mean_b_minfde = 0.0;
  std::size_t runs = 0;
};

/// Trains every variant once per seed (the seed drives initialization and
/// batch order) and evaluates minADE_K on `test`.
std::vector<Row> run(const RunConfig& base, const std::vector<Variant>& variants,
                     std::span<const std::uint64_t> seeds, std::span<const data::Scenario* const> train,
                     std::span<const data::Scenario* const> val, std::span<const data::Scenario* const> test,
                     std::size_t threads = 1, const std::function<void(const Row&)>& on_row = {});

/// Per-variant means, in the order variants first appear in `rows`.
std::vector<Summary> summarize(std::span<const Row> rows);

std::string csv_header();
std::string csv_row(const Row& r);

}  // namespace foss::ablate
