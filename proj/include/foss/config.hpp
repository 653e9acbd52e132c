#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "foss/datagen.hpp"
#include "foss/model.hpp"

namespace foss {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global L2; 0 disables
};

struct PlateauConfig {
  std::size_t patience = 5;
  double factor = 0.1;
};

struct RunConfig {
  model::FoSSConfig model;
  OptimizerConfig optimizer;
  PlateauConfig plateau;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  std::string data_path = "data/scenarios.jsonl";
  std::string out_dir = "runs/default";

  void validate() const;
};

/// "argo1-like" (2 s observed / 3 s future at 10 Hz) or "argo2-like"
/// (5 s / 6 s). ConfigError on other names.
void apply_preset(RunConfig& config, const std::string& preset);
data::Horizon horizon_of(const model::FoSSConfig& config);

nlohmann::ordered_json to_json(const model::FoSSConfig& c);
nlohmann::ordered_json to_json(const RunConfig& c);
/// Fields missing from `j` keep their current value in `c`; unknown keys
/// raise ConfigError.
void merge_json(model::FoSSConfig& c, const nlohmann::json& j);
void merge_json(RunConfig& c, const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);

}  // namespace foss
