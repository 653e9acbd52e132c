#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "foss/checkpoint.hpp"
#include "foss/config.hpp"
#include "foss/datagen.hpp"
#include "foss/model.hpp"

namespace foss::train {

/// Adam with bias correction. State is kept per parameter in list order.
class Adam {
 public:
  Adam(const ParameterList& params, const OptimizerConfig& config);
  void step(double lr);
  std::size_t steps() const { return t_; }

 private:
  ParameterList params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Scales every gradient so that the global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(const ParameterList& params, double max_norm);

/// Multiplies the learning rate by `factor` once the monitored value has not
/// strictly improved for `patience` consecutive epochs.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, const PlateauConfig& config) : lr_(lr), config_(config) {}
  /// Feeds one epoch's metric; returns true if it is a new best.
  bool observe(double metric);
  double lr() const { return lr_; }
  std::size_t stale_epochs() const { return stale_; }
  double best() const { return best_; }

 private:
  double lr_;
  PlateauConfig config_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t stale_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double l_time = 0.0;
  double l_freq = 0.0;
  double l_total = 0.0;
  double val_minade = 0.0;
  double lr = 0.0;
};

std::string log_header();
std::string log_row(const EpochLog& e);

struct TrainOptions {
  std::string log_path;         // CSV log; empty disables
  std::string checkpoint_path;  // best-by-validation checkpoint; empty disables
  std::size_t threads = 1;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> history;
  double best_val_minade = 0.0;
  std::size_t best_epoch = 0;
};

/// Worker count from FOSS_THREADS (default 1, at least 1).
std::size_t threads_from_env();

/// Mini-batch training of `model` on `train`. Validation minADE_K on `val`
/// drives the plateau schedule and checkpointing. With an empty `val` the
/// learning rate stays fixed and training-set minADE_K picks the checkpoint.
/// The model is left at its final weights.
TrainResult fit(model::FoSSModel& model, const RunConfig& config, std::span<const data::Scenario* const> train,
                std::span<const data::Scenario* const> val, const TrainOptions& options = {});

/// Observed and future positions as [T x 2] tensors.
Tensor observed_tensor(const data::Scenario& s, DType dtype);
Tensor future_tensor(const data::Scenario& s, DType dtype);

nlohmann::ordered_json checkpoint_metadata(const RunConfig& config, std::size_t epoch, double best_val);

}  // namespace foss::train
