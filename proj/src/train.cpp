#include "foss/train.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <numeric>
#include <thread>

#include "foss/errors.hpp"
#include "foss/metrics.hpp"

namespace foss::train {

Adam::Adam(const ParameterList& params, const OptimizerConfig& config) : params_(params), config_(config) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->numel(), 0.0);
    v_.emplace_back(p->numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    const auto g = p.grad();
    std::vector<double> w(p.value().data().begin(), p.value().data().end());
    for (std::size_t j = 0; j < w.size(); ++j) {
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g[j];
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g[j] * g[j];
      w[j] -= lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + config_.eps);
    }
    p.assign(w);
  }
}

double clip_global_norm(const ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->mutable_grad()) g *= s;
    }
  }
  return norm;
}

bool PlateauSchedule::observe(double metric) {
  if (!has_best_ || metric < best_) {
    best_ = metric;
    has_best_ = true;
    stale_ = 0;
    return true;
  }
  if (++stale_ >= config_.patience) {
    lr_ *= config_.factor;
    stale_ = 0;
  }
  return false;
}

std::string log_header() { return "epoch,l_time,l_freq,l_total,val_minade,lr"; }

std::string log_row(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", e.epoch, e.l_time, e.l_freq, e.l_total,
                e.val_minade, e.lr);
  return buf;
}

std::size_t threads_from_env() {
  const char* v = std::getenv("FOSS_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("FOSS_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

namespace {

Tensor points_tensor(const std::vector<data::Point>& pts, DType dtype) {
  std::vector<double> v;
  v.reserve(pts.size() * 2);
  for (const auto& p : pts) {
    v.push_back(p[0]);
    v.push_back(p[1]);
  }
  return Tensor::from({pts.size(), 2}, std::move(v), dtype);
}

struct SampleResult {
  std::unique_ptr<Tape> tape;
  model::LossBreakdown loss;
};

SampleResult run_sample(const model::FoSSModel& model, const data::Scenario& s) {
  SampleResult r;
  r.tape = std::make_unique<Tape>(Tape::Mode::record);
  const DType dt = model.config().dtype;
  const auto pred = model.forward(*r.tape, observed_tensor(s, dt));
  r.loss = model::loss(pred.final_trajectory, future_tensor(s, dt), model.config().lambda);
  if (std::isfinite(r.loss.l_total)) r.tape->backward(r.loss.total);
  return r;
}

}  // namespace

Tensor observed_tensor(const data::Scenario& s, DType dtype) { return points_tensor(s.observed, dtype); }
Tensor future_tensor(const data::Scenario& s, DType dtype) { return points_tensor(s.future, dtype); }

nlohmann::ordered_json checkpoint_metadata(const RunConfig& config, std::size_t epoch, double best_val) {
  nlohmann::ordered_json j;
  j["format_version"] = ckpt::kFormatVersion;
  j["config"] = to_json(config);
  j["epoch"] = epoch;
  j["best_val_minade"] = best_val;
  return j;
}

TrainResult fit(model::FoSSModel& model, const RunConfig& config, std::span<const data::Scenario* const> train,
                std::span<const data::Scenario* const> val, const TrainOptions& options) {
  config.validate();
  if (train.empty()) throw ConfigError("training split is empty");
  const auto monitor = val.empty() ? train : val;
  const ParameterList params = model.parameters();
  Adam adam(params, config.optimizer);
  PlateauSchedule schedule(config.optimizer.lr, config.plateau);
  const std::size_t threads = std::max<std::size_t>(1, options.threads);

  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open training log '" + options.log_path + "'");
    log << log_header() << '\n';
  }

  TrainResult result;
  std::vector<std::size_t> order(train.size());
  std::vector<SampleResult> batch(std::min(config.batch_size, train.size()));
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 shuffle(mix_seed(config.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    std::vector<double> lt, lf, ltot;
    const double lr = schedule.lr();
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t b = first; b < n; b += stride) batch[b] = run_sample(model, *train[order[start + b]]);
      };
      if (threads == 1 || n == 1) {
        work(0, 1);
      } else {
        std::vector<std::thread> pool;
        const std::size_t w = std::min(threads, n);
        for (std::size_t t = 0; t < w; ++t) pool.emplace_back(work, t, w);
        for (auto& th : pool) th.join();
      }

      for (Parameter* p : params) p->zero_grad();
      for (std::size_t b = 0; b < n; ++b) {
        const auto& loss = batch[b].loss;
        if (!std::isfinite(loss.l_total)) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(start / config.batch_size + 1) + ", scenario '" +
                               train[order[start + b]]->id + "'");
        }
        batch[b].tape->accumulate_parameter_grads();
        batch[b].tape.reset();
        lt.push_back(loss.l_time);
        lf.push_back(loss.l_freq);
        ltot.push_back(loss.l_total);
      }
      const double inv = 1.0 / static_cast<double>(n);
      for (Parameter* p : params) {
        for (double& g : p->mutable_grad()) g *= inv;
      }
      clip_global_norm(params, config.optimizer.clip_norm);
      adam.step(lr);
    }

    EpochLog e;
    e.epoch = epoch;
    const double count = static_cast<double>(ltot.size());
    e.l_time = metrics::pairwise_sum(lt) / count;
    e.l_freq = metrics::pairwise_sum(lf) / count;
    e.l_total = metrics::pairwise_sum(ltot) / count;
    e.val_minade = metrics::evaluate(model, monitor, config.model.k).minade_k;
    e.lr = lr;
    const bool improved = result.best_epoch == 0 || e.val_minade < result.best_val_minade;
    if (!val.empty()) schedule.observe(e.val_minade);
    if (improved) {
      result.best_val_minade = e.val_minade;
      result.best_epoch = epoch;
      if (!options.checkpoint_path.empty()) {
        ckpt::save(options.checkpoint_path,
                   ckpt::capture(params, checkpoint_metadata(config, epoch, e.val_minade)));
      }
    }
    if (log.is_open()) log << log_row(e) << '\n' << std::flush;
    result.history.push_back(e);
    if (options.on_epoch) options.on_epoch(e);
  }
  return result;
}

}  // namespace foss::train
