#include "foss/ablate.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "foss/train.hpp"

namespace foss::ablate {

std::vector<Variant> standard_variants() {
  std::vector<Variant> v(5);
  v[0].name = "full";
  v[1].name = "no_fd_branch";
  v[1].flags.disable_fd_branch = true;
  v[2].name = "identity_helix";
  v[2].flags.identity_helix = true;
  v[3].name = "identity_fourier_ssm";
  v[3].flags.identity_fourier_ssm = true;
  v[4].name = "concat_mlp_fusion";
  v[4].flags.concat_mlp_fusion = true;
  return v;
}

std::vector<Row> run(const RunConfig& base, const std::vector<Variant>& variants,
                     std::span<const std::uint64_t> seeds, std::span<const data::Scenario* const> train,
                     std::span<const data::Scenario* const> val, std::span<const data::Scenario* const> test,
                     std::size_t threads, const std::function<void(const Row&)>& on_row) {
  std::vector<Row> rows;
  for (std::uint64_t seed : seeds) {
    for (const auto& variant : variants) {
      RunConfig cfg = base;
      cfg.seed = seed;
      cfg.model.init_seed = seed;
      cfg.model.ablation = variant.flags;
      model::FoSSModel model(cfg.model);
      train::TrainOptions opts;
      opts.threads = threads;
      const auto t0 = std::chrono::steady_clock::now();
      train::fit(model, cfg, train, val, opts);
      const auto t1 = std::chrono::steady_clock::now();
      Row row;
      row.variant = variant.name;
      row.seed = seed;
      row.test = metrics::evaluate(model, test, cfg.model.k);
      row.train_seconds = std::chrono::duration<double>(t1 - t0).count();
      if (on_row) on_row(row);
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<Summary> summarize(std::span<const Row> rows) {
  std::vector<Summary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const Summary& s) { return s.variant == r.variant; });
    if (it == out.end()) {
      out.push_back({r.variant});
      it = out.end() - 1;
    }
    it->mean_minade += r.test.minade_k;
    it->mean_minfde += r.test.minfde_k;
    it->mean_mr += r.test.mr_k;
    it->mean_b_minfde += r.test.b_minfde_k;
    ++it->runs;
  }
  for (auto& s : out) {
    const double n = static_cast<double>(s.runs);
    s.mean_minade /= n;
    s.mean_minfde /= n;
    s.mean_mr /= n;
    s.mean_b_minfde /= n;
  }
  return out;
}

std::string csv_header() { return "variant,seed,k,n_scenarios,minade_k,minfde_k,mr_k,b_minfde_k,train_seconds"; }

std::string csv_row(const Row& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, ",%.3f", r.train_seconds);
  return r.variant + "," + std::to_string(r.seed) + "," + r.test.to_csv_row() + buf;
}

}  // namespace foss::ablate
