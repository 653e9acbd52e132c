#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "foss/ablate.hpp"
#include "foss/bench.hpp"
#include "foss/checkpoint.hpp"
#include "foss/config.hpp"
#include "foss/datagen.hpp"
#include "foss/diagnostics.hpp"
#include "foss/errors.hpp"
#include "foss/helixsort.hpp"
#include "foss/metrics.hpp"
#include "foss/spectral.hpp"
#include "foss/train.hpp"

namespace fs = std::filesystem;
using namespace foss;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> k;
  std::string preset;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON run config");
  app->add_option("--seed", c.seed, "Global seed");
  app->add_option("--out", c.out, "Output path");
  app->add_option("--k", c.k, "Number of candidates evaluated");
  app->add_option("--preset", c.preset, "Horizon preset")->check(CLI::IsMember({"argo1-like", "argo2-like"}));
}

// File values first, then the preset, then explicit flags.
RunConfig resolve(const Common& c) {
  RunConfig rc = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (!c.preset.empty()) apply_preset(rc, c.preset);
  if (c.seed) rc.seed = *c.seed;
  rc.validate();
  return rc;
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  file.open(path, std::ios::trunc);
  if (!file) throw IoError("cannot open '" + path + "' for writing");
  return file;
}

std::vector<const data::Scenario*> pick(const std::vector<data::Scenario>& all, const std::string& split) {
  if (split == "all") {
    std::vector<const data::Scenario*> out;
    for (const auto& s : all) out.push_back(&s);
    return out;
  }
  return data::select_split(all, split);
}

const data::Scenario& find_scenario(const std::vector<data::Scenario>& all, const std::string& id) {
  for (const auto& s : all) {
    if (s.id == id) return s;
  }
  throw ConfigError("no scenario with id '" + id + "'");
}

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<model::FoSSModel> model;
};

LoadedModel load_model(const std::string& path) {
  const auto ck = ckpt::load(path);
  LoadedModel out;
  if (!ck.metadata.contains("config")) throw CheckpointError("checkpoint metadata has no config");
  merge_json(out.config, ck.metadata.at("config"));
  out.model = std::make_unique<model::FoSSModel>(out.config.model);
  ckpt::restore(ck, out.model->parameters());
  return out;
}

int cmd_gen_data(const Common& c, const std::vector<std::size_t>& counts, std::optional<double> noise) {
  RunConfig rc = resolve(c);
  if (counts.size() != data::kMotifCount) throw ConfigError("--counts needs 4 values");
  data::ParamRanges ranges;
  if (noise) ranges.noise_sigma = *noise;
  const std::string path = c.out.empty() ? rc.data_path : c.out;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  const auto all = data::generate_dataset({counts[0], counts[1], counts[2], counts[3]}, ranges, rc.seed, path,
                                          horizon_of(rc.model));
  nlohmann::ordered_json j;
  j["path"] = path;
  j["records"] = all.size();
  j["train"] = data::select_split(all, "train").size();
  j["val"] = data::select_split(all, "val").size();
  j["test"] = data::select_split(all, "test").size();
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::string& data_path, std::optional<std::size_t> epochs) {
  RunConfig rc = resolve(c);
  if (!data_path.empty()) rc.data_path = data_path;
  if (!c.out.empty()) rc.out_dir = c.out;
  if (epochs) rc.epochs = *epochs;
  if (c.k) rc.model.k = *c.k;
  rc.validate();
  const auto all = data::load_scenarios(rc.data_path, horizon_of(rc.model));
  const auto tr = data::select_split(all, "train");
  const auto va = data::select_split(all, "val");
  fs::create_directories(rc.out_dir);
  {
    std::ofstream f(fs::path(rc.out_dir) / "config.json");
    f << to_json(rc).dump(2) << '\n';
  }
  model::FoSSModel m(rc.model);
  train::TrainOptions opts;
  opts.log_path = (fs::path(rc.out_dir) / "train_log.csv").string();
  opts.checkpoint_path = (fs::path(rc.out_dir) / "best.ckpt").string();
  opts.threads = train::threads_from_env();
  opts.on_epoch = [](const train::EpochLog& e) { std::cerr << train::log_row(e) << '\n'; };
  const auto result = train::fit(m, rc, tr, va, opts);
  nlohmann::ordered_json j;
  j["epochs"] = result.history.size();
  j["best_epoch"] = result.best_epoch;
  j["best_val_minade"] = result.best_val_minade;
  j["final_l_total"] = result.history.empty() ? 0.0 : result.history.back().l_total;
  j["checkpoint"] = opts.checkpoint_path;
  j["log"] = opts.log_path;
  j["param_count"] = m.param_count();
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data_path, const std::string& split) {
  const auto lm = load_model(checkpoint);
  const std::string path = data_path.empty() ? lm.config.data_path : data_path;
  const auto all = data::load_scenarios(path, horizon_of(lm.config.model));
  const auto report = metrics::evaluate(*lm.model, pick(all, split), c.k.value_or(lm.config.model.k));
  std::ofstream file;
  std::ostream& os = open_out(c.out, file);
  os << metrics::EvalReport::csv_header() << '\n' << report.to_csv_row() << '\n';
  std::cout << report.to_json() << '\n';
  return 0;
}

int cmd_predict(const Common& c, const std::string& checkpoint, const std::string& data_path, const std::string& id) {
  const auto lm = load_model(checkpoint);
  const std::string path = data_path.empty() ? lm.config.data_path : data_path;
  const auto all = data::load_scenarios(path, horizon_of(lm.config.model));
  auto cands = metrics::predict(*lm.model, find_scenario(all, id));
  if (c.k) cands = metrics::top_k(cands, *c.k);
  std::ofstream file;
  std::ostream& os = open_out(c.out, file);
  os << "t,k,x,y,p_k\n";
  char buf[160];
  for (std::size_t k = 0; k < cands.trajectories.size(); ++k) {
    for (std::size_t t = 0; t < cands.trajectories[k].size(); ++t) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.9f\n", t, k, cands.trajectories[k][t][0],
                    cands.trajectories[k][t][1], cands.probabilities[k]);
      os << buf;
    }
  }
  return 0;
}

int cmd_bench(const Common& c, const std::vector<std::size_t>& lengths, std::size_t repeats,
              const std::vector<std::string>& components) {
  bench::Options o;
  if (!lengths.empty()) o.lengths = lengths;
  if (!components.empty()) o.components = components;
  o.repeats = repeats;
  o.seed = c.seed.value_or(0);
  const auto rows = bench::run(o);
  std::ofstream file;
  std::ostream& os = open_out(c.out, file);
  os << bench::csv_header() << '\n';
  for (const auto& r : rows) os << bench::csv_row(r) << '\n';
  nlohmann::ordered_json j;
  for (const auto& comp : o.components) {
    if (o.lengths.size() > 1) j["scaling_ratio"][comp] = bench::scaling_ratio(rows, comp);
  }
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_gradcheck(const Common& c, std::size_t points) {
  const std::uint64_t seed = c.seed.value_or(0);
  auto results = diag::primitive_checks(seed, points);
  for (auto& r : diag::module_checks(seed, points)) results.push_back(r);
  results.push_back(diag::end_to_end_check(seed, points));
  std::ofstream file;
  std::ostream& os = open_out(c.out, file);
  os << diag::csv_header() << '\n';
  std::size_t failed = 0;
  double worst = 0.0;
  for (const auto& r : results) {
    os << diag::csv_row(r) << '\n';
    failed += r.passed() ? 0 : 1;
    worst = std::max(worst, r.report.max_relative_error);
  }
  nlohmann::ordered_json j;
  j["checks"] = results.size();
  j["failed"] = failed;
  j["max_relative_error"] = worst;
  std::cout << j.dump() << '\n';
  return failed == 0 ? 0 : 1;
}

int cmd_ablate(const Common& c, const std::string& data_path, const std::string& test_path,
               const std::vector<std::uint64_t>& seeds, std::optional<std::size_t> epochs) {
  RunConfig rc = resolve(c);
  if (!data_path.empty()) rc.data_path = data_path;
  if (epochs) rc.epochs = *epochs;
  if (c.k) rc.model.k = *c.k;
  rc.validate();
  const auto horizon = horizon_of(rc.model);
  const auto all = data::load_scenarios(rc.data_path, horizon);
  std::vector<data::Scenario> test_all;
  std::vector<const data::Scenario*> te;
  if (test_path.empty()) {
    te = data::select_split(all, "test");
  } else {
    test_all = data::load_scenarios(test_path, horizon);
    te = pick(test_all, "all");
  }
  const auto rows = ablate::run(rc, ablate::standard_variants(), seeds, data::select_split(all, "train"),
                                data::select_split(all, "val"), te, train::threads_from_env(),
                                [](const ablate::Row& r) { std::cerr << ablate::csv_row(r) << '\n'; });
  std::ofstream file;
  std::ostream& os = open_out(c.out, file);
  os << ablate::csv_header() << '\n';
  for (const auto& r : rows) os << ablate::csv_row(r) << '\n';
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& s : ablate::summarize(rows)) {
    j.push_back({{"variant", s.variant},
                 {"runs", s.runs},
                 {"minade_k", s.mean_minade},
                 {"minfde_k", s.mean_minfde},
                 {"mr_k", s.mean_mr},
                 {"b_minfde_k", s.mean_b_minfde}});
  }
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_inspect_spectrum(const Common& c, const std::string& data_path, const std::string& id, bool use_helix,
                         const std::string& part) {
  RunConfig rc = resolve(c);
  const auto all = data::load_scenarios(data_path.empty() ? rc.data_path : data_path);
  const auto& s = find_scenario(all, id);
  const auto& pts = part == "future" ? s.future : s.observed;
  const Tensor x = part == "future" ? train::future_tensor(s, DType::f64) : train::observed_tensor(s, DType::f64);
  const auto polar = spectral::to_polar(spectral::dft_forward(x));
  const auto perm = use_helix ? helix::build_helix_permutation(pts.size()) : helix::HelixPermutation::identity(pts.size());
  std::ofstream file;
  std::ostream& os = open_out(c.out, file);
  os << "position,frequency,radius,dim,amplitude,phase\n";
  char buf[160];
  for (std::size_t pos = 0; pos < perm.length; ++pos) {
    const std::size_t f = perm.pi[pos];
    for (std::size_t d = 0; d < 2; ++d) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%zu,%.9g,%.9g\n", pos, f, use_helix ? perm.radii[pos] : 0.0, d,
                    polar.amplitude.at(f, d), polar.phase.at(f, d));
      os << buf;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-branch spectral/state-space trajectory predictor"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scenario file");
  add_common(gen, common);
  std::vector<std::size_t> counts{250, 250, 250, 250};
  std::optional<double> noise;
  gen->add_option("--counts", counts, "Scenarios per motif: straight turn lane_change u_turn")->expected(4);
  gen->add_option("--noise", noise, "Position noise sigma in meters");

  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr, common);
  std::string data_path;
  std::optional<std::size_t> epochs;
  tr->add_option("--data", data_path, "Scenario file");
  tr->add_option("--epochs", epochs, "Epoch count");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev, common);
  std::string checkpoint, split = "test";
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", data_path, "Scenario file");
  ev->add_option("--split", split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));

  auto* pr = app.add_subcommand("predict", "Candidate trajectories for one scenario as CSV");
  add_common(pr, common);
  std::string id;
  pr->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  pr->add_option("--data", data_path, "Scenario file");
  pr->add_option("--id", id, "Scenario id")->required();

  auto* be = app.add_subcommand("bench", "Time components across sequence lengths");
  add_common(be, common);
  std::vector<std::size_t> lengths;
  std::vector<std::string> components;
  std::size_t repeats = 5;
  be->add_option("--lengths", lengths, "Sequence lengths");
  be->add_option("--components", components, "selective_scan helixsort fd_branch fuse naive_attention");
  be->add_option("--repeats", repeats, "Timed repeats per point");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks over every module");
  add_common(gc, common);
  std::size_t points = 10;
  gc->add_option("--points", points, "Random points per check");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate the ablation variants");
  add_common(ab, common);
  std::string test_path;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  ab->add_option("--data", data_path, "Scenario file (train/val splits used)");
  ab->add_option("--test-data", test_path, "Separate test file (all records used)");
  ab->add_option("--seeds", seeds, "Training seeds");
  ab->add_option("--epochs", epochs, "Epoch count");

  auto* is = app.add_subcommand("inspect-spectrum", "Amplitude and phase of a scenario's spectrum");
  add_common(is, common);
  bool use_helix = false;
  std::string part = "observed";
  is->add_option("--data", data_path, "Scenario file");
  is->add_option("--id", id, "Scenario id")->required();
  is->add_flag("--helix", use_helix, "List coefficients in helix order");
  is->add_option("--part", part, "observed or future")->check(CLI::IsMember({"observed", "future"}));

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_gen_data(common, counts, noise);
    if (tr->parsed()) return cmd_train(common, data_path, epochs);
    if (ev->parsed()) return cmd_eval(common, checkpoint, data_path, split);
    if (pr->parsed()) return cmd_predict(common, checkpoint, data_path, id);
    if (be->parsed()) return cmd_bench(common, lengths, repeats, components);
    if (gc->parsed()) return cmd_gradcheck(common, points);
    if (ab->parsed()) return cmd_ablate(common, data_path, test_path, seeds, epochs);
    if (is->parsed()) return cmd_inspect_spectrum(common, data_path, id, use_helix, part);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
