#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "foss/checkpoint.hpp"
#include "foss/config.hpp"
#include "foss/errors.hpp"
#include "foss/train.hpp"

using namespace foss;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "foss_test_cli";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& b, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

model::FoSSConfig tiny() {
  model::FoSSConfig c;
  c.t_obs = 6;
  c.t_fut = 5;
  c.d_model = 8;
  c.state_size = 4;
  c.generator_hidden = 8;
  c.head_hidden = 16;
  c.k = 3;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FOSS_CLI) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("run config defaults, validation and JSON merge") {
  RunConfig c;
  CHECK(c.optimizer.lr == 1e-3);
  CHECK(c.optimizer.beta1 == 0.9);
  CHECK(c.optimizer.beta2 == 0.999);
  CHECK(c.optimizer.eps == 1e-8);
  CHECK(c.plateau.patience == 5);
  CHECK(c.plateau.factor == 0.1);
  CHECK(c.epochs == 50);
  CHECK_NOTHROW(c.validate());

  auto bad = c;
  bad.optimizer.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.plateau.factor = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.plateau.patience = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  RunConfig m;
  merge_json(m, nlohmann::json::parse(R"({"epochs": 7, "model": {"d_model": 16, "k": 2}, "optimizer": {"lr": 0.01}})"));
  CHECK(m.epochs == 7);
  CHECK(m.model.d_model == 16);
  CHECK(m.model.k == 2);
  CHECK(m.optimizer.lr == 0.01);
  CHECK(m.batch_size == c.batch_size);
  CHECK_THROWS_AS(merge_json(m, nlohmann::json::parse(R"({"epochz": 7})")), ConfigError);

  RunConfig back;
  merge_json(back, nlohmann::json::parse(to_json(m).dump()));
  CHECK(to_json(back).dump() == to_json(m).dump());

  RunConfig p;
  apply_preset(p, "argo2-like");
  CHECK(p.model.t_obs == 50);
  CHECK(p.model.t_fut == 60);
  apply_preset(p, "argo1-like");
  CHECK(p.model.t_obs == 20);
  CHECK(p.model.t_fut == 30);
  CHECK_THROWS_AS(apply_preset(p, "argo3"), ConfigError);
}

TEST_CASE("checkpoint byte layout") {
  ckpt::Checkpoint c;
  c.tensors.push_back({"w", DType::f64, {2}, {1.5, -2.0}});
  c.metadata["a"] = 1;
  std::vector<std::uint8_t> want{'F', 'O', 'S', 'S', '1'};
  put_u32(want, 1);
  want.push_back(1);  // u16 name length
  want.push_back(0);
  want.push_back('w');
  want.push_back(1);  // f64
  want.push_back(1);  // rank
  put_u32(want, 2);
  put_f64(want, 1.5);
  put_f64(want, -2.0);
  const std::string meta = R"({"a":1})";
  put_u32(want, static_cast<std::uint32_t>(meta.size()));
  want.insert(want.end(), meta.begin(), meta.end());
  CHECK(ckpt::encode(c) == want);
}

TEST_CASE("checkpoint roundtrip and rejection") {
  model::FoSSModel m(tiny());
  nlohmann::ordered_json meta;
  meta["epoch"] = 3;
  const auto c = ckpt::capture(m.parameters(), meta);
  const auto path = scratch("model.ckpt");
  ckpt::save(path.string(), c);
  const auto loaded = ckpt::load(path.string());
  CHECK(ckpt::encode(loaded) == ckpt::encode(c));
  CHECK(loaded.metadata.dump() == meta.dump());

  auto cfg = tiny();
  cfg.init_seed = 99;
  model::FoSSModel other(cfg);
  ckpt::restore(loaded, other.parameters());
  CHECK(ckpt::encode(ckpt::capture(other.parameters(), meta)) == ckpt::encode(c));

  auto bytes = ckpt::encode(c);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(ckpt::decode(bad_magic), CheckpointMagicError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(ckpt::decode(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + cut)),
                    CheckpointTruncatedError);
  }

  auto dup = c;
  dup.tensors.push_back(dup.tensors.front());
  CHECK_THROWS_AS(ckpt::decode(ckpt::encode(dup)), CheckpointDuplicateError);

  auto missing = c;
  missing.tensors.erase(missing.tensors.begin());
  CHECK_THROWS_AS(ckpt::restore(missing, other.parameters()), CheckpointMissingError);

  auto wider = tiny();
  wider.d_model = 16;
  model::FoSSModel big(wider);
  CHECK_THROWS_AS(ckpt::restore(loaded, big.parameters()), CheckpointError);

  std::ofstream(scratch("junk.ckpt"), std::ios::binary) << "FOSS";
  CHECK_THROWS_AS(ckpt::load(scratch("junk.ckpt").string()), CheckpointTruncatedError);
  CHECK_THROWS_AS(ckpt::load(scratch("absent.ckpt").string()), IoError);
}

TEST_CASE("plateau schedule") {
  train::PlateauSchedule s(1e-3, PlateauConfig{});
  CHECK(s.observe(1.0));
  for (int i = 0; i < 4; ++i) CHECK_FALSE(s.observe(1.0));
  CHECK(s.lr() == 1e-3);
  CHECK_FALSE(s.observe(1.5));
  CHECK(std::abs(s.lr() - 1e-4) < 1e-18);

  train::PlateauSchedule t(1e-3, PlateauConfig{});
  t.observe(1.0);
  for (int i = 0; i < 4; ++i) t.observe(1.0);
  CHECK(t.observe(0.999));
  CHECK(t.stale_epochs() == 0);
  for (int i = 0; i < 4; ++i) t.observe(2.0);
  CHECK(t.lr() == 1e-3);
}

TEST_CASE("Adam first step and gradient clipping") {
  Parameter p("p", Tensor::from({3}, {1.0, 2.0, 3.0}));
  ParameterList list{&p};
  auto g = p.mutable_grad();
  g[0] = 0.5;
  g[1] = -4.0;
  g[2] = 0.0;
  train::Adam adam(list, OptimizerConfig{});
  adam.step(0.1);
  // Bias-corrected first step moves by lr * g / (|g| + eps).
  CHECK(std::abs(p.value()[0] - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))) < 1e-15);
  CHECK(std::abs(p.value()[1] - (2.0 + 0.1 * 4.0 / (4.0 + 1e-8))) < 1e-15);
  CHECK(p.value()[2] == 3.0);
  CHECK(adam.steps() == 1);

  auto h = p.mutable_grad();
  h[0] = 3.0;
  h[1] = 4.0;
  h[2] = 0.0;
  CHECK(train::clip_global_norm(list, 1.0) == 5.0);
  CHECK(std::abs(p.grad()[0] - 0.6) < 1e-15);
  CHECK(std::abs(p.grad()[1] - 0.8) < 1e-15);
  CHECK(train::clip_global_norm(list, 10.0) == doctest::Approx(1.0));
  CHECK(std::abs(p.grad()[0] - 0.6) < 1e-15);
}

TEST_CASE("training is deterministic and writes the best checkpoint") {
  RunConfig cfg;
  cfg.model = tiny();
  cfg.epochs = 3;
  cfg.batch_size = 4;
  const auto data = data::generate_dataset({4, 4, 4, 4}, data::ParamRanges{}, 3, data::Horizon{6, 5, 0.1});
  const auto tr = data::select_split(data, "train"), va = data::select_split(data, "val");
  auto run = [&](const std::string& tag) {
    model::FoSSModel m(cfg.model);
    train::TrainOptions o;
    o.log_path = scratch(tag + ".csv").string();
    o.checkpoint_path = scratch(tag + ".ckpt").string();
    const auto r = train::fit(m, cfg, tr, va, o);
    CHECK(r.history.size() == 3);
    CHECK(r.best_epoch >= 1);
    return r;
  };
  const auto a = run("a"), b = run("b");
  CHECK(slurp(scratch("a.csv")) == slurp(scratch("b.csv")));
  CHECK(slurp(scratch("a.ckpt")) == slurp(scratch("b.ckpt")));
  CHECK(slurp(scratch("a.csv")).rfind(train::log_header() + "\n", 0) == 0);
  const auto ck = ckpt::load(scratch("a.ckpt").string());
  CHECK(ck.metadata.at("epoch").get<std::size_t>() == a.best_epoch);
  CHECK(ck.metadata.at("best_val_minade").get<double>() == a.best_val_minade);

  auto threaded = cfg;
  model::FoSSModel m1(cfg.model), m2(cfg.model);
  train::TrainOptions two;
  two.threads = 2;
  const auto s1 = train::fit(m1, cfg, tr, va);
  const auto s2 = train::fit(m2, threaded, tr, va, two);
  CHECK(train::log_row(s1.history.back()) == train::log_row(s2.history.back()));
}

TEST_CASE("without a validation split the learning rate stays fixed") {
  RunConfig cfg;
  cfg.model = tiny();
  cfg.epochs = 12;
  cfg.batch_size = 8;
  cfg.plateau.patience = 1;
  cfg.optimizer.lr = 1e-12;  // the monitor stalls, so a scheduled run must decay
  const auto data = data::generate_dataset({2, 2, 2, 2}, data::ParamRanges{}, 6, data::Horizon{6, 5, 0.1});
  std::vector<const data::Scenario*> tr;
  for (const auto& s : data) tr.push_back(&s);
  model::FoSSModel m(cfg.model);
  const auto r = train::fit(m, cfg, tr, {});
  for (const auto& e : r.history) CHECK(e.lr == cfg.optimizer.lr);
  CHECK(r.best_epoch >= 1);

  model::FoSSModel v(cfg.model);
  const auto s = train::fit(v, cfg, tr, tr);
  CHECK(s.history.back().lr < cfg.optimizer.lr);
}

TEST_CASE("one scenario overfits at the desk configuration") {
  RunConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 1;
  const auto data = data::generate_dataset({0, 1, 0, 0}, data::ParamRanges{}, 4);
  const std::vector<const data::Scenario*> one{&data[0]};
  model::FoSSModel m(cfg.model);
  const auto r = train::fit(m, cfg, one, one);
  CHECK(r.history.back().l_total < 0.1 * r.history.front().l_total);
}

TEST_CASE("command line smoke") {
  const auto a = scratch("cli_a.jsonl"), b = scratch("cli_b.jsonl");
  REQUIRE(run_cli("gen-data --seed 5 --counts 2 2 2 2 --out " + a.string()) == 0);
  REQUIRE(run_cli("gen-data --seed 5 --counts 2 2 2 2 --out " + b.string()) == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(data::load_scenarios(a.string()).size() == 8);
  CHECK(run_cli("no-such-command") != 0);
  CHECK(run_cli("gen-data --preset argo9") != 0);
}
