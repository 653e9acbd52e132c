#include "foss/config.hpp"

#include <fstream>
#include <set>

#include "foss/errors.hpp"

namespace foss {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw ConfigError("dtype must be f32 or f64, got '" + s + "'");
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (!(optimizer.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(optimizer.eps > 0.0)) throw ConfigError("Adam eps must be > 0");
  if (!(optimizer.clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
  if (!(plateau.factor > 0.0 && plateau.factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
  if (plateau.patience < 1) throw ConfigError("plateau patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void apply_preset(RunConfig& config, const std::string& preset) {
  if (preset == "argo1-like") {
    config.model.t_obs = 20;
    config.model.t_fut = 30;
  } else if (preset == "argo2-like") {
    config.model.t_obs = 50;
    config.model.t_fut = 60;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (argo1-like, argo2-like)");
  }
}

data::Horizon horizon_of(const model::FoSSConfig& config) { return {config.t_obs, config.t_fut, 0.1}; }

nlohmann::ordered_json to_json(const model::FoSSConfig& c) {
  nlohmann::ordered_json j;
  j["t_obs"] = c.t_obs;
  j["t_fut"] = c.t_fut;
  j["d_raw"] = c.d_raw;
  j["d_model"] = c.d_model;
  j["state_size"] = c.state_size;
  j["generator_hidden"] = c.generator_hidden;
  j["conv_width"] = c.conv_width;
  j["dwconv_width"] = c.dwconv_width;
  j["head_hidden"] = c.head_hidden;
  j["heads"] = c.heads;
  j["k"] = c.k;
  j["lambda"] = c.lambda;
  j["coord_scale"] = c.coord_scale;
  j["dtype"] = c.dtype == DType::f32 ? "f32" : "f64";
  j["init_seed"] = c.init_seed;
  j["disable_fd_branch"] = c.ablation.disable_fd_branch;
  j["identity_helix"] = c.ablation.identity_helix;
  j["identity_fourier_ssm"] = c.ablation.identity_fourier_ssm;
  j["concat_mlp_fusion"] = c.ablation.concat_mlp_fusion;
  j["specevolve_prose_mode"] = c.ablation.specevolve_prose_mode;
  j["eq7_output_only"] = c.ablation.eq7_output_only;
  return j;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = to_json(c.model);
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"clip_norm", c.optimizer.clip_norm}};
  j["plateau"] = {{"patience", c.plateau.patience}, {"factor", c.plateau.factor}};
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["data_path"] = c.data_path;
  j["out_dir"] = c.out_dir;
  return j;
}

void merge_json(model::FoSSConfig& c, const json& j) {
  reject_unknown(j,
                 {"t_obs", "t_fut", "d_raw", "d_model", "state_size", "generator_hidden", "conv_width",
                  "dwconv_width", "head_hidden", "heads", "k", "lambda", "coord_scale", "dtype", "init_seed",
                  "disable_fd_branch", "identity_helix", "identity_fourier_ssm", "concat_mlp_fusion",
                  "specevolve_prose_mode", "eq7_output_only"},
                 "model");
  read(j, "t_obs", c.t_obs);
  read(j, "t_fut", c.t_fut);
  read(j, "d_raw", c.d_raw);
  read(j, "d_model", c.d_model);
  read(j, "state_size", c.state_size);
  read(j, "generator_hidden", c.generator_hidden);
  read(j, "conv_width", c.conv_width);
  read(j, "dwconv_width", c.dwconv_width);
  read(j, "head_hidden", c.head_hidden);
  read(j, "heads", c.heads);
  read(j, "k", c.k);
  read(j, "lambda", c.lambda);
  read(j, "coord_scale", c.coord_scale);
  if (j.contains("dtype")) {
    std::string d;
    read(j, "dtype", d);
    c.dtype = parse_dtype(d);
  }
  read(j, "init_seed", c.init_seed);
  read(j, "disable_fd_branch", c.ablation.disable_fd_branch);
  read(j, "identity_helix", c.ablation.identity_helix);
  read(j, "identity_fourier_ssm", c.ablation.identity_fourier_ssm);
  read(j, "concat_mlp_fusion", c.ablation.concat_mlp_fusion);
  read(j, "specevolve_prose_mode", c.ablation.specevolve_prose_mode);
  read(j, "eq7_output_only", c.ablation.eq7_output_only);
}

void merge_json(RunConfig& c, const json& j) {
  reject_unknown(j, {"model", "optimizer", "plateau", "batch_size", "epochs", "seed", "data_path", "out_dir", "preset"},
                 "config");
  if (j.contains("preset")) apply_preset(c, j.at("preset").get<std::string>());
  if (j.contains("model")) merge_json(c.model, j.at("model"));
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    reject_unknown(o, {"lr", "beta1", "beta2", "eps", "clip_norm"}, "optimizer");
    read(o, "lr", c.optimizer.lr);
    read(o, "beta1", c.optimizer.beta1);
    read(o, "beta2", c.optimizer.beta2);
    read(o, "eps", c.optimizer.eps);
    read(o, "clip_norm", c.optimizer.clip_norm);
  }
  if (j.contains("plateau")) {
    const auto& p = j.at("plateau");
    reject_unknown(p, {"patience", "factor"}, "plateau");
    read(p, "patience", c.plateau.patience);
    read(p, "factor", c.plateau.factor);
  }
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "seed", c.seed);
  read(j, "data_path", c.data_path);
  read(j, "out_dir", c.out_dir);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  RunConfig c;
  merge_json(c, j);
  c.validate();
  return c;
}

}  // namespace foss
