#include "foss/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "foss/errors.hpp"
#include "foss/rng.hpp"

namespace foss::data {

namespace {

constexpr std::uint64_t kSplitStream = 0x5EED5EEDULL;

struct Pose {
  double x, y, heading;
};

// Noise-free state at step i of a trajectory that starts at the origin with
// heading 0.
Pose kinematics(Motif motif, const MotifParams& p, double curvature, std::size_t center, double dt,
                std::size_t i) {
  const double s = p.speed * dt * static_cast<double>(i);
  switch (motif) {
    case Motif::straight:
      return {s, 0.0, 0.0};
    case Motif::turn:
    case Motif::u_turn: {
      if (curvature == 0.0) return {s, 0.0, 0.0};
      const double th = curvature * s;
      return {std::sin(th) / curvature, (1.0 - std::cos(th)) / curvature, th};
    }
    case Motif::lane_change: {
      const double width = static_cast<double>(p.transition_steps) / 8.0;
      const double u = (static_cast<double>(i) - static_cast<double>(center)) / width;
      const double sig = 1.0 / (1.0 + std::exp(-u));
      const double dy = p.lateral_offset * sig * (1.0 - sig) / (width * p.speed * dt);
      return {s, p.lateral_offset * sig, std::atan(dy)};
    }
  }
  return {s, 0.0, 0.0};
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string out(buf);
  if (out == "-0.000000") out = "0.000000";
  return out;
}

void append_points(std::string& out, const std::vector<Point>& pts) {
  out += '[';
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) out += ',';
    out += '[' + format_fixed(pts[i][0]) + ',' + format_fixed(pts[i][1]) + ']';
  }
  out += ']';
}

std::vector<Point> parse_points(const nlohmann::json& j, const char* field) {
  if (!j.is_array()) throw std::invalid_argument(std::string(field) + " must be an array");
  std::vector<Point> out;
  out.reserve(j.size());
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw std::invalid_argument(std::string(field) + " entries must be [x, y] numbers");
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

}  // namespace

std::string to_string(Motif m) {
  switch (m) {
    case Motif::straight: return "straight";
    case Motif::turn: return "turn";
    case Motif::lane_change: return "lane_change";
    case Motif::u_turn: return "u_turn";
  }
  return "?";
}

Motif parse_motif(const std::string& name) {
  for (std::size_t i = 0; i < kMotifCount; ++i) {
    if (to_string(static_cast<Motif>(i)) == name) return static_cast<Motif>(i);
  }
  throw ConfigError("unknown motif '" + name + "'");
}

void MotifParams::validate() const {
  if (!(speed > 0.0) || !std::isfinite(speed)) throw ConfigError("motif speed must be > 0");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
  if (!std::isfinite(curvature) || !std::isfinite(lateral_offset)) throw ConfigError("motif params must be finite");
  if (transition_steps == 0) throw ConfigError("transition_steps must be >= 1");
}

void ParamRanges::validate() const {
  if (!(speed_min > 0.0) || speed_max < speed_min) throw ConfigError("invalid speed range");
  if (curvature_max < curvature_min || curvature_min < 0.0) throw ConfigError("invalid curvature range");
  if (offset_max < offset_min) throw ConfigError("invalid lateral offset range");
  if (transition_min == 0 || transition_max < transition_min) throw ConfigError("invalid transition range");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
}

Scenario generate_scenario(Motif motif, const MotifParams& params, std::uint64_t seed, const Horizon& horizon) {
  params.validate();
  if (horizon.t_obs < 2 || horizon.t_fut < 1 || !(horizon.dt > 0.0)) {
    throw ConfigError("horizon needs t_obs >= 2, t_fut >= 1 and dt > 0");
  }
  const std::size_t total = horizon.t_obs + horizon.t_fut;
  SplitMix64 rng(seed);
  double curvature = params.curvature;
  if (motif == Motif::u_turn) {
    // Segment headings run from kappa*s/2 to kappa*s*(total - 3/2).
    const double step = params.speed * horizon.dt;
    const double magnitude = std::numbers::pi / (step * static_cast<double>(total - 2));
    curvature = params.curvature < 0.0 ? -magnitude : magnitude;
  }
  const std::size_t center = motif == Motif::lane_change ? horizon.t_obs - 1 + rng.below(horizon.t_fut) : 0;

  const Pose ref = kinematics(motif, params, curvature, center, horizon.dt, horizon.t_obs - 1);
  const double c = std::cos(ref.heading), s = std::sin(ref.heading);
  Scenario out;
  out.dt = horizon.dt;
  out.motif = motif;
  out.observed.reserve(horizon.t_obs);
  out.future.reserve(horizon.t_fut);
  for (std::size_t i = 0; i < total; ++i) {
    const Pose p = kinematics(motif, params, curvature, center, horizon.dt, i);
    const double dx = p.x - ref.x, dy = p.y - ref.y;
    Point q{c * dx + s * dy, -s * dx + c * dy};
    if (params.noise_sigma > 0.0) {
      q[0] += rng.normal(0.0, params.noise_sigma);
      q[1] += rng.normal(0.0, params.noise_sigma);
    }
    (i < horizon.t_obs ? out.observed : out.future).push_back(q);
  }
  return out;
}

std::vector<Scenario> generate_dataset(const std::array<std::size_t, kMotifCount>& counts,
                                       const ParamRanges& ranges, std::uint64_t seed, const Horizon& horizon) {
  ranges.validate();
  std::vector<Scenario> out;
  std::size_t index = 0;
  for (std::size_t m = 0; m < kMotifCount; ++m) {
    const Motif motif = static_cast<Motif>(m);
    for (std::size_t j = 0; j < counts[m]; ++j, ++index) {
      SplitMix64 rng(mix_seed(seed, index));
      MotifParams p;
      p.speed = rng.uniform(ranges.speed_min, ranges.speed_max);
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      p.curvature = sign * rng.uniform(ranges.curvature_min, ranges.curvature_max);
      p.lateral_offset = sign * rng.uniform(ranges.offset_min, ranges.offset_max);
      p.transition_steps = ranges.transition_min + rng.below(ranges.transition_max - ranges.transition_min + 1);
      p.noise_sigma = ranges.noise_sigma;
      Scenario s = generate_scenario(motif, p, rng.next(), horizon);
      char id[32];
      std::snprintf(id, sizeof id, "scn-%06zu", index);
      s.id = id;
      out.push_back(std::move(s));
    }
  }

  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 shuffle(mix_seed(seed, kSplitStream));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
  const std::size_t n_train = out.size() * 70 / 100;
  const std::size_t n_val = out.size() * 15 / 100;
  for (std::size_t r = 0; r < order.size(); ++r) {
    out[order[r]].split = r < n_train ? "train" : r < n_train + n_val ? "val" : "test";
  }
  return out;
}

std::string to_json_line(const Scenario& s) {
  std::string out = "{\"id\":" + nlohmann::json(s.id).dump() + ",\"dt\":" + format_fixed(s.dt) +
                    ",\"motif\":\"" + to_string(s.motif) + "\",\"observed\":";
  append_points(out, s.observed);
  out += ",\"future\":";
  append_points(out, s.future);
  out += ",\"split\":" + nlohmann::json(s.split).dump() + '}';
  return out;
}

void write_scenarios(const std::string& path, const std::vector<Scenario>& scenarios) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& s : scenarios) f << to_json_line(s) << '\n';
  f.flush();
  if (!f) throw IoError("write to '" + path + "' failed");
}

std::vector<Scenario> generate_dataset(const std::array<std::size_t, kMotifCount>& counts,
                                       const ParamRanges& ranges, std::uint64_t seed, const std::string& path,
                                       const Horizon& horizon) {
  auto scenarios = generate_dataset(counts, ranges, seed, horizon);
  write_scenarios(path, scenarios);
  return scenarios;
}

void validate_scenario(const Scenario& s, std::optional<Horizon> expect) {
  if (!(s.dt > 0.0) || !std::isfinite(s.dt)) throw DataError(s.id, "dt must be positive");
  if (s.observed.empty() || s.future.empty()) throw DataError(s.id, "observed and future must be non-empty");
  if (expect && (s.observed.size() != expect->t_obs || s.future.size() != expect->t_fut)) {
    throw DataError(s.id, "expected " + std::to_string(expect->t_obs) + "/" + std::to_string(expect->t_fut) +
                              " steps, got " + std::to_string(s.observed.size()) + "/" +
                              std::to_string(s.future.size()));
  }
  if (s.split != "train" && s.split != "val" && s.split != "test") {
    throw DataError(s.id, "unknown split '" + s.split + "'");
  }
  const Point* prev = nullptr;
  std::size_t step = 0;
  for (const auto* seq : {&s.observed, &s.future}) {
    for (const auto& p : *seq) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw DataError(s.id, "non-finite position");
      if (prev && std::hypot(p[0] - (*prev)[0], p[1] - (*prev)[1]) > kMaxStepDisplacement) {
        throw DataError(s.id, "displacement above 5 m at step " + std::to_string(step));
      }
      prev = &p;
      ++step;
    }
  }
}

std::vector<Scenario> load_scenarios(const std::string& path, std::optional<Horizon> expect) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<Scenario> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Scenario s;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw std::invalid_argument("record must be an object");
      s.id = j.at("id").get<std::string>();
      s.dt = j.at("dt").get<double>();
      s.motif = parse_motif(j.at("motif").get<std::string>());
      s.observed = parse_points(j.at("observed"), "observed");
      s.future = parse_points(j.at("future"), "future");
      s.split = j.value("split", std::string("train"));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(lineno, e.what());
    } catch (const ConfigError& e) {
      throw ParseError(lineno, e.what());
    }
    if (!expect) expect = Horizon{s.observed.size(), s.future.size(), s.dt};
    validate_scenario(s, expect);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<const Scenario*> select_split(const std::vector<Scenario>& all, const std::string& split) {
  std::vector<const Scenario*> out;
  for (const auto& s : all) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

}  // namespace foss::data
