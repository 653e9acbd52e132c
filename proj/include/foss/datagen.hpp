#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace foss::data {

enum class Motif { straight = 0, turn = 1, lane_change = 2, u_turn = 3 };
inline constexpr std::size_t kMotifCount = 4;

std::string to_string(Motif m);
Motif parse_motif(const std::string& name);  // ConfigError on unknown names

using Point = std::array<double, 2>;

struct Scenario {
  std::string id;
  double dt = 0.1;
  Motif motif = Motif::straight;
  std::vector<Point> observed;
  std::vector<Point> future;
  std::string split = "train";
};

struct MotifParams {
  double speed = 10.0;           // m/s
  double curvature = 0.0;        // 1/m; turn only, sign gives direction
  double lateral_offset = 3.5;   // m, lane_change
  std::size_t transition_steps = 20;
  double noise_sigma = 0.0;      // m
  void validate() const;
};

struct Horizon {
  std::size_t t_obs = 20;
  std::size_t t_fut = 30;
  double dt = 0.1;
};

/// Sampling ranges used by generate_dataset.
struct ParamRanges {
  double speed_min = 3.0, speed_max = 15.0;
  double curvature_min = 0.02, curvature_max = 0.08;
  double offset_min = 2.5, offset_max = 4.0;
  std::size_t transition_min = 10, transition_max = 30;
  double noise_sigma = 0.05;
  void validate() const;
};

/// Largest allowed distance between consecutive positions.
inline constexpr double kMaxStepDisplacement = 5.0;

/// Agent-centric scenario: the last observed (noise-free) position is the
/// origin and the heading there is +x. u_turn derives |curvature| so that the
/// heading of the final segment is reversed relative to the first; the sign of
/// params.curvature (zero counts as positive) picks the turn direction.
Scenario generate_scenario(Motif motif, const MotifParams& params, std::uint64_t seed,
                           const Horizon& horizon = {});

/// Scenario i uses seed mix_seed(seed, i); scenarios are ordered by motif
/// (straight, turn, lane_change, u_turn). Splits are assigned by a seeded
/// shuffle: the first 70% train, the next 15% val, the rest test.
std::vector<Scenario> generate_dataset(const std::array<std::size_t, kMotifCount>& counts,
                                       const ParamRanges& ranges, std::uint64_t seed,
                                       const Horizon& horizon = {});

/// One JSON object per line, positions with 6 decimals.
std::string to_json_line(const Scenario& s);
void write_scenarios(const std::string& path, const std::vector<Scenario>& scenarios);

/// Writes the generated dataset to `path` and returns it.
std::vector<Scenario> generate_dataset(const std::array<std::size_t, kMotifCount>& counts,
                                       const ParamRanges& ranges, std::uint64_t seed,
                                       const std::string& path, const Horizon& horizon = {});

/// Parses and validates a JSON-lines file. Blank lines are skipped. When
/// `expect` is empty the first record declares the horizon for the rest.
std::vector<Scenario> load_scenarios(const std::string& path,
                                     std::optional<Horizon> expect = std::nullopt);

/// DataError if the record breaks an invariant.
void validate_scenario(const Scenario& s, std::optional<Horizon> expect = std::nullopt);

std::vector<const Scenario*> select_split(const std::vector<Scenario>& all, const std::string& split);

}  // namespace foss::data
