#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "foss/tensor.hpp"

namespace foss::ckpt {

inline constexpr char kMagic[5] = {'F', 'O', 'S', 'S', '1'};
inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  DType dtype = DType::f64;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::ordered_json metadata;
};

/// Layout (all integers little-endian):
///   "FOSS1" | u32 count | count x { u16 name_len | name | u8 dtype (0 f32,
///   1 f64) | u8 rank | u32 dims[rank] | values } | u32 json_len | json
std::vector<std::uint8_t> encode(const Checkpoint& c);
/// CheckpointMagicError, CheckpointTruncatedError, CheckpointDuplicateError,
/// or CheckpointError for other malformed content.
Checkpoint decode(const std::vector<std::uint8_t>& bytes);

void save(const std::string& path, const Checkpoint& c);
Checkpoint load(const std::string& path);

Checkpoint capture(const ParameterList& params, nlohmann::ordered_json metadata);
/// Copies values into `params` by name. CheckpointMissingError if a
/// parameter is absent; CheckpointError on shape or dtype mismatch or an
/// unused tensor.
void restore(const Checkpoint& c, const ParameterList& params);

}  // namespace foss::ckpt
