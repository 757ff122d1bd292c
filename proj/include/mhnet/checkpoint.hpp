#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mhnet/models.hpp"
#include "mhnet/nn.hpp"

namespace mhnet {

inline constexpr int kCheckpointFormatVersion = 1;

/// {format_version, kind, config, weights: {name: {rows, cols, data}}, rng_seed, step}
/// where data is base64 of little-endian float32 values.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::string kind;  // "depression" or "risk:<variant>"
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  ParamStore params;
  std::uint64_t rng_seed = 0;
  long long step = 0;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::ordered_json& j);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::ordered_json to_json(const DepressionModelConfig& c);
DepressionModelConfig depression_config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const RiskModelConfig& c);
RiskModelConfig risk_config_from_json(const nlohmann::ordered_json& j);

}  // namespace mhnet
