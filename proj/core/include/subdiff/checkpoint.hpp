#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "subdiff/onet.hpp"

namespace subdiff {

struct CheckpointMeta {
  std::string task;        ///< "alpha_a", "a_f", "a_terminal", ...
  int sensor_nx = 0;       ///< sensor lattice of field-valued branch inputs
  int sensor_ny = 0;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

/// Writes `<stem>.json` (architecture, normalization, meta, blob layout) and
/// `<stem>.bin`: all parameters in parameter_blocks order, followed by the
/// Adam first and second moments, as little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  TrainState state;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace subdiff
