#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "subdiff/grid.hpp"

namespace subdiff {

/// JSON manifest describing a raw little-endian float64 blob stored next to it.
/// Blob index order is [t][y][x] (or [y][x] for 2D fields).
struct FieldManifest {
  std::string name;
  int nx = 0;
  int ny = 0;
  std::optional<int> nt;
  std::string dtype = "f64le";
  std::vector<std::size_t> shape;
  std::uint64_t seed = 0;
  nlohmann::json params = nlohmann::json::object();
  std::string blob;  ///< blob file name, relative to the manifest directory

  nlohmann::json to_json() const;
  static FieldManifest from_json(const nlohmann::json& j);
};

struct LoadedField {
  FieldManifest manifest;
  std::vector<double> values;

  ScalarField as_scalar() const;
  SpaceTimeField as_spacetime() const;
};

/// Writes `<stem>.json` and `<stem>.bin` for the given manifest path (extension ignored).
void write_field(const std::filesystem::path& path, FieldManifest manifest,
                 std::span<const double> values);
void write_field(const std::filesystem::path& path, const ScalarField& field,
                 const std::string& name, std::uint64_t seed = 0,
                 const nlohmann::json& params = nlohmann::json::object());
void write_field(const std::filesystem::path& path, const SpaceTimeField& field,
                 const std::string& name, std::uint64_t seed = 0,
                 const nlohmann::json& params = nlohmann::json::object());

LoadedField read_field(const std::filesystem::path& manifest_path);

/// CSV with header `x,y,value`, one row per node in [y][x] order.
void write_slice_csv(const std::filesystem::path& path, const ScalarField& field);

/// Raw little-endian float64 helpers shared by the other on-disk formats.
void write_f64le(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64le(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace subdiff
