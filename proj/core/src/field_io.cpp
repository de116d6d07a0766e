#include "subdiff/field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "subdiff/error.hpp"

namespace subdiff {
namespace fs = std::filesystem;

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
    return r;
  }
}

fs::path with_ext(fs::path p, const char* ext) {
  p.replace_extension(ext);
  return p;
}

}  // namespace

nlohmann::json FieldManifest::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["nx"] = nx;
  j["ny"] = ny;
  if (nt) j["nt"] = *nt;
  j["dtype"] = dtype;
  j["shape"] = shape;
  j["seed"] = seed;
  j["params"] = params;
  j["blob"] = blob;
  return j;
}

FieldManifest FieldManifest::from_json(const nlohmann::json& j) {
  try {
    FieldManifest m;
    m.name = j.at("name").get<std::string>();
    m.nx = j.at("nx").get<int>();
    m.ny = j.at("ny").get<int>();
    if (j.contains("nt")) m.nt = j.at("nt").get<int>();
    m.dtype = j.at("dtype").get<std::string>();
    m.shape = j.at("shape").get<std::vector<std::size_t>>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.params = j.value("params", nlohmann::json::object());
    m.blob = j.at("blob").get<std::string>();
    if (m.dtype != "f64le") throw IoError("field manifest: unsupported dtype " + m.dtype);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("field manifest: ") + e.what());
  }
}

void write_f64le(const fs::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<char> buf(values.size() * 8);
  for (std::size_t k = 0; k < values.size(); ++k) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(values[k]));
    std::memcpy(buf.data() + 8 * k, &bits, 8);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<double> read_f64le(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() % 8 != 0) throw IoError("blob size is not a multiple of 8: " + path.string());
  std::vector<double> v(buf.size() / 8);
  for (std::size_t k = 0; k < v.size(); ++k) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, buf.data() + 8 * k, 8);
    v[k] = std::bit_cast<double>(to_little_endian(bits));
  }
  return v;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

void write_field(const fs::path& path, FieldManifest manifest, std::span<const double> values) {
  std::size_t expected = 1;
  for (auto s : manifest.shape) expected *= s;
  if (expected != values.size()) throw ShapeError("write_field: shape does not match value count");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path blob = with_ext(path, ".bin");
  manifest.blob = blob.filename().string();
  write_f64le(blob, values);
  write_json(with_ext(path, ".json"), manifest.to_json());
}

void write_field(const fs::path& path, const ScalarField& field, const std::string& name,
                 std::uint64_t seed, const nlohmann::json& params) {
  FieldManifest m;
  m.name = name;
  m.nx = field.grid.nx;
  m.ny = field.grid.ny;
  m.shape = {static_cast<std::size_t>(field.grid.ny), static_cast<std::size_t>(field.grid.nx)};
  m.seed = seed;
  m.params = params;
  write_field(path, std::move(m), field.values);
}

void write_field(const fs::path& path, const SpaceTimeField& field, const std::string& name,
                 std::uint64_t seed, const nlohmann::json& params) {
  FieldManifest m;
  m.name = name;
  m.nx = field.grid.nx;
  m.ny = field.grid.ny;
  m.nt = field.timegrid.nt;
  m.shape = {static_cast<std::size_t>(field.timegrid.nt), static_cast<std::size_t>(field.grid.ny),
             static_cast<std::size_t>(field.grid.nx)};
  m.seed = seed;
  m.params = params;
  m.params["T"] = field.timegrid.T;
  write_field(path, std::move(m), field.values);
}

LoadedField read_field(const fs::path& manifest_path) {
  LoadedField lf;
  lf.manifest = FieldManifest::from_json(read_json(with_ext(manifest_path, ".json")));
  lf.values = read_f64le(manifest_path.parent_path() / lf.manifest.blob);
  std::size_t expected = 1;
  for (auto s : lf.manifest.shape) expected *= s;
  if (expected != lf.values.size()) {
    throw IoError("field blob size does not match manifest shape: " + manifest_path.string());
  }
  return lf;
}

ScalarField LoadedField::as_scalar() const {
  if (manifest.nt) throw ShapeError("field dump is space-time, not 2D");
  return ScalarField(Grid2D(manifest.nx, manifest.ny), values);
}

SpaceTimeField LoadedField::as_spacetime() const {
  if (!manifest.nt) throw ShapeError("field dump has no time axis");
  SpaceTimeField u(Grid2D(manifest.nx, manifest.ny),
                   TimeGrid(*manifest.nt, manifest.params.value("T", 1.0)));
  u.values = values;
  return u;
}

void write_slice_csv(const fs::path& path, const ScalarField& field) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "x,y,value\n" << std::setprecision(17);
  const Grid2D& g = field.grid;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) out << g.x(i) << ',' << g.y(j) << ',' << field(i, j) << '\n';
  }
}

}  // namespace subdiff
