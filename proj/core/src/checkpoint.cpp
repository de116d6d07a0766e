#include "subdiff/checkpoint.hpp"

#include "subdiff/error.hpp"
#include "subdiff/field_io.hpp"

namespace subdiff {
namespace fs = std::filesystem;

namespace {

nlohmann::json mlp_arch(const Mlp& m) {
  return {{"widths", m.widths}, {"activation", to_string(m.activation)}};
}

Mlp mlp_from_arch(const nlohmann::json& j) {
  Mlp m;
  m.widths = j.at("widths").get<std::vector<int>>();
  m.activation = activation_from_string(j.at("activation").get<std::string>());
  if (m.widths.size() < 2) throw IoError("checkpoint: bad layer widths");
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    m.W.push_back(Eigen::MatrixXd::Zero(m.widths[l + 1], m.widths[l]));
    m.b.push_back(Eigen::VectorXd::Zero(m.widths[l + 1]));
  }
  return m;
}

fs::path with_ext(fs::path p, const char* ext) {
  p.replace_extension(ext);
  return p;
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& state, const CheckpointMeta& meta) {
  const OperatorNet& net = state.net;
  net.validate();
  nlohmann::json j;
  j["format"] = "subdiff-onet-v1";
  j["task"] = meta.task;
  j["sensor_lattice"] = {meta.sensor_nx, meta.sensor_ny};
  j["seed"] = meta.seed;
  j["extra"] = meta.extra;
  nlohmann::json branches = nlohmann::json::array();
  nlohmann::json norms = nlohmann::json::array();
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    branches.push_back(mlp_arch(net.branches[k]));
    norms.push_back({{"shift", net.branch_norm[k].shift}, {"scale", net.branch_norm[k].scale}});
  }
  j["architecture"] = {{"branches", branches}, {"trunk", mlp_arch(net.trunk)}, {"p", net.p()}};
  j["normalization"] = {{"branch_inputs", norms}};
  j["epochs_done"] = state.epochs_done;
  j["adam_step"] = state.adam.step;
  j["layout"] =
      "float64le: for each branch then trunk, per layer W (column-major, out x in) then b; "
      "then scalar b0; then Adam m and v over the same sequence (if has_moments); "
      "then the output transform mean (output_transform.mean_size values)";
  const std::size_t n = net.num_parameters();
  j["num_parameters"] = n;

  std::vector<double> blob;
  blob.reserve(3 * n);
  for (auto blk : parameter_blocks(net)) blob.insert(blob.end(), blk.begin(), blk.end());
  const bool has_moments = state.adam.m.size() == n && state.adam.v.size() == n;
  j["has_moments"] = has_moments;
  if (has_moments) {
    blob.insert(blob.end(), state.adam.m.begin(), state.adam.m.end());
    blob.insert(blob.end(), state.adam.v.begin(), state.adam.v.end());
  }
  j["output_transform"] = {{"scale", state.output.scale}, {"mean_size", state.output.mean.size()}};
  blob.insert(blob.end(), state.output.mean.data(),
              state.output.mean.data() + state.output.mean.size());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path bin = with_ext(path, ".bin");
  j["blob"] = bin.filename().string();
  write_f64le(bin, blob);
  write_json(with_ext(path, ".json"), j);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  const nlohmann::json j = read_json(with_ext(path, ".json"));
  LoadedCheckpoint out;
  try {
    if (j.at("format").get<std::string>() != "subdiff-onet-v1") throw IoError("checkpoint: unknown format");
    out.meta.task = j.at("task").get<std::string>();
    const auto lat = j.at("sensor_lattice").get<std::vector<int>>();
    out.meta.sensor_nx = lat.at(0);
    out.meta.sensor_ny = lat.at(1);
    out.meta.seed = j.at("seed").get<std::uint64_t>();
    out.meta.extra = j.value("extra", nlohmann::json::object());

    OperatorNet& net = out.state.net;
    const auto& arch = j.at("architecture");
    for (const auto& b : arch.at("branches")) net.branches.push_back(mlp_from_arch(b));
    net.trunk = mlp_from_arch(arch.at("trunk"));
    for (const auto& nrm : j.at("normalization").at("branch_inputs")) {
      net.branch_norm.push_back({nrm.at("shift").get<double>(), nrm.at("scale").get<double>()});
    }
    net.validate();
    out.state.epochs_done = j.at("epochs_done").get<int>();
    out.state.adam.step = j.at("adam_step").get<std::int64_t>();

    const std::vector<double> blob = read_f64le(path.parent_path() / j.at("blob").get<std::string>());
    const std::size_t n = net.num_parameters();
    const bool has_moments = j.value("has_moments", false);
    const auto& ot = j.at("output_transform");
    const std::size_t n_mean = ot.at("mean_size").get<std::size_t>();
    out.state.output.scale = ot.at("scale").get<double>();
    const std::size_t n_params = has_moments ? 3 * n : n;
    if (blob.size() != n_params + n_mean) throw IoError("checkpoint: blob size mismatch");
    std::size_t off = 0;
    for (auto blk : parameter_blocks(net)) {
      std::copy(blob.begin() + off, blob.begin() + off + blk.size(), blk.begin());
      off += blk.size();
    }
    if (has_moments) {
      out.state.adam.m.assign(blob.begin() + n, blob.begin() + 2 * n);
      out.state.adam.v.assign(blob.begin() + 2 * n, blob.begin() + 3 * n);
    } else {
      out.state.adam = AdamState::for_net(net);
    }
    if (n_mean > 0) {
      out.state.output.mean = Eigen::Map<const Eigen::RowVectorXd>(
          blob.data() + n_params, static_cast<Eigen::Index>(n_mean));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  return out;
}

}  // namespace subdiff
