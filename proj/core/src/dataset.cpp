#include "subdiff/dataset.hpp"

#include <atomic>
#include <mutex>

#include "subdiff/error.hpp"
#include "subdiff/field_io.hpp"
#include "subdiff/parallel.hpp"
#include "subdiff/randfield.hpp"
#include "subdiff/solver.hpp"

namespace subdiff {

Eigen::MatrixXd task_coords(Task task, const Grid2D& grid, const TimeGrid& tg) {
  const bool timed = task_has_time(task);
  const int levels = timed ? tg.nt : 1;
  Eigen::MatrixXd X(timed ? 3 : 2, static_cast<Eigen::Index>(grid.size()) * levels);
  Eigen::Index c = 0;
  for (int n = 0; n < levels; ++n) {
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i, ++c) {
        X(0, c) = grid.x(i);
        X(1, c) = grid.y(j);
        if (timed) X(2, c) = tg.t(n);
      }
    }
  }
  return X;
}

std::vector<int> task_branch_inputs(Task task, const Grid2D& sensor_lattice) {
  const int s = static_cast<int>(sensor_lattice.size());
  switch (task) {
    case Task::AlphaA: return {1, s};
    case Task::AF: return {s, s};
    case Task::ATerminal: return {s};
    case Task::AlphaTerminal: return {1};
  }
  return {};
}

namespace {

struct RecordOut {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<double> target;
  std::optional<double> alpha;
};

double alpha_terminal_order(const Preset& preset, bool test, int k, int n) {
  const double lo = preset.alpha_eps;
  const double hi = 1.0 - preset.alpha_eps;
  if (n == 1) return 0.5;
  const double h = (hi - lo) / (n - 1);
  return test ? lo + (k + 0.5) * h : lo + k * h;
}

Eigen::VectorXd on_lattice(const ScalarField& f, const Grid2D& lattice) {
  const ScalarField r = f.resample(lattice);
  return Eigen::Map<const Eigen::VectorXd>(r.values.data(),
                                           static_cast<Eigen::Index>(r.values.size()));
}

std::vector<double> take_target(Task task, const SpaceTimeField& u) {
  if (task_has_time(task)) return u.values;
  const auto last = u.level(u.timegrid.nt - 1);
  return {last.begin(), last.end()};
}

nlohmann::json grid_json(const Grid2D& g) { return {{"nx", g.nx}, {"ny", g.ny}}; }
Grid2D grid_from(const nlohmann::json& j) { return Grid2D(j.at("nx"), j.at("ny")); }

}  // namespace

GeneratedDataset generate_dataset(Task task, const Preset& preset, int n_train, int n_test,
                                  std::uint64_t seed, int threads,
                                  const std::function<void(int, int)>& progress) {
  if (n_train <= 0) throw ConfigError("generate_dataset: need at least one training record");
  if (n_test < 0) throw ConfigError("generate_dataset: negative test count");
  if (task == Task::AlphaTerminal && n_train < 2) {
    throw ConfigError("generate_dataset: alpha_terminal needs at least two training orders");
  }

  const int total = n_train + n_test;
  GrfSampler sampler(preset.grid, preset.rbf);
  const ScalarField fixed_a = task == Task::AlphaTerminal ? truth_coefficient(preset) : ScalarField();

  auto make = [&](int r) {
    const bool test = r >= n_train;
    const int k = test ? r - n_train : r;
    SeededRng rng(seed, static_cast<std::uint64_t>(r));
    RecordOut out;
    switch (task) {
      case Task::AlphaA: {
        const double alpha = sample_alpha(preset.alpha_eps, preset.alpha_parts, rng);
        const ScalarField a = sampler.sample(rng);
        const auto u = solve_subdiffusion_l1(fixed_problem(preset, alpha, a));
        Eigen::VectorXd av(1);
        av[0] = alpha;
        out.inputs = {av, on_lattice(a, preset.sensor_lattice)};
        out.target = take_target(task, u);
        out.alpha = alpha;
        break;
      }
      case Task::AF: {
        const ScalarField a = sampler.sample(rng);
        const ScalarField f = sample_kl_laplacian(preset.grid, preset.kl, rng);
        const auto u = solve_subdiffusion_l1(a_f_problem(preset, a, f));
        out.inputs = {on_lattice(a, preset.sensor_lattice), on_lattice(f, preset.sensor_lattice)};
        out.target = take_target(task, u);
        break;
      }
      case Task::ATerminal: {
        const ScalarField a = sampler.sample(rng);
        const auto u = solve_subdiffusion_l1(fixed_problem(preset, preset.alpha_terminal, a));
        out.inputs = {on_lattice(a, preset.sensor_lattice)};
        out.target = take_target(task, u);
        out.alpha = preset.alpha_terminal;
        break;
      }
      case Task::AlphaTerminal: {
        const double alpha = alpha_terminal_order(preset, test, k, n_train);
        const auto u = solve_subdiffusion_l1(fixed_problem(preset, alpha, fixed_a));
        Eigen::VectorXd av(1);
        av[0] = alpha;
        out.inputs = {av};
        out.target = take_target(task, u);
        out.alpha = alpha;
        break;
      }
    }
    return out;
  };

  std::vector<RecordOut> outs(static_cast<std::size_t>(total));
  std::atomic<int> done{0};
  std::mutex mtx;
  parallel_for(total, threads, [&](int r) {
    outs[static_cast<std::size_t>(r)] = make(r);
    const int d = ++done;
    if (progress) {
      std::lock_guard lock(mtx);
      progress(d, total);
    }
  });

  GeneratedDataset data;
  data.task = task;
  data.preset = preset.name;
  data.seed = seed;
  data.grid = preset.grid;
  data.timegrid = preset.timegrid;
  data.sensor_lattice = preset.sensor_lattice;

  const Eigen::MatrixXd coords = task_coords(task, preset.grid, preset.timegrid);
  const std::vector<int> widths = task_branch_inputs(task, preset.sensor_lattice);
  auto fill = [&](OperatorDataset& ds, int first, int count, const std::string& split) {
    ds.coords = coords;
    ds.branch_inputs.clear();
    for (int w : widths) ds.branch_inputs.emplace_back(w, count);
    ds.targets.resize(count, coords.cols());
    for (int k = 0; k < count; ++k) {
      const RecordOut& o = outs[static_cast<std::size_t>(first + k)];
      for (std::size_t b = 0; b < widths.size(); ++b) ds.branch_inputs[b].col(k) = o.inputs[b];
      ds.targets.row(k) = Eigen::Map<const Eigen::RowVectorXd>(o.target.data(), coords.cols());
      RecordInfo info;
      info.split = split;
      info.index = k;
      info.seed = seed;
      info.stream = static_cast<std::uint64_t>(first + k);
      info.alpha = o.alpha;
      data.records.push_back(info);
    }
  };
  fill(data.train, 0, n_train, "train");
  fill(data.test, n_train, n_test, "test");
  return data;
}

void save_dataset(const std::filesystem::path& dir, const GeneratedDataset& data) {
  std::filesystem::create_directories(dir);
  nlohmann::json arrays = nlohmann::json::object();
  auto put = [&](const std::string& name, const Eigen::MatrixXd& m) {
    const std::string file = name + ".bin";
    write_f64le(dir / file, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
    arrays[name] = {{"file", file}, {"rows", m.rows()}, {"cols", m.cols()}};
  };
  put("coords", data.train.coords);
  for (const auto* split : {"train", "test"}) {
    const OperatorDataset& ds = std::string(split) == "train" ? data.train : data.test;
    for (std::size_t b = 0; b < ds.branch_inputs.size(); ++b) {
      put(std::string(split) + "_branch_" + std::to_string(b), ds.branch_inputs[b]);
    }
    put(std::string(split) + "_targets", ds.targets);
  }
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : data.records) {
    nlohmann::json j = {{"split", r.split}, {"index", r.index}, {"seed", r.seed}, {"stream", r.stream}};
    if (r.alpha) j["alpha"] = *r.alpha;
    records.push_back(j);
  }
  nlohmann::json m = {
      {"format", "subdiff-dataset-v1"},
      {"task", to_string(data.task)},
      {"preset", data.preset},
      {"seed", data.seed},
      {"grid", grid_json(data.grid)},
      {"timegrid", {{"nt", data.timegrid.nt}, {"T", data.timegrid.T}}},
      {"sensor_lattice", grid_json(data.sensor_lattice)},
      {"n_train", data.train.size()},
      {"n_test", data.test.size()},
      {"branches", data.train.branch_inputs.size()},
      {"dtype", "f64le"},
      {"order", "column-major"},
      {"arrays", arrays},
      {"records", records},
  };
  write_json(dir / "manifest.json", m);
}

GeneratedDataset load_dataset(const std::filesystem::path& dir) {
  const nlohmann::json m = read_json(dir / "manifest.json");
  if (m.value("format", "") != "subdiff-dataset-v1") {
    throw IoError("load_dataset: " + (dir / "manifest.json").string() + " is not a dataset manifest");
  }
  GeneratedDataset data;
  try {
    data.task = task_from_string(m.at("task"));
    data.preset = m.at("preset");
    data.seed = m.at("seed");
    data.grid = grid_from(m.at("grid"));
    data.timegrid = TimeGrid(m.at("timegrid").at("nt"), m.at("timegrid").at("T"));
    data.sensor_lattice = grid_from(m.at("sensor_lattice"));
    const auto& arrays = m.at("arrays");
    auto get = [&](const std::string& name) {
      const auto& a = arrays.at(name);
      const Eigen::Index rows = a.at("rows");
      const Eigen::Index cols = a.at("cols");
      const std::vector<double> v = read_f64le(dir / a.at("file").get<std::string>());
      if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
        throw IoError("load_dataset: " + name + " has " + std::to_string(v.size()) + " values");
      }
      return Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols));
    };
    const Eigen::MatrixXd coords = get("coords");
    const std::size_t nb = m.at("branches");
    for (const auto* split : {"train", "test"}) {
      OperatorDataset& ds = std::string(split) == "train" ? data.train : data.test;
      ds.coords = coords;
      for (std::size_t b = 0; b < nb; ++b) {
        ds.branch_inputs.push_back(get(std::string(split) + "_branch_" + std::to_string(b)));
      }
      ds.targets = get(std::string(split) + "_targets");
    }
    for (const auto& r : m.at("records")) {
      RecordInfo info;
      info.split = r.at("split");
      info.index = r.at("index");
      info.seed = r.at("seed");
      info.stream = r.at("stream");
      if (r.contains("alpha")) info.alpha = r.at("alpha").get<double>();
      data.records.push_back(info);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("load_dataset: malformed manifest: ") + e.what());
  }
  data.train.validate();
  if (data.test.size() > 0) data.test.validate();
  return data;
}

}  // namespace subdiff
