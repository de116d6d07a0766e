#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "subdiff/onet.hpp"
#include "subdiff/presets.hpp"

namespace subdiff {

struct RecordInfo {
  std::string split;  ///< "train" or "test"
  int index = 0;      ///< position within the split
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::optional<double> alpha;
};

/// Operator-learning data for one task. Branch inputs per task:
///   alpha_a: [alpha, a on the sensor lattice];  a_f: [a, f];  a_terminal: [a];
///   alpha_terminal: [alpha].
/// Query points are every grid node ([y][x]) of every level ([t]) for the
/// space-time tasks and of the last level for the terminal tasks.
struct GeneratedDataset {
  Task task = Task::AlphaA;
  std::string preset;
  std::uint64_t seed = 0;
  Grid2D grid;
  TimeGrid timegrid;
  Grid2D sensor_lattice;
  std::vector<RecordInfo> records;
  OperatorDataset train;
  OperatorDataset test;
};

/// Query coordinates of `task` on the preset grid.
Eigen::MatrixXd task_coords(Task task, const Grid2D& grid, const TimeGrid& tg);

/// Branch input widths of `task`.
std::vector<int> task_branch_inputs(Task task, const Grid2D& sensor_lattice);

/// Record k of the space-time / a_terminal tasks draws from stream k of `seed`
/// (train first, then test), so any record can be regenerated on its own.
/// alpha_terminal uses equispaced orders (train) and their midpoints (test).
/// `threads` <= 0 means hardware concurrency; the output does not depend on it.
GeneratedDataset generate_dataset(Task task, const Preset& preset, int n_train, int n_test,
                                  std::uint64_t seed, int threads = 1,
                                  const std::function<void(int done, int total)>& progress = {});

/// `dir/manifest.json` plus one f64le blob per matrix (column-major, shapes in the manifest).
void save_dataset(const std::filesystem::path& dir, const GeneratedDataset& data);
GeneratedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace subdiff
