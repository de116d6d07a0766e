#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "subdiff/dataset.hpp"
#include "subdiff/forward_maps.hpp"
#include "subdiff/presets.hpp"

namespace subdiff {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitSolver = 4,
  kExitTraining = 5,
  kExitInversion = 6,
  kExitIo = 7,
  kExitInternal = 10,
};

/// Maps a library exception to its exit code.
int exit_code_for(const std::exception& e);

/// Settings every command takes.
struct RunOptions {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  int threads = 0;  ///< <= 0: hardware concurrency
  std::filesystem::path out = "out";
  std::ostream* log = nullptr;  ///< progress messages; silent when null
};

int resolve_threads(int threads);

// ---------------------------------------------------------------------------
// solve

struct SolveOptions {
  RunOptions run;
  /// "smoke" (a = 1, c = f = 0, u0 = sin(pi x) sin(pi y), spectral reference),
  /// "alpha_a", "a_f" or "a_terminal" (a drawn from the prior with `seed`).
  std::string problem = "smoke";
  std::optional<double> alpha;  ///< default: 0.5 for smoke, 0.6 for alpha_a, the preset orders otherwise
  std::optional<std::filesystem::path> reference;  ///< space-time dump to compare against
};

/// Writes `<out>/u.{json,bin}`, `<out>/a.{json,bin}`, `<out>/u_T.csv` and
/// `<out>/solve_report.json`; returns the report.
nlohmann::json cmd_solve(const SolveOptions& opts);

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOptions {
  RunOptions run;
  Task task = Task::AlphaA;
  std::optional<int> n_train;  ///< default: preset (alpha_train_points for alpha_terminal)
  std::optional<int> n_test;   ///< default: preset (40 orders for alpha_terminal)
};

/// Dataset directory `<out>` (manifest.json plus blobs).
nlohmann::json cmd_gen_data(const GenDataOptions& opts);

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  RunOptions run;
  std::filesystem::path dataset;
  std::optional<int> epochs;  ///< default: preset
  std::optional<double> lr;
  std::optional<int> points_per_sample;
  std::optional<int> batch_size;
  std::optional<std::filesystem::path> resume;  ///< checkpoint to continue from
};

/// Checkpoint `<out>.{json,bin}`, loss history `<out>_history.csv` and
/// `<out>_report.json`. The report carries the final test error and the error
/// of the mean-field predictor (training-set mean at every point) for scale.
nlohmann::json cmd_train(const TrainOptions& opts);

/// Network settings a preset uses for `task`.
const NetworkSettings& network_settings(const Preset& preset, Task task);

/// Fresh state for `task`: branch normalization from the training inputs,
/// output transform from the training targets.
TrainState initial_train_state(const GeneratedDataset& data, const NetworkSettings& net,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Inversion problems and forward maps

/// The experiment of identifying alpha from terminal data with a fixed to the
/// inversion truth.
struct AlphaExperiment {
  Preset preset;
  ScalarField a;
  std::vector<std::size_t> sensors;  ///< terminal level
  SubdiffusionProblem base;          ///< alpha filled in per evaluation
};
AlphaExperiment alpha_experiment(const Preset& preset);

/// The experiment of recovering a = a0 + m from terminal or interior data.
struct CoefficientExperiment {
  Preset preset;
  bool interior = false;
  double alpha = 0.5;
  ScalarField truth;
  std::vector<std::size_t> sensors;
  SubdiffusionProblem base;
  CoefficientEncoder encoder;
  /// Truth perturbation m on the inversion lattice.
  Eigen::VectorXd truth_parameter() const;
};
CoefficientExperiment coefficient_experiment(const Preset& preset, bool interior);

/// `forward` is "fdm" or the path of a checkpoint trained on alpha_a or
/// alpha_terminal.
std::unique_ptr<ForwardMap> alpha_forward(const AlphaExperiment& ex, const std::string& forward);
/// `forward` is "fdm" or the path of a checkpoint trained on alpha_a or a_terminal.
std::unique_ptr<ForwardMap> coefficient_forward(const CoefficientExperiment& ex,
                                                const std::string& forward);

/// Short label used in tables: "FDM", "G(alpha,a)", "G(a)", "G(alpha)".
std::string forward_label(const std::string& forward);

// ---------------------------------------------------------------------------
// invert

struct InvertOptions {
  RunOptions run;
  std::string method = "pcn";             ///< "irekm" or "pcn"
  std::vector<std::string> forwards{"fdm"};  ///< the first is used outside table mode
  std::string data = "terminal";          ///< pcn: "terminal" or "interior"
  std::optional<double> alpha_true;       ///< irekm: default 0.5
  std::optional<double> sigma;            ///< default: preset
  std::optional<double> beta;
  std::optional<int> iters;               ///< pcn chain length / irekm max_iter
  std::optional<int> burn_in;             ///< default: preset, scaled with --iters
  std::optional<int> ensemble;            ///< irekm J
  bool table = false;                     ///< sweep the table grid instead of one run
};

/// One run writes `<out>/report.json` (plus `estimate`/`truth` dumps for pcn).
/// Table mode writes `<out>/table1.csv` (irekm) or `<out>/table2.csv` and
/// `<out>/table3.csv` (pcn) next to one report per cell.
nlohmann::json cmd_invert(const InvertOptions& opts);

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
  RunOptions run;
  std::string baseline = "fdm";
  std::string method = "fdm";
  std::string problem = "coefficient";  ///< "coefficient" (terminal data) or "alpha"
  int n_evals = 20;
  int warmup = 2;
};

/// `<out>/bench.json` and `<out>/bench.csv`.
nlohmann::json cmd_bench(const BenchOptions& opts);

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  RunOptions run;
  std::filesystem::path approx;
  std::filesystem::path reference;
};

/// Relative l2 of `approx` against `reference` and the pointwise error dump
/// `<out>/error.{json,bin}`.
nlohmann::json cmd_eval(const EvalOptions& opts);

}  // namespace subdiff
