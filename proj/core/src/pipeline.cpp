#include "subdiff/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "subdiff/checkpoint.hpp"
#include "subdiff/error.hpp"
#include "subdiff/field_io.hpp"
#include "subdiff/randfield.hpp"
#include "subdiff/solver.hpp"

namespace subdiff {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const PreconditionError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const DomainError*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const SolverError*>(&e) || dynamic_cast<const FactorizationError*>(&e) ||
      dynamic_cast<const EvaluationError*>(&e)) {
    return kExitSolver;
  }
  if (dynamic_cast<const TrainingError*>(&e)) return kExitTraining;
  if (dynamic_cast<const InversionError*>(&e)) return kExitInversion;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e) ||
      dynamic_cast<const json::exception*>(&e)) {
    return kExitIo;
  }
  return kExitInternal;
}

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class... Args>
void say(const RunOptions& run, const Args&... args) {
  if (!run.log) return;
  std::ostringstream s;
  (s << ... << args);
  *run.log << s.str() << '\n' << std::flush;
}

Preset load_preset(const RunOptions& run) {
  Preset p = preset_by_name(run.preset);
  if (p.name == "paper") {
    say(run, "warning: the paper preset runs at full resolution; expect roughly ",
        p.estimated_hours, " h on one core for the whole pipeline");
  }
  return p;
}

json grid_json(const Grid2D& g) { return {{"nx", g.nx}, {"ny", g.ny}}; }

Eigen::VectorXd as_vector(const ScalarField& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.values.data(), static_cast<Eigen::Index>(f.values.size()));
}

double rel_l2(const Eigen::VectorXd& approx, const Eigen::VectorXd& ref) {
  return relative_l2(std::span<const double>(approx.data(), static_cast<std::size_t>(approx.size())),
                     std::span<const double>(ref.data(), static_cast<std::size_t>(ref.size())));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
}

std::string fmt(double v, int prec = 17) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

// Sigma values in file names: 0.001 -> "0.001".
std::string tag(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

Observation noisy(const Eigen::VectorXd& clean, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
  SeededRng rng(seed, 1);
  Observation obs;
  obs.sigma = sigma;
  obs.d = clean;
  for (Eigen::Index i = 0; i < obs.d.size(); ++i) obs.d[i] += sigma * rng.normal();
  return obs;
}

// --- checkpoints as forward maps -------------------------------------------

struct LoadedSurrogate {
  std::shared_ptr<const OperatorNet> net;
  OutputTransform output;
  Task task;
  Grid2D sensor_lattice;
};

LoadedSurrogate load_surrogate(const std::string& path, const Preset& preset) {
  LoadedCheckpoint lc = load_checkpoint(path);
  LoadedSurrogate s;
  s.task = task_from_string(lc.meta.task);
  s.sensor_lattice = Grid2D(lc.meta.sensor_nx, lc.meta.sensor_ny);
  const json& extra = lc.meta.extra;
  if (extra.contains("grid")) {
    const Grid2D g(extra["grid"].at("nx"), extra["grid"].at("ny"));
    if (g != preset.grid) {
      throw ConfigError(path + " was trained on a " + std::to_string(g.nx) + "x" +
                        std::to_string(g.ny) + " grid, the preset uses " +
                        std::to_string(preset.grid.nx) + "x" + std::to_string(preset.grid.ny));
    }
  }
  if (extra.contains("nt") && extra["nt"].get<int>() != preset.timegrid.nt) {
    throw ConfigError(path + " was trained with a different number of time levels");
  }
  s.output = lc.state.output;
  s.net = std::make_shared<const OperatorNet>(std::move(lc.state.net));
  return s;
}

// Output transform for the sensor subset of a checkpoint's point set.
OutputTransform sensor_output(const LoadedSurrogate& s, const Preset& preset,
                              const std::vector<std::size_t>& sensors) {
  if (s.output.mean.size() == 0) return s.output;
  const std::size_t per_level = preset.grid.size();
  std::vector<std::size_t> points(sensors.size());
  for (std::size_t k = 0; k < sensors.size(); ++k) {
    if (task_has_time(s.task)) {
      points[k] = sensors[k];
    } else {
      const std::size_t last = static_cast<std::size_t>(preset.timegrid.nt - 1) * per_level;
      if (sensors[k] < last) throw ConfigError("a terminal-time surrogate cannot observe earlier levels");
      points[k] = sensors[k] - last;
    }
  }
  return s.output.subset(points);
}

Eigen::MatrixXd surrogate_coords(const LoadedSurrogate& s, const Preset& preset,
                                 const std::vector<std::size_t>& sensors) {
  return sensor_coords(preset.grid, preset.timegrid, sensors, task_has_time(s.task));
}

// --- per-run inversions ----------------------------------------------------

json irekm_run(const AlphaExperiment& ex, const std::string& forward, double alpha_true,
               double sigma, const InvertOptions& opts) {
  FdmAlphaMap truth_map(ex.base, ex.sensors);
  const Observation obs =
      noisy(truth_map.evaluate(Eigen::VectorXd::Constant(1, alpha_true)), sigma, opts.run.seed);

  const auto fwd = alpha_forward(ex, forward);
  IrekmConfig cfg = ex.preset.irekm;
  cfg.alpha_true = alpha_true;
  cfg.threads = resolve_threads(opts.run.threads);
  if (opts.ensemble) cfg.J = *opts.ensemble;
  if (opts.iters) cfg.max_iter = *opts.iters;
  SeededRng rng(opts.run.seed, 2);

  const auto t0 = Clock::now();
  const IrekmResult res = irekm_invert(*fwd, obs, cfg, rng);
  const double wall = seconds_since(t0);
  say(opts.run, "irekm ", forward_label(forward), " alpha=", alpha_true, " sigma=", sigma,
      " -> ", res.alpha, " (", res.iterations, " updates, ", wall, " s)");
  return {
      {"method", "irekm"},
      {"forward_map", fwd->kind()},
      {"forward", forward},
      {"sigma", sigma},
      {"alpha_true", alpha_true},
      {"alpha_estimate", res.alpha},
      {"abs_error", std::abs(res.alpha - alpha_true)},
      {"iterations", res.iterations},
      {"converged", res.converged},
      {"max_iter_reached", res.max_iter_reached},
      {"delta", res.delta},
      {"tau", cfg.tau},
      {"nu", cfg.nu},
      {"ensemble_size", cfg.J},
      {"discrepancy_trace", res.discrepancy},
      {"mean_alpha_trace", res.mean_alpha},
      {"mu_trace", res.mu},
      {"wall_time_seconds", wall},
  };
}

json pcn_run(const CoefficientExperiment& ex, const std::string& forward, double sigma,
             const InvertOptions& opts, const fs::path& dir) {
  const Eigen::VectorXd mt = ex.truth_parameter();
  FdmCoefficientMap truth_map(ex.base, ex.encoder, ex.sensors);
  const Observation obs = noisy(truth_map.evaluate(mt), sigma, opts.run.seed);

  const auto fwd = coefficient_forward(ex, forward);
  PcnConfig cfg = ex.preset.pcn;
  if (opts.beta) cfg.beta = *opts.beta;
  if (opts.iters) {
    const double share = static_cast<double>(cfg.burn_in) / cfg.n_iter;
    cfg.n_iter = *opts.iters;
    cfg.burn_in = static_cast<int>(std::floor(share * cfg.n_iter));
  }
  if (opts.burn_in) cfg.burn_in = *opts.burn_in;

  const GrfSampler sampler(ex.preset.inversion_lattice, ex.preset.rbf);
  const PriorSampler prior = [&](SeededRng& r) { return sampler.draw_lattice(r); };
  SeededRng rng(opts.run.seed, 2);

  const auto t0 = Clock::now();
  const PcnResult res =
      pcn_mcmc(*fwd, obs, prior, Eigen::VectorXd::Zero(mt.size()), cfg, rng);
  const double wall = seconds_since(t0);

  const ScalarField a_est = ex.encoder.coefficient(
      std::span<const double>(res.mean.data(), static_cast<std::size_t>(res.mean.size())));
  const double err = rel_l2(as_vector(a_est), as_vector(ex.truth));
  say(opts.run, "pcn ", forward_label(forward), " sigma=", sigma, " -> rel l2 ", err,
      ", acceptance ", res.acceptance_rate, " (", wall, " s)");

  fs::create_directories(dir);
  const json params = {{"forward", forward}, {"sigma", sigma}, {"beta", cfg.beta},
                       {"n_iter", cfg.n_iter}, {"burn_in", cfg.burn_in}};
  write_field(dir / "estimate", a_est, "a_estimate", opts.run.seed, params);
  write_field(dir / "truth", ex.truth, "a_truth", ex.preset.truth_seed);
  std::ostringstream trace;
  trace << "iteration,potential\n" << std::setprecision(17);
  for (std::size_t k = 0; k < res.potential_trace.size(); ++k) {
    trace << k + 1 << ',' << res.potential_trace[k] << '\n';
  }
  write_text(dir / "trace.csv", trace.str());

  json report = {
      {"method", "pcn"},
      {"forward_map", fwd->kind()},
      {"forward", forward},
      {"data", ex.interior ? "interior" : "terminal"},
      {"alpha", ex.alpha},
      {"sigma", sigma},
      {"sensors", ex.sensors.size()},
      {"beta", cfg.beta},
      {"iterations", cfg.n_iter},
      {"burn_in", cfg.burn_in},
      {"samples", cfg.n_iter - cfg.burn_in},
      {"acceptance_rate", res.acceptance_rate},
      {"final_potential", res.final_potential},
      {"estimate", "estimate.json"},
      {"truth", "truth.json"},
      {"relative_l2_vs_truth", err},
      {"wall_time_seconds", wall},
  };
  write_json(dir / "report.json", report);
  return report;
}

}  // namespace

// ---------------------------------------------------------------------------
// solve

json cmd_solve(const SolveOptions& opts) {
  const Preset pr = load_preset(opts.run);
  SeededRng rng(opts.run.seed, 0);
  SubdiffusionProblem p;
  std::optional<ScalarField> exact_T;
  if (opts.problem == "smoke") {
    p.alpha = opts.alpha.value_or(0.5);
    p.grid = pr.grid;
    p.timegrid = pr.timegrid;
    p.a = ScalarField(pr.grid, 1.0);
    p.c = ScalarField(pr.grid, 0.0);
    p.f = ScalarField(pr.grid, 0.0);
    p.u0 = ScalarField::from_function(pr.grid, initial_a_f);
    // u0 = 0.5 phi_11 with phi_11 = 2 sin(pi x) sin(pi y).
    const SineMode mode{1, 1, 0.5};
    exact_T = spectral_reference(p.alpha, 1.0, 0.0, std::span<const SineMode>(&mode, 1), {},
                                 pr.timegrid.T, pr.grid);
  } else if (opts.problem == "alpha_a" || opts.problem == "a_terminal") {
    const double alpha = opts.alpha.value_or(opts.problem == "alpha_a" ? 0.6 : pr.alpha_terminal);
    const GrfSampler sampler(pr.grid, pr.rbf);
    p = fixed_problem(pr, alpha, sampler.sample(rng));
  } else if (opts.problem == "a_f") {
    const GrfSampler sampler(pr.grid, pr.rbf);
    const ScalarField a = sampler.sample(rng);
    const ScalarField f = sample_kl_laplacian(pr.grid, pr.kl, rng);
    p = a_f_problem(pr, a, f);
    if (opts.alpha) p.alpha = *opts.alpha;
  } else {
    throw ConfigError("unknown problem '" + opts.problem + "' (smoke, alpha_a, a_f, a_terminal)");
  }

  const auto t0 = Clock::now();
  const SpaceTimeField u = solve_subdiffusion_l1(p);
  const double wall = seconds_since(t0);

  fs::create_directories(opts.run.out);
  const json params = {{"problem", opts.problem}, {"alpha", p.alpha}, {"preset", pr.name},
                       {"T", pr.timegrid.T}};
  write_field(opts.run.out / "u", u, "u", opts.run.seed, params);
  write_field(opts.run.out / "a", p.a, "a", opts.run.seed, params);
  const ScalarField uT = u.slice(pr.timegrid.nt - 1);
  write_slice_csv(opts.run.out / "u_T.csv", uT);

  json report = {{"problem", opts.problem},
                 {"preset", pr.name},
                 {"alpha", p.alpha},
                 {"grid", grid_json(pr.grid)},
                 {"nt", pr.timegrid.nt},
                 {"seed", opts.run.seed},
                 {"dump", "u.json"},
                 {"wall_time_seconds", wall}};
  if (exact_T) {
    report["relative_l2_vs_spectral_T"] = relative_l2(uT.values, exact_T->values);
    say(opts.run, "relative l2 at T against the eigen-expansion: ",
        report["relative_l2_vs_spectral_T"].get<double>());
  }
  if (opts.reference) {
    const LoadedField ref = read_field(*opts.reference);
    if (ref.values.size() != u.values.size()) {
      throw ShapeError("reference " + opts.reference->string() + " has " +
                       std::to_string(ref.values.size()) + " values, the solution " +
                       std::to_string(u.values.size()));
    }
    report["relative_l2_vs_reference"] = relative_l2(u.values, ref.values);
    say(opts.run, "relative l2 against the reference: ",
        report["relative_l2_vs_reference"].get<double>());
  }
  write_json(opts.run.out / "solve_report.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// gen-data

json cmd_gen_data(const GenDataOptions& opts) {
  const Preset pr = load_preset(opts.run);
  const bool orders = opts.task == Task::AlphaTerminal;
  int default_train = orders ? pr.alpha_train_points : pr.n_train;
  if (opts.task == Task::ATerminal && pr.terminal_n_train > 0) default_train = pr.terminal_n_train;
  const int n_train = opts.n_train.value_or(default_train);
  const int n_test = opts.n_test.value_or(orders ? pr.alpha_train_points - 1 : pr.n_test);
  const int threads = resolve_threads(opts.run.threads);
  say(opts.run, "generating ", n_train, " + ", n_test, " ", to_string(opts.task),
      " records on ", threads, " thread(s)");

  int next_report = 0;
  const auto t0 = Clock::now();
  const GeneratedDataset data = generate_dataset(
      opts.task, pr, n_train, n_test, opts.run.seed, threads, [&](int done, int total) {
        if (done * 10 >= next_report * total) {
          say(opts.run, "  ", done, "/", total);
          next_report = done * 10 / total + 1;
        }
      });
  const double wall = seconds_since(t0);
  save_dataset(opts.run.out, data);
  json report = {{"task", to_string(opts.task)},
                 {"preset", pr.name},
                 {"seed", opts.run.seed},
                 {"n_train", n_train},
                 {"n_test", n_test},
                 {"points", data.train.points()},
                 {"dataset", opts.run.out.string()},
                 {"wall_time_seconds", wall}};
  write_json(opts.run.out / "report.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// train

const NetworkSettings& network_settings(const Preset& preset, Task task) {
  if (task == Task::AlphaTerminal) return preset.alpha_net;
  if (task == Task::ATerminal) return preset.terminal_net;
  return preset.net;
}

TrainState initial_train_state(const GeneratedDataset& data, const NetworkSettings& net,
                               std::uint64_t seed) {
  data.train.validate();
  std::vector<int> widths;
  for (const auto& b : data.train.branch_inputs) widths.push_back(static_cast<int>(b.rows()));
  SeededRng rng(seed, 0);
  TrainState st;
  st.net = OperatorNet::make(widths, static_cast<int>(data.train.coords.rows()), net.hidden, net.p,
                             net.activation, rng);
  for (std::size_t k = 0; k < widths.size(); ++k) {
    const Eigen::MatrixXd& x = data.train.branch_inputs[k];
    const double mean = x.mean();
    const double sd = std::sqrt((x.array() - mean).square().mean());
    st.net.branch_norm[k] = {mean, sd > 1e-12 ? sd : 1.0};
  }
  st.output = OutputTransform::fit(data.train.targets);
  st.adam = AdamState::for_net(st.net);
  return st;
}

json cmd_train(const TrainOptions& opts) {
  GeneratedDataset data = load_dataset(opts.dataset);
  const Preset pr = preset_by_name(data.preset);
  if (pr.name == "paper") load_preset(RunOptions{.preset = "paper", .log = opts.run.log});
  const NetworkSettings& ns = network_settings(pr, data.task);

  TrainConfig cfg = ns.train;
  if (opts.epochs) cfg.epochs = *opts.epochs;
  if (opts.lr) cfg.adam.lr = *opts.lr;
  if (opts.points_per_sample) cfg.points_per_sample = *opts.points_per_sample;
  if (opts.batch_size) cfg.batch_size = *opts.batch_size;
  if (cfg.points_per_sample >= data.train.points()) cfg.points_per_sample = 0;

  TrainState st;
  CheckpointMeta meta;
  if (opts.resume) {
    LoadedCheckpoint lc = load_checkpoint(*opts.resume);
    if (lc.meta.task != to_string(data.task)) {
      throw ConfigError("checkpoint " + opts.resume->string() + " belongs to task " + lc.meta.task);
    }
    st = std::move(lc.state);
    meta = std::move(lc.meta);
    say(opts.run, "resuming after epoch ", st.epochs_done);
  } else {
    st = initial_train_state(data, ns, opts.run.seed);
    meta.task = to_string(data.task);
    meta.sensor_nx = data.sensor_lattice.nx;
    meta.sensor_ny = data.sensor_lattice.ny;
    meta.seed = opts.run.seed;
    meta.extra = {{"preset", pr.name}, {"grid", grid_json(data.grid)}, {"nt", data.timegrid.nt},
                  {"T", data.timegrid.T}, {"dataset_seed", data.seed}};
  }
  cfg.seed = meta.seed;

  const OperatorDataset train = [&] {
    OperatorDataset d = data.train;
    d.targets = st.output.invert(d.targets);
    return d;
  }();
  const OperatorDataset test = [&] {
    OperatorDataset d = data.test;
    if (d.size() > 0) d.targets = st.output.invert(d.targets);
    return d;
  }();
  const OperatorDataset* test_ptr = test.size() > 0 ? &test : nullptr;

  say(opts.run, "training ", to_string(data.task), ": ", st.net.num_parameters(), " parameters, ",
      cfg.epochs, " epochs, lr ", cfg.adam.lr);
  const auto t0 = Clock::now();
  train_operator(st, train, test_ptr, cfg, [&](const EpochStats& e) {
    if (e.test_rel_l2) {
      say(opts.run, "  epoch ", e.epoch, "  loss ", e.train_loss, "  test rel l2 ", *e.test_rel_l2,
          "  (", seconds_since(t0), " s)");
    }
  });
  const double wall = seconds_since(t0);

  meta.extra["epochs_done"] = st.epochs_done;
  save_checkpoint(opts.run.out, st, meta);
  fs::path stem = opts.run.out;
  stem.replace_extension("");
  write_history_csv(stem.string() + "_history.csv", st.history);

  json report = {{"task", meta.task},
                 {"preset", pr.name},
                 {"epochs_done", st.epochs_done},
                 {"parameters", st.net.num_parameters()},
                 {"lr", cfg.adam.lr},
                 {"points_per_sample", cfg.points_per_sample},
                 {"batch_size", cfg.batch_size},
                 {"final_train_loss", st.history.empty() ? 0.0 : st.history.back().train_loss},
                 {"checkpoint", stem.string() + ".json"},
                 {"wall_time_seconds", wall}};
  if (test_ptr) {
    const double err = mean_relative_l2(st.net, test, st.output);
    // Predicting the training mean everywhere; what the network has to beat.
    OperatorNet zero = st.net.zeros_like();
    zero.branch_norm = st.net.branch_norm;
    const double baseline = mean_relative_l2(zero, test, st.output);
    report["test_relative_l2"] = err;
    report["mean_field_relative_l2"] = baseline;
    say(opts.run, "test relative l2 ", err, " (mean-field predictor ", baseline, ")");
  }
  write_json(stem.string() + "_report.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// inversion problems

AlphaExperiment alpha_experiment(const Preset& preset) {
  AlphaExperiment ex;
  ex.preset = preset;
  ex.a = truth_coefficient(preset);
  ex.sensors = terminal_sensors(preset.grid, preset.timegrid);
  ex.base = fixed_problem(preset, 0.5, ex.a);
  return ex;
}

CoefficientExperiment coefficient_experiment(const Preset& preset, bool interior) {
  CoefficientExperiment ex{.preset = preset,
                           .interior = interior,
                           .alpha = interior ? preset.alpha_interior : preset.alpha_terminal,
                           .truth = truth_coefficient(preset),
                           .sensors = {},
                           .base = {},
                           .encoder = CoefficientEncoder(preset.inversion_lattice, preset.grid,
                                                         preset.rbf.a0)};
  ex.sensors = interior ? box_sensors(preset.grid, preset.timegrid)
                        : terminal_sensors(preset.grid, preset.timegrid);
  ex.base = fixed_problem(preset, ex.alpha, ex.truth);
  return ex;
}

Eigen::VectorXd CoefficientExperiment::truth_parameter() const {
  Eigen::VectorXd m = as_vector(truth.resample(preset.inversion_lattice));
  m.array() -= preset.rbf.a0;
  return m;
}

std::unique_ptr<ForwardMap> alpha_forward(const AlphaExperiment& ex, const std::string& forward) {
  if (forward == "fdm") return std::make_unique<FdmAlphaMap>(ex.base, ex.sensors);
  const LoadedSurrogate s = load_surrogate(forward, ex.preset);
  SurrogateMap::Spec spec;
  spec.coords = surrogate_coords(s, ex.preset, ex.sensors);
  spec.output = sensor_output(s, ex.preset, ex.sensors);
  spec.input_kind = ForwardMap::InputKind::Scalar;
  spec.input_size = 1;
  spec.admissible = [](std::span<const double> m) { return m[0] > 0.0 && m[0] < 1.0; };
  switch (s.task) {
    case Task::AlphaTerminal:
      spec.free_branch = 0;
      spec.fixed_inputs = {Eigen::VectorXd()};
      break;
    case Task::AlphaA: {
      const ScalarField a = ex.a.resample(s.sensor_lattice);
      spec.free_branch = 0;
      spec.fixed_inputs = {Eigen::VectorXd(), as_vector(a)};
      break;
    }
    default:
      throw ConfigError(forward + " is a " + to_string(s.task) +
                        " network; identifying alpha needs alpha_a or alpha_terminal");
  }
  return std::make_unique<SurrogateMap>(s.net, std::move(spec));
}

std::unique_ptr<ForwardMap> coefficient_forward(const CoefficientExperiment& ex,
                                                const std::string& forward) {
  if (forward == "fdm") {
    return std::make_unique<FdmCoefficientMap>(ex.base, ex.encoder, ex.sensors);
  }
  const LoadedSurrogate s = load_surrogate(forward, ex.preset);
  SurrogateMap::Spec spec;
  spec.coords = surrogate_coords(s, ex.preset, ex.sensors);
  spec.output = sensor_output(s, ex.preset, ex.sensors);
  spec.input_kind = ForwardMap::InputKind::Field;
  spec.input_size = ex.encoder.lattice().size();
  const CoefficientEncoder enc = ex.encoder;
  const Grid2D lattice = s.sensor_lattice;
  spec.encode = [enc, lattice](std::span<const double> m) { return enc.coefficient_on(m, lattice); };
  spec.admissible = [enc](std::span<const double> m) { return enc.coefficient(m).min() > 0.05; };
  switch (s.task) {
    case Task::ATerminal:
      if (std::abs(ex.alpha - ex.preset.alpha_terminal) > 1e-12) {
        throw ConfigError(forward + " was trained at alpha = " + tag(ex.preset.alpha_terminal));
      }
      spec.free_branch = 0;
      spec.fixed_inputs = {Eigen::VectorXd()};
      break;
    case Task::AlphaA: {
      Eigen::VectorXd alpha(1);
      alpha[0] = ex.alpha;
      spec.free_branch = 1;
      spec.fixed_inputs = {alpha, Eigen::VectorXd()};
      break;
    }
    default:
      throw ConfigError(forward + " is a " + to_string(s.task) +
                        " network; recovering a needs alpha_a or a_terminal");
  }
  return std::make_unique<SurrogateMap>(s.net, std::move(spec));
}

std::string forward_label(const std::string& forward) {
  if (forward == "fdm") return "FDM";
  try {
    const json j = read_json(fs::path(forward).replace_extension(".json"));
    const Task t = task_from_string(j.at("task"));
    switch (t) {
      case Task::AlphaA: return "G(alpha,a)";
      case Task::AF: return "G(a,f)";
      case Task::ATerminal: return "G(a)";
      case Task::AlphaTerminal: return "G(alpha)";
    }
  } catch (const std::exception&) {
  }
  return fs::path(forward).stem().string();
}

// ---------------------------------------------------------------------------
// invert

json cmd_invert(const InvertOptions& opts) {
  const Preset pr = load_preset(opts.run);
  if (opts.forwards.empty()) throw ConfigError("no forward map given");
  fs::create_directories(opts.run.out);

  if (opts.method == "irekm") {
    const AlphaExperiment ex = alpha_experiment(pr);
    const std::string& forward = opts.forwards.front();
    if (!opts.table) {
      json report = irekm_run(ex, forward, opts.alpha_true.value_or(0.5),
                              opts.sigma.value_or(pr.sigma), opts);
      write_json(opts.run.out / "report.json", report);
      return report;
    }
    const std::vector<double> sigmas = opts.sigma ? std::vector<double>{*opts.sigma}
                                                  : std::vector<double>{0.001, 0.003};
    std::ostringstream csv;
    csv << "noise";
    for (int k = 1; k <= 9; ++k) csv << ',' << k / 10.0;
    csv << '\n';
    json runs = json::array();
    for (double sigma : sigmas) {
      csv << "sigma=" << tag(sigma);
      for (int k = 1; k <= 9; ++k) {
        json r = irekm_run(ex, forward, k / 10.0, sigma, opts);
        csv << ',' << std::fixed << std::setprecision(4) << r["alpha_estimate"].get<double>()
            << std::defaultfloat;
        runs.push_back(std::move(r));
      }
      csv << '\n';
    }
    write_text(opts.run.out / "table1.csv", csv.str());
    json report = {{"method", "irekm"}, {"forward", forward}, {"table", "table1.csv"}, {"runs", runs}};
    write_json(opts.run.out / "report.json", report);
    return report;
  }

  if (opts.method != "pcn") throw ConfigError("unknown method '" + opts.method + "' (irekm, pcn)");
  if (opts.data != "terminal" && opts.data != "interior") {
    throw ConfigError("unknown data '" + opts.data + "' (terminal, interior)");
  }
  const CoefficientExperiment ex = coefficient_experiment(pr, opts.data == "interior");
  if (!opts.table) {
    return pcn_run(ex, opts.forwards.front(), opts.sigma.value_or(pr.sigma), opts, opts.run.out);
  }

  const std::vector<double> sigmas = opts.sigma ? std::vector<double>{*opts.sigma}
                                                : std::vector<double>{0.001, 0.005};
  std::vector<std::vector<json>> cells(opts.forwards.size());
  for (std::size_t f = 0; f < opts.forwards.size(); ++f) {
    for (double sigma : sigmas) {
      const fs::path dir = opts.run.out / (forward_label(opts.forwards[f]) + "_sigma" + tag(sigma));
      cells[f].push_back(pcn_run(ex, opts.forwards[f], sigma, opts, dir));
    }
  }
  // Inference time at the first noise level, as one column per method.
  std::optional<double> fdm_time;
  for (std::size_t f = 0; f < opts.forwards.size(); ++f) {
    if (opts.forwards[f] == "fdm") fdm_time = cells[f][0]["wall_time_seconds"].get<double>();
  }
  std::ostringstream t2;
  t2 << "method,inference_seconds,speedup\n";
  for (std::size_t f = 0; f < opts.forwards.size(); ++f) {
    const double t = cells[f][0]["wall_time_seconds"];
    t2 << "MCMC+" << forward_label(opts.forwards[f]) << ',' << fmt(t, 6) << ',';
    if (fdm_time && opts.forwards[f] != "fdm") t2 << fmt(*fdm_time / t, 4);
    t2 << '\n';
  }
  std::ostringstream t3;
  t3 << "noise";
  for (const auto& f : opts.forwards) t3 << ",MCMC+" << forward_label(f);
  t3 << '\n';
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    t3 << "sigma=" << tag(sigmas[s]);
    for (std::size_t f = 0; f < opts.forwards.size(); ++f) {
      t3 << ',' << fmt(cells[f][s]["relative_l2_vs_truth"].get<double>(), 6);
    }
    t3 << '\n';
  }
  write_text(opts.run.out / "table2.csv", t2.str());
  write_text(opts.run.out / "table3.csv", t3.str());
  json runs = json::array();
  for (auto& row : cells) {
    for (auto& c : row) runs.push_back(c);
  }
  json report = {{"method", "pcn"}, {"data", opts.data}, {"tables", {"table2.csv", "table3.csv"}},
                 {"runs", runs}};
  write_json(opts.run.out / "report.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// bench

namespace {

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto c = line.find(':');
      if (c != std::string::npos) return line.substr(line.find_first_not_of(' ', c + 1));
    }
  }
  return "unknown";
}

}  // namespace

json cmd_bench(const BenchOptions& opts) {
  if (opts.n_evals <= 0) throw ConfigError("bench: n_evals must be positive");
  if (opts.warmup < 0) throw ConfigError("bench: warmup must be non-negative");
  const Preset pr = load_preset(opts.run);

  std::unique_ptr<ForwardMap> base;
  std::unique_ptr<ForwardMap> method;
  std::vector<Eigen::VectorXd> inputs;
  SeededRng rng(opts.run.seed, 3);
  if (opts.problem == "coefficient") {
    const CoefficientExperiment ex = coefficient_experiment(pr, false);
    base = coefficient_forward(ex, opts.baseline);
    method = coefficient_forward(ex, opts.method);
    const GrfSampler sampler(pr.inversion_lattice, pr.rbf);
    for (int k = 0; k < opts.n_evals; ++k) inputs.push_back(sampler.draw_lattice(rng));
  } else if (opts.problem == "alpha") {
    const AlphaExperiment ex = alpha_experiment(pr);
    base = alpha_forward(ex, opts.baseline);
    method = alpha_forward(ex, opts.method);
    for (int k = 0; k < opts.n_evals; ++k) {
      inputs.push_back(Eigen::VectorXd::Constant(1, rng.uniform(0.05, 0.95)));
    }
  } else {
    throw ConfigError("unknown bench problem '" + opts.problem + "' (coefficient, alpha)");
  }

  std::vector<Eigen::VectorXd> out_base(inputs.size());
  std::vector<Eigen::VectorXd> out_method(inputs.size());
  auto time_map = [&](const ForwardMap& map, std::vector<Eigen::VectorXd>& outs) {
    for (int k = 0; k < std::min<int>(opts.warmup, opts.n_evals); ++k) (void)map.evaluate(inputs[k]);
    const auto t0 = Clock::now();
    for (std::size_t k = 0; k < inputs.size(); ++k) outs[k] = map.evaluate(inputs[k]);
    return seconds_since(t0);
  };
  const double t_base = time_map(*base, out_base);
  const double t_method = time_map(*method, out_method);

  double sq = 0.0;
  double sq_ref = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    sq += (out_method[k] - out_base[k]).squaredNorm();
    sq_ref += out_base[k].squaredNorm();
  }
  const double n = opts.n_evals;
  const double speedup = t_base / t_method;
  say(opts.run, forward_label(opts.baseline), ": ", t_base / n * 1e3, " ms/eval, ",
      forward_label(opts.method), ": ", t_method / n * 1e3, " ms/eval, speedup ", speedup);

  json report = {
      {"problem", opts.problem},
      {"preset", pr.name},
      {"n_evals", opts.n_evals},
      {"warmup", opts.warmup},
      {"baseline",
       {{"label", forward_label(opts.baseline)}, {"forward", opts.baseline},
        {"seconds_total", t_base}, {"seconds_per_eval", t_base / n}}},
      {"method",
       {{"label", forward_label(opts.method)}, {"forward", opts.method},
        {"seconds_total", t_method}, {"seconds_per_eval", t_method / n}}},
      {"speedup", speedup},
      {"output_relative_l2", sq_ref > 0 ? std::sqrt(sq / sq_ref) : 0.0},
      {"hardware",
       {{"cpu", cpu_model()},
        {"hardware_threads", std::thread::hardware_concurrency()},
        {"threads_used", 1},
        {"compiler", __VERSION__}}},
  };
  fs::create_directories(opts.run.out);
  write_json(opts.run.out / "bench.json", report);
  std::ostringstream csv;
  csv << "method,seconds_per_eval,speedup\n"
      << forward_label(opts.baseline) << ',' << fmt(t_base / n, 6) << ",1\n"
      << forward_label(opts.method) << ',' << fmt(t_method / n, 6) << ',' << fmt(speedup, 6) << '\n';
  write_text(opts.run.out / "bench.csv", csv.str());
  return report;
}

// ---------------------------------------------------------------------------
// eval

json cmd_eval(const EvalOptions& opts) {
  const LoadedField a = read_field(opts.approx);
  const LoadedField r = read_field(opts.reference);
  if (a.manifest.nx != r.manifest.nx || a.manifest.ny != r.manifest.ny ||
      a.manifest.nt != r.manifest.nt || a.values.size() != r.values.size()) {
    throw ShapeError("eval: " + opts.approx.string() + " and " + opts.reference.string() +
                     " have different shapes");
  }
  std::vector<double> err(a.values.size());
  double max_abs = 0.0;
  for (std::size_t k = 0; k < err.size(); ++k) {
    err[k] = a.values[k] - r.values[k];
    max_abs = std::max(max_abs, std::abs(err[k]));
  }
  const double rel = relative_l2(a.values, r.values);

  FieldManifest m = a.manifest;
  m.name = "error";
  m.params = {{"approx", opts.approx.string()}, {"reference", opts.reference.string()}};
  fs::create_directories(opts.run.out);
  write_field(opts.run.out / "error", m, err);
  json report = {{"approx", opts.approx.string()},
                 {"reference", opts.reference.string()},
                 {"relative_l2", rel},
                 {"max_abs_error", max_abs},
                 {"error_dump", "error.json"}};
  write_json(opts.run.out / "eval_report.json", report);
  say(opts.run, "relative l2 ", rel, ", max |error| ", max_abs);
  return report;
}

}  // namespace subdiff
