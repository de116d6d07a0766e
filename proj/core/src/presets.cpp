#include "subdiff/presets.hpp"

#include <cmath>
#include <numbers>

#include "subdiff/error.hpp"

namespace subdiff {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::string to_string(Task t) {
  switch (t) {
    case Task::AlphaA: return "alpha_a";
    case Task::AF: return "a_f";
    case Task::ATerminal: return "a_terminal";
    case Task::AlphaTerminal: return "alpha_terminal";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  if (s == "alpha_a" || s == "1") return Task::AlphaA;
  if (s == "a_f" || s == "2") return Task::AF;
  if (s == "a_terminal") return Task::ATerminal;
  if (s == "alpha_terminal") return Task::AlphaTerminal;
  throw ConfigError("unknown task '" + s + "' (alpha_a, a_f, a_terminal, alpha_terminal)");
}

bool task_has_time(Task t) { return t == Task::AlphaA || t == Task::AF; }

Preset desk_preset() {
  Preset p;
  p.name = "desk";
  p.grid = Grid2D(21, 21);
  p.timegrid = TimeGrid(26, 1.0);
  p.n_train = 300;
  p.n_test = 100;
  p.sensor_lattice = p.grid;
  p.inversion_lattice = p.grid;

  p.net.hidden = {128, 128, 128, 128};
  p.net.p = 128;
  p.net.train.adam.lr = 1e-4;
  p.net.train.epochs = 10000;
  p.net.train.points_per_sample = 2000;
  p.net.train.eval_every = 500;

  // The a_terminal surrogate drives pCN at sigma = 0.001, so its error has to
  // sit near the noise level: more records, minibatches and a larger step.
  p.terminal_net = p.net;
  p.terminal_net.train.adam.lr = 5e-4;
  p.terminal_net.train.epochs = 1500;
  p.terminal_net.train.points_per_sample = 0;
  p.terminal_net.train.batch_size = 100;
  p.terminal_n_train = 1000;

  // One scalar input and a smooth family of outputs; a smaller net trained
  // with a larger step converges well within a minute.
  p.alpha_net.hidden = {64, 64, 64};
  p.alpha_net.p = 64;
  p.alpha_net.train.adam.lr = 1e-3;
  p.alpha_net.train.epochs = 30000;
  p.alpha_net.train.points_per_sample = 0;
  p.alpha_net.train.eval_every = 1000;

  // 441 terminal sensors carry little information on alpha: the whitened
  // misfit only grows from ~21 to ~47 across the whole range of orders. The
  // stopping tolerance tau * delta must sit within a few percent of delta
  // (tau = 2 stops at once, tau = 1.06 leaves |alpha error| ~ 0.08), and
  // tau > 1/nu then forces nu close to one and small steps.
  p.irekm.nu = 0.99;
  p.irekm.tau = 1.02;
  p.irekm.max_iter = 200;
  p.estimated_hours = 0.3;
  return p;
}

Preset paper_preset() {
  Preset p;
  p.name = "paper";
  p.grid = Grid2D(101, 101);
  p.timegrid = TimeGrid(51, 1.0);
  p.n_train = 1000;
  p.n_test = 500;
  p.sensor_lattice = Grid2D(51, 51);
  p.inversion_lattice = Grid2D(34, 34);

  p.net.hidden = {128, 128, 128, 128};
  p.net.p = 128;
  p.net.train.adam.lr = 1e-4;
  p.net.train.epochs = 10000;
  p.net.train.points_per_sample = 2000;
  p.net.train.eval_every = 500;
  p.terminal_net = p.net;
  p.terminal_net.train.points_per_sample = 0;

  p.alpha_net.hidden = {128, 128, 128};
  p.alpha_net.p = 128;
  p.alpha_net.train.adam.lr = 1e-3;
  p.alpha_net.train.epochs = 30000;
  p.alpha_net.train.points_per_sample = 4000;
  p.alpha_net.train.eval_every = 1000;
  p.alpha_train_points = 81;
  p.estimated_hours = 40.0;
  return p;
}

Preset preset_by_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + name + "' (desk, paper)");
}

double reaction_fixed(double x, double y) { return -(x * y + 4.0); }

double initial_fixed(double x, double y) {
  return 6.0 * std::sin(2.0 * kPi * x) * std::sin(3.0 * kPi * y);
}

double source_fixed(double x, double y) {
  return std::sin(3.0 * kPi * x) * std::sin(kPi * y) + 6.0 * std::exp(x * x + y * y);
}

double initial_a_f(double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); }

SubdiffusionProblem fixed_problem(const Preset& preset, double alpha, const ScalarField& a) {
  SubdiffusionProblem p;
  p.alpha = alpha;
  p.grid = preset.grid;
  p.timegrid = preset.timegrid;
  p.a = a.resample(preset.grid);
  p.c = ScalarField::from_function(preset.grid, reaction_fixed);
  p.u0 = ScalarField::from_function(preset.grid, initial_fixed);
  p.f = ScalarField::from_function(preset.grid, source_fixed);
  return p;
}

SubdiffusionProblem a_f_problem(const Preset& preset, const ScalarField& a, const ScalarField& f) {
  SubdiffusionProblem p;
  p.alpha = preset.alpha_a_f;
  p.grid = preset.grid;
  p.timegrid = preset.timegrid;
  p.a = a.resample(preset.grid);
  p.c = ScalarField(preset.grid, 0.0);
  p.u0 = ScalarField::from_function(preset.grid, initial_a_f);
  p.f = f.resample(preset.grid);
  return p;
}

ScalarField truth_coefficient(const Preset& preset) {
  SeededRng rng(preset.truth_seed, 0);
  return sample_grf_rbf(preset.grid, preset.rbf, rng);
}

}  // namespace subdiff
