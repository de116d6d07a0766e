#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "subdiff/grid.hpp"
#include "subdiff/inversion.hpp"
#include "subdiff/onet.hpp"
#include "subdiff/randfield.hpp"
#include "subdiff/solver.hpp"

namespace subdiff {

/// Learning tasks.
///   alpha_a        (alpha, a)   -> u(x, y, t)
///   a_f            (a, f)       -> u(x, y, t), alpha fixed
///   a_terminal     a            -> u(x, y, T), alpha fixed
///   alpha_terminal alpha        -> u(x, y, T), a fixed to the inversion truth
enum class Task { AlphaA, AF, ATerminal, AlphaTerminal };

std::string to_string(Task t);
Task task_from_string(const std::string& s);
/// Whether the trunk takes (x, y, t) rather than (x, y).
bool task_has_time(Task t);

struct NetworkSettings {
  std::vector<int> hidden{128, 128, 128, 128};
  int p = 128;
  Activation activation = Activation::Tanh;
  TrainConfig train;
};

struct Preset {
  std::string name;
  Grid2D grid;
  TimeGrid timegrid;
  int n_train = 0;
  int n_test = 0;
  Grid2D sensor_lattice;     ///< where field-valued branch inputs are sampled
  Grid2D inversion_lattice;  ///< pCN parameter lattice
  RbfPrior rbf;
  KlPrior kl;
  double alpha_eps = 0.001;
  int alpha_parts = 20;
  double alpha_a_f = 0.5;        ///< fixed order of the a_f task
  double alpha_terminal = 0.5;   ///< fixed order of the a_terminal task and terminal pCN
  double alpha_interior = 0.7;   ///< fixed order of interior-data pCN
  NetworkSettings net;                   ///< alpha_a, a_f
  NetworkSettings terminal_net;          ///< a_terminal
  int terminal_n_train = 0;              ///< a_terminal training records; 0: n_train
  NetworkSettings alpha_net;             ///< alpha_terminal
  int alpha_train_points = 41;           ///< equispaced orders used to train alpha_terminal
  double sigma = 0.001;
  IrekmConfig irekm;
  PcnConfig pcn;
  std::uint64_t truth_seed = 20240501;   ///< coefficient used by the inversion experiments
  double estimated_hours = 0.0;          ///< rough end-to-end cost on one core
};

Preset desk_preset();
Preset paper_preset();
/// "desk" or "paper"; anything else is a ConfigError.
Preset preset_by_name(const std::string& name);

// Fixed problem data shared by the experiments.
double reaction_fixed(double x, double y);    // -(xy + 4)
double initial_fixed(double x, double y);     // 6 sin(2 pi x) sin(3 pi y)
double source_fixed(double x, double y);      // sin(3 pi x) sin(pi y) + 6 exp(x^2 + y^2)
double initial_a_f(double x, double y);       // sin(pi x) sin(pi y)

/// Problem with the fixed c, u0, f of the alpha_a experiments; a = `a`.
SubdiffusionProblem fixed_problem(const Preset& preset, double alpha, const ScalarField& a);
/// a_f problem: c = 0, u0 = sin(pi x) sin(pi y), given a and f.
SubdiffusionProblem a_f_problem(const Preset& preset, const ScalarField& a, const ScalarField& f);

/// The coefficient used as inversion truth (and as the fixed a of alpha_terminal).
ScalarField truth_coefficient(const Preset& preset);

}  // namespace subdiff
