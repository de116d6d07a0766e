#pragma once

#include <functional>
#include <memory>
#include <optional>

#include <Eigen/Dense>

#include "subdiff/grid.hpp"
#include "subdiff/inversion.hpp"
#include "subdiff/onet.hpp"
#include "subdiff/solver.hpp"

namespace subdiff {

// Sensor indices address the flattened space-time history [t][y][x].

/// Every node of the last time level.
std::vector<std::size_t> terminal_sensors(const Grid2D& grid, const TimeGrid& tg);

/// Nodes with lo <= x, y <= hi at every time level.
std::vector<std::size_t> box_sensors(const Grid2D& grid, const TimeGrid& tg, double lo = 0.25,
                                     double hi = 0.75);

/// Query coordinates (x, y) or (x, y, t) of the sensors, one column each.
Eigen::MatrixXd sensor_coords(const Grid2D& grid, const TimeGrid& tg,
                              std::span<const std::size_t> sensors, bool with_time);

/// Restriction of a solver history to the sensors.
Eigen::VectorXd restrict_to_sensors(const SpaceTimeField& u, std::span<const std::size_t> sensors);

/// alpha -> u at the sensors, by the L1 solver with all other data fixed.
class FdmAlphaMap final : public ForwardMap {
 public:
  FdmAlphaMap(SubdiffusionProblem base, std::vector<std::size_t> sensors, L1SolveOptions opts = {});

  InputKind input_kind() const override { return InputKind::Scalar; }
  std::size_t input_size() const override { return 1; }
  std::size_t output_size() const override { return sensors_.size(); }
  std::string kind() const override { return "fdm"; }
  Eigen::VectorXd evaluate(std::span<const double> m) const override;
  using ForwardMap::evaluate;
  bool admissible(std::span<const double> m) const override;

 private:
  SubdiffusionProblem base_;
  std::vector<std::size_t> sensors_;
  L1SolveOptions opts_;
};

/// Maps a perturbation m on a lattice to a = a0 + m on the solver grid (bilinear
/// resampling when the lattice differs from the grid).
class CoefficientEncoder {
 public:
  CoefficientEncoder(Grid2D lattice, Grid2D grid, double a0);

  const Grid2D& lattice() const { return lattice_; }
  double a0() const { return a0_; }
  ScalarField coefficient(std::span<const double> m) const;
  /// a sampled on another lattice (branch sensors).
  Eigen::VectorXd coefficient_on(std::span<const double> m, const Grid2D& target) const;

 private:
  Grid2D lattice_;
  Grid2D grid_;
  double a0_;
};

/// m -> u at the sensors, where a = a0 + m; proposals with min(a) <= floor are inadmissible.
class FdmCoefficientMap final : public ForwardMap {
 public:
  FdmCoefficientMap(SubdiffusionProblem base, CoefficientEncoder encoder,
                    std::vector<std::size_t> sensors, double floor = 0.05,
                    L1SolveOptions opts = {});

  InputKind input_kind() const override { return InputKind::Field; }
  std::size_t input_size() const override { return encoder_.lattice().size(); }
  std::size_t output_size() const override { return sensors_.size(); }
  std::string kind() const override { return "fdm"; }
  Eigen::VectorXd evaluate(std::span<const double> m) const override;
  using ForwardMap::evaluate;
  bool admissible(std::span<const double> m) const override;

 private:
  SubdiffusionProblem base_;
  CoefficientEncoder encoder_;
  std::vector<std::size_t> sensors_;
  double floor_;
  L1SolveOptions opts_;
};

/// Operator-network forward map with one free branch. The trunk at the sensor
/// coordinates and the product of the fixed branches are computed once, so an
/// evaluation costs one branch pass plus a p x M product.
class SurrogateMap final : public ForwardMap {
 public:
  /// Turns the inversion parameter into the free branch's raw input.
  using Encoder = std::function<Eigen::VectorXd(std::span<const double>)>;
  using Admissible = std::function<bool(std::span<const double>)>;

  struct Spec {
    int free_branch = 0;
    std::vector<Eigen::VectorXd> fixed_inputs;  ///< one per branch; the free slot is ignored
    Eigen::MatrixXd coords;                     ///< coord_dim x M
    OutputTransform output;                     ///< fitted on exactly these M points, or identity
    InputKind input_kind = InputKind::Scalar;
    std::size_t input_size = 1;
    Encoder encode;          ///< identity when empty
    Admissible admissible;   ///< always true when empty
  };

  SurrogateMap(std::shared_ptr<const OperatorNet> net, Spec spec);

  InputKind input_kind() const override { return spec_.input_kind; }
  std::size_t input_size() const override { return spec_.input_size; }
  std::size_t output_size() const override { return static_cast<std::size_t>(trunk_.cols()); }
  std::string kind() const override { return "surrogate"; }
  Eigen::VectorXd evaluate(std::span<const double> m) const override;
  using ForwardMap::evaluate;
  bool admissible(std::span<const double> m) const override;

 private:
  std::shared_ptr<const OperatorNet> net_;
  Spec spec_;
  Eigen::MatrixXd trunk_;        ///< p x M
  Eigen::VectorXd fixed_prod_;   ///< product of the fixed branch outputs (p)
};

}  // namespace subdiff
