#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace subdiff {

/// Uniform tensor grid on the unit square, boundary nodes included.
struct Grid2D {
  int nx = 0;
  int ny = 0;

  Grid2D() = default;
  Grid2D(int nx_, int ny_);

  double hx() const { return 1.0 / (nx - 1); }
  double hy() const { return 1.0 / (ny - 1); }
  double x(int i) const { return i * hx(); }
  double y(int j) const { return j * hy(); }
  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx + i; }
  bool on_boundary(int i, int j) const { return i == 0 || j == 0 || i == nx - 1 || j == ny - 1; }

  bool operator==(const Grid2D&) const = default;
};

/// Uniform time levels t_0 = 0, ..., t_{nt-1} = T.
struct TimeGrid {
  int nt = 0;
  double T = 1.0;

  TimeGrid() = default;
  TimeGrid(int nt_, double T_);

  double tau() const { return T / (nt - 1); }
  double t(int n) const { return n * tau(); }

  bool operator==(const TimeGrid&) const = default;
};

/// Nodal values on a Grid2D, row-major (index = j * nx + i).
struct ScalarField {
  Grid2D grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const Grid2D& g, double fill = 0.0);
  ScalarField(const Grid2D& g, std::vector<double> v);

  /// Samples fn(x, y) at every node.
  static ScalarField from_function(const Grid2D& g, const std::function<double(double, double)>& fn);

  double& operator()(int i, int j) { return values[grid.index(i, j)]; }
  double operator()(int i, int j) const { return values[grid.index(i, j)]; }

  double min() const;
  double max() const;
  bool all_finite() const;
  /// Bilinear interpolation at (x, y) in the closed unit square.
  double interpolate(double x, double y) const;
  /// Resamples onto another grid by bilinear interpolation.
  ScalarField resample(const Grid2D& target) const;
};

/// u(x, y, t) on grid x timegrid, stored [t][y][x].
struct SpaceTimeField {
  Grid2D grid;
  TimeGrid timegrid;
  std::vector<double> values;

  SpaceTimeField() = default;
  SpaceTimeField(const Grid2D& g, const TimeGrid& tg);

  std::span<double> level(int n);
  std::span<const double> level(int n) const;
  ScalarField slice(int n) const;
  double& operator()(int n, int i, int j) { return values[n * grid.size() + grid.index(i, j)]; }
  double operator()(int n, int i, int j) const { return values[n * grid.size() + grid.index(i, j)]; }
};

/// sqrt(sum |a - r|^2 / sum |r|^2). Throws DomainError when r is identically zero.
double relative_l2(std::span<const double> approx, std::span<const double> reference);

}  // namespace subdiff
