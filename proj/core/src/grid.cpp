#include "subdiff/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "subdiff/error.hpp"

namespace subdiff {

Grid2D::Grid2D(int nx_, int ny_) : nx(nx_), ny(ny_) {
  if (nx < 3 || ny < 3) {
    throw PreconditionError("Grid2D: need at least 3 nodes per axis, got " + std::to_string(nx) +
                            "x" + std::to_string(ny));
  }
}

TimeGrid::TimeGrid(int nt_, double T_) : nt(nt_), T(T_) {
  if (nt < 2) throw PreconditionError("TimeGrid: need nt >= 2");
  if (!(T > 0.0)) throw PreconditionError("TimeGrid: T must be positive");
}

ScalarField::ScalarField(const Grid2D& g, double fill) : grid(g), values(g.size(), fill) {}

ScalarField::ScalarField(const Grid2D& g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (values.size() != grid.size()) {
    throw ShapeError("ScalarField: expected " + std::to_string(grid.size()) + " values, got " +
                     std::to_string(values.size()));
  }
}

ScalarField ScalarField::from_function(const Grid2D& g,
                                       const std::function<double(double, double)>& fn) {
  ScalarField f(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) f(i, j) = fn(g.x(i), g.y(j));
  }
  return f;
}

double ScalarField::min() const { return *std::min_element(values.begin(), values.end()); }
double ScalarField::max() const { return *std::max_element(values.begin(), values.end()); }

bool ScalarField::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double ScalarField::interpolate(double x, double y) const {
  const double fx = std::clamp(x, 0.0, 1.0) * (grid.nx - 1);
  const double fy = std::clamp(y, 0.0, 1.0) * (grid.ny - 1);
  const int i0 = std::min(static_cast<int>(fx), grid.nx - 2);
  const int j0 = std::min(static_cast<int>(fy), grid.ny - 2);
  const double sx = fx - i0;
  const double sy = fy - j0;
  const auto& f = *this;
  return (1 - sx) * (1 - sy) * f(i0, j0) + sx * (1 - sy) * f(i0 + 1, j0) +
         (1 - sx) * sy * f(i0, j0 + 1) + sx * sy * f(i0 + 1, j0 + 1);
}

ScalarField ScalarField::resample(const Grid2D& target) const {
  if (target == grid) return *this;
  ScalarField out(target);
  for (int j = 0; j < target.ny; ++j) {
    for (int i = 0; i < target.nx; ++i) out(i, j) = interpolate(target.x(i), target.y(j));
  }
  return out;
}

SpaceTimeField::SpaceTimeField(const Grid2D& g, const TimeGrid& tg)
    : grid(g), timegrid(tg), values(g.size() * static_cast<std::size_t>(tg.nt), 0.0) {}

std::span<double> SpaceTimeField::level(int n) {
  return std::span<double>(values).subspan(n * grid.size(), grid.size());
}

std::span<const double> SpaceTimeField::level(int n) const {
  return std::span<const double>(values).subspan(n * grid.size(), grid.size());
}

ScalarField SpaceTimeField::slice(int n) const {
  auto lv = level(n);
  return ScalarField(grid, std::vector<double>(lv.begin(), lv.end()));
}

double relative_l2(std::span<const double> approx, std::span<const double> reference) {
  if (approx.size() != reference.size()) {
    throw ShapeError("relative_l2: length mismatch (" + std::to_string(approx.size()) + " vs " +
                     std::to_string(reference.size()) + ")");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < approx.size(); ++k) {
    const double d = approx[k] - reference[k];
    num += d * d;
    den += reference[k] * reference[k];
  }
  if (den == 0.0) throw DomainError("relative_l2: reference has zero norm");
  return std::sqrt(num / den);
}

}  // namespace subdiff
