#include "subdiff/randfield.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "subdiff/error.hpp"

namespace subdiff {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kMaxJitter = 1e-6;
}  // namespace

void RbfPrior::validate() const {
  if (!(l > 0.0)) throw PreconditionError("RbfPrior: length-scale must be positive");
  if (!(jitter >= 0.0)) throw PreconditionError("RbfPrior: jitter must be non-negative");
}

std::vector<std::pair<int, int>> KlPrior::modes() const {
  if (K < 1) throw PreconditionError("KlPrior: K must be >= 1");
  // Every mode with m^2 + n^2 <= r2 is a candidate; grow r2 until K fit.
  int r = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(K)))) + 2;
  std::vector<std::pair<int, int>> cand;
  for (int m = 1; m <= 2 * r; ++m) {
    for (int n = 1; n <= 2 * r; ++n) cand.emplace_back(m, n);
  }
  std::stable_sort(cand.begin(), cand.end(), [](const auto& p, const auto& q) {
    const int lp = p.first * p.first + p.second * p.second;
    const int lq = q.first * q.first + q.second * q.second;
    if (lp != lq) return lp < lq;
    return p < q;
  });
  cand.resize(static_cast<std::size_t>(K));
  return cand;
}

std::vector<double> KlPrior::gammas() const {
  std::vector<double> g;
  for (auto [m, n] : modes()) g.push_back(std::pow(kPi * kPi * (m * m + n * n), -s));
  return g;
}

double KlPrior::truncation_error(int cutoff) const {
  if (!(s > 1.0)) throw PreconditionError("KlPrior: s must exceed 1 for a trace-class covariance");
  double total = 0.0;
  for (int m = 1; m <= cutoff; ++m) {
    for (int n = 1; n <= cutoff; ++n) total += std::pow(kPi * kPi * (m * m + n * n), -s);
  }
  double head = 0.0;
  for (double g : gammas()) head += g;
  return total - head;
}

std::vector<Point2> grid_points(const Grid2D& grid) {
  std::vector<Point2> pts;
  pts.reserve(grid.size());
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) pts.push_back({grid.x(i), grid.y(j)});
  }
  return pts;
}

Eigen::MatrixXd rbf_covariance(std::span<const Point2> points, double l) {
  if (!(l > 0.0)) throw PreconditionError("rbf_covariance: length-scale must be positive");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd K(n, n);
  const double inv = 1.0 / (2.0 * l * l);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double dx = points[i].x - points[j].x;
      const double dy = points[i].y - points[j].y;
      K(i, j) = K(j, i) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return K;
}

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& K, double jitter, double* jitter_used) {
  double j = jitter;
  const Eigen::Index n = K.rows();
  while (true) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += j;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      if (jitter_used != nullptr) *jitter_used = j;
      return llt.matrixL();
    }
    if (j >= kMaxJitter) break;
    j = (j == 0.0) ? 1e-12 : std::min(j * 10.0, kMaxJitter);
  }
  throw FactorizationError("cholesky_with_jitter: covariance of size " + std::to_string(n) +
                           " not positive definite with jitter up to 1e-6");
}

GrfSampler::GrfSampler(const Grid2D& grid, const RbfPrior& prior, std::optional<Grid2D> lattice,
                       std::size_t dense_limit)
    : grid_(grid), prior_(prior) {
  prior_.validate();
  if (lattice) {
    lattice_ = *lattice;
  } else if (grid.size() <= dense_limit) {
    lattice_ = grid;
  } else {
    lattice_ = Grid2D(34, 34);
  }
  const auto pts = grid_points(lattice_);
  chol_ = cholesky_with_jitter(rbf_covariance(pts, prior_.l), prior_.jitter, &jitter_used_);
}

Eigen::VectorXd GrfSampler::draw_lattice(SeededRng& rng) const {
  Eigen::VectorXd z(chol_.rows());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return chol_.triangularView<Eigen::Lower>() * z;
}

ScalarField GrfSampler::to_field(std::span<const double> lattice_values) const {
  if (lattice_values.size() != lattice_.size()) throw ShapeError("GrfSampler: lattice size mismatch");
  ScalarField m(lattice_, std::vector<double>(lattice_values.begin(), lattice_values.end()));
  for (double& v : m.values) v += prior_.a0;
  return m.resample(grid_);
}

ScalarField GrfSampler::sample(SeededRng& rng) const {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Eigen::VectorXd m = draw_lattice(rng);
    ScalarField a = to_field(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
    if (a.min() > prior_.positivity_floor) return a;
  }
  throw PreconditionError("GrfSampler: could not draw a field above the positivity floor");
}

ScalarField sample_grf_rbf(const Grid2D& grid, const RbfPrior& prior, SeededRng& rng) {
  return GrfSampler(grid, prior).sample(rng);
}

ScalarField sample_kl_laplacian(const Grid2D& grid, const KlPrior& prior, SeededRng& rng) {
  const auto modes = prior.modes();
  const auto gam = prior.gammas();
  ScalarField f(grid);
  std::vector<double> sx(grid.nx), sy(grid.ny);
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const double amp = 2.0 * std::sqrt(gam[k]) * rng.normal();
    const auto [m, n] = modes[k];
    for (int i = 0; i < grid.nx; ++i) sx[i] = std::sin(m * kPi * grid.x(i));
    for (int j = 0; j < grid.ny; ++j) sy[j] = std::sin(n * kPi * grid.y(j));
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) f(i, j) += amp * sx[i] * sy[j];
    }
  }
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      if (grid.on_boundary(i, j)) f(i, j) = 0.0;
    }
  }
  return f;
}

double alpha_grid_point(double eps, int nparts, int k) {
  if (!(eps > 0.0 && eps < 0.5)) throw PreconditionError("alpha grid: eps must lie in (0, 1/2)");
  if (nparts < 1) throw PreconditionError("alpha grid: nparts must be >= 1");
  if (k < 0 || k > nparts) throw PreconditionError("alpha grid: index out of range");
  if (k == nparts) return 1.0 - eps;
  return eps + k * (1.0 - 2.0 * eps) / nparts;
}

double sample_alpha(double eps, int nparts, SeededRng& rng) {
  const auto k = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(nparts) + 1));
  return alpha_grid_point(eps, nparts, k);
}

}  // namespace subdiff
