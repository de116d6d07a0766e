#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "subdiff/grid.hpp"
#include "subdiff/rng.hpp"

namespace subdiff {

/// Mean-a0 Gaussian random field with squared-exponential kernel
/// k(p, q) = exp(-|p - q|^2 / (2 l^2)).
struct RbfPrior {
  double a0 = 5.0;
  double l = 0.3;
  double jitter = 1e-10;
  /// Fields with min <= positivity_floor are rejected and redrawn.
  double positivity_floor = 0.1;

  void validate() const;
};

/// Gaussian measure N(0, (-Laplace)^{-s}) with Dirichlet conditions, truncated
/// to the K leading eigenpairs phi_mn = 2 sin(m pi x) sin(n pi y).
struct KlPrior {
  double s = 2.0;
  int K = 64;

  /// (m, n) for k = 0..K-1, ascending in lambda = pi^2 (m^2 + n^2).
  std::vector<std::pair<int, int>> modes() const;
  /// gamma_k = lambda_k^{-s}, non-increasing.
  std::vector<double> gammas() const;
  /// sum_{k > K} gamma_k, summed over modes up to m, n <= cutoff.
  double truncation_error(int cutoff = 2000) const;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

std::vector<Point2> grid_points(const Grid2D& grid);

Eigen::MatrixXd rbf_covariance(std::span<const Point2> points, double l);

/// Lower Cholesky factor of K + jitter I. The jitter is multiplied by 10 until
/// the factorization succeeds or exceeds 1e-6 (FactorizationError).
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& K, double jitter,
                                     double* jitter_used = nullptr);

/// Reusable GRF sampler. Factorizes the covariance on a sampling lattice once;
/// when the lattice is coarser than the target grid, draws are bilinearly
/// interpolated onto it.
class GrfSampler {
 public:
  /// Grids up to `dense_limit` nodes are sampled directly; larger ones go
  /// through a 34x34 lattice unless `lattice` is given.
  GrfSampler(const Grid2D& grid, const RbfPrior& prior, std::optional<Grid2D> lattice = {},
             std::size_t dense_limit = 2500);

  const Grid2D& grid() const { return grid_; }
  const Grid2D& lattice() const { return lattice_; }
  const RbfPrior& prior() const { return prior_; }
  const Eigen::MatrixXd& factor() const { return chol_; }
  double jitter_used() const { return jitter_used_; }

  /// Zero-mean draw L z on the lattice.
  Eigen::VectorXd draw_lattice(SeededRng& rng) const;
  /// a0 + m on the target grid, m given on the lattice.
  ScalarField to_field(std::span<const double> lattice_values) const;
  /// a0 + L z on the target grid, redrawn while min <= positivity_floor.
  ScalarField sample(SeededRng& rng) const;

 private:
  Grid2D grid_;
  Grid2D lattice_;
  RbfPrior prior_;
  Eigen::MatrixXd chol_;
  double jitter_used_ = 0.0;
};

ScalarField sample_grf_rbf(const Grid2D& grid, const RbfPrior& prior, SeededRng& rng);

/// f = sum_k sqrt(gamma_k) zeta_k phi_k evaluated nodally, zeta_k iid N(0,1).
ScalarField sample_kl_laplacian(const Grid2D& grid, const KlPrior& prior, SeededRng& rng);

/// k-th point eps + k (1 - 2 eps) / nparts of the fractional-order grid.
double alpha_grid_point(double eps, int nparts, int k);

/// Uniform draw among the nparts + 1 grid points on [eps, 1 - eps].
double sample_alpha(double eps, int nparts, SeededRng& rng);

}  // namespace subdiff
