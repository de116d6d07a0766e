#pragma once

#include <optional>
#include <span>
#include <vector>

#include "subdiff/grid.hpp"
#include "subdiff/mittag.hpp"

namespace subdiff {

/// Data of  D_t^alpha u = div(a grad u) + c u + f  on (0,1)^2 x (0,T],
/// u(.,0) = u0, u = 0 on the boundary.
struct SubdiffusionProblem {
  double alpha = 0.5;
  Grid2D grid;
  TimeGrid timegrid;
  ScalarField a;
  ScalarField c;
  ScalarField f;
  ScalarField u0;

  /// Checks 0 < alpha < 1, a > 0, c <= 0 and that all fields live on `grid`.
  void validate() const;
};

/// Interface coefficient a_{i+1/2,j} from the two adjacent nodal values.
enum class InterfaceMean { Arithmetic, Harmonic };

/// L1 weights b_j = (j+1)^{1-alpha} - j^{1-alpha}, j = 0..n-1.
std::vector<double> l1_weights(double alpha, int n);

/// tau^{-alpha} / Gamma(2 - alpha).
double l1_scale(double alpha, double tau);

/// Conservative five-point discretization of -div(a grad .) - c on the
/// interior nodes, Dirichlet rows eliminated. Symmetric positive definite.
/// Unknowns are the (nx-2)(ny-2) interior nodes, row-major.
class EllipticOperator {
 public:
  EllipticOperator() = default;
  EllipticOperator(int nix, int niy, std::vector<double> diag, std::vector<double> east,
                   std::vector<double> north);

  int interior_nx() const { return nix_; }
  int interior_ny() const { return niy_; }
  std::size_t size() const { return diag_.size(); }

  /// y = (A + shift I) x
  void apply(std::span<const double> x, std::span<double> y, double shift = 0.0) const;
  double diagonal(std::size_t k) const { return diag_[k]; }
  /// Coupling between k and its +x / +y neighbour (non-positive).
  double east(std::size_t k) const { return east_[k]; }
  double north(std::size_t k) const { return north_[k]; }

 private:
  int nix_ = 0;
  int niy_ = 0;
  std::vector<double> diag_;
  std::vector<double> east_;
  std::vector<double> north_;
};

/// Throws PreconditionError if a <= 0 or c > 0 anywhere.
EllipticOperator assemble_elliptic(const ScalarField& a, const ScalarField& c,
                                   InterfaceMean mean = InterfaceMean::Arithmetic);

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned CG for (A + shift I) x = b; x holds the initial guess.
/// Throws SolverError when the relative residual has not reached tol within max_iter.
CgResult solve_pcg(const EllipticOperator& A, double shift, std::span<const double> b,
                   std::span<double> x, double tol, int max_iter);

struct L1SolveOptions {
  double cg_tol = 1e-10;
  int max_cg_iter = 0;                 ///< 0 selects 10 * nx * ny
  std::optional<int> last_level;       ///< stop after this level (levels above stay zero)
  InterfaceMean mean = InterfaceMean::Arithmetic;
};

/// L1 implicit finite-difference solve. Returns the full time history.
SpaceTimeField solve_subdiffusion_l1(const SubdiffusionProblem& problem,
                                     const L1SolveOptions& opts = {});

/// Coefficient of phi_{mn}(x,y) = 2 sin(m pi x) sin(n pi y).
struct SineMode {
  int m = 1;
  int n = 1;
  double coef = 0.0;
};

/// Eigen-expansion solution for constant a > 0, c <= 0 with u0 and f given as
/// finite sine-mode combinations, evaluated at time t on `grid`.
ScalarField spectral_reference(double alpha, double a_const, double c_const,
                               std::span<const SineMode> u0_modes,
                               std::span<const SineMode> f_modes, double t, const Grid2D& grid,
                               const MLEvalConfig& ml = {});

}  // namespace subdiff
