#include "subdiff/solver.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "subdiff/error.hpp"

namespace subdiff {

void SubdiffusionProblem::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("SubdiffusionProblem: alpha must lie in (0,1), got " + std::to_string(alpha));
  }
  for (const ScalarField* fld : {&a, &c, &f, &u0}) {
    if (!(fld->grid == grid) || fld->values.size() != grid.size()) {
      throw ShapeError("SubdiffusionProblem: coefficient field is not on the problem grid");
    }
    if (!fld->all_finite()) throw PreconditionError("SubdiffusionProblem: non-finite field value");
  }
  if (a.min() <= 0.0) throw PreconditionError("SubdiffusionProblem: a must be positive");
  if (c.max() > 0.0) throw PreconditionError("SubdiffusionProblem: c must be non-positive");
}

std::vector<double> l1_weights(double alpha, int n) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("l1_weights: alpha must lie in (0,1), got " + std::to_string(alpha));
  }
  if (n < 1) throw PreconditionError("l1_weights: n must be >= 1");
  const double p = 1.0 - alpha;
  std::vector<double> b(n);
  double prev = 0.0;
  for (int j = 0; j < n; ++j) {
    const double next = std::pow(static_cast<double>(j + 1), p);
    b[j] = next - prev;
    prev = next;
  }
  return b;
}

double l1_scale(double alpha, double tau) { return std::pow(tau, -alpha) / std::tgamma(2.0 - alpha); }

EllipticOperator::EllipticOperator(int nix, int niy, std::vector<double> diag,
                                   std::vector<double> east, std::vector<double> north)
    : nix_(nix), niy_(niy), diag_(std::move(diag)), east_(std::move(east)), north_(std::move(north)) {}

void EllipticOperator::apply(std::span<const double> x, std::span<double> y, double shift) const {
  const int nx = nix_;
  const int ny = niy_;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * nx + i;
      double s = (diag_[k] + shift) * x[k];
      if (i + 1 < nx) s += east_[k] * x[k + 1];
      if (i > 0) s += east_[k - 1] * x[k - 1];
      if (j + 1 < ny) s += north_[k] * x[k + nx];
      if (j > 0) s += north_[k - nx] * x[k - nx];
      y[k] = s;
    }
  }
}

EllipticOperator assemble_elliptic(const ScalarField& a, const ScalarField& c, InterfaceMean mean) {
  const Grid2D& g = a.grid;
  if (!(c.grid == g)) throw ShapeError("assemble_elliptic: a and c live on different grids");
  if (a.min() <= 0.0) throw PreconditionError("assemble_elliptic: a must be positive everywhere");
  if (c.max() > 0.0) throw PreconditionError("assemble_elliptic: c must be non-positive everywhere");

  const int nix = g.nx - 2;
  const int niy = g.ny - 2;
  const double ihx2 = 1.0 / (g.hx() * g.hx());
  const double ihy2 = 1.0 / (g.hy() * g.hy());
  auto face = [mean](double l, double r) {
    return mean == InterfaceMean::Arithmetic ? 0.5 * (l + r) : 2.0 * l * r / (l + r);
  };

  const std::size_t n = static_cast<std::size_t>(nix) * niy;
  std::vector<double> diag(n), east(n, 0.0), north(n, 0.0);
  for (int jj = 0; jj < niy; ++jj) {
    for (int ii = 0; ii < nix; ++ii) {
      const int i = ii + 1;
      const int j = jj + 1;
      const std::size_t k = static_cast<std::size_t>(jj) * nix + ii;
      const double ae = face(a(i, j), a(i + 1, j));
      const double aw = face(a(i, j), a(i - 1, j));
      const double an = face(a(i, j), a(i, j + 1));
      const double as = face(a(i, j), a(i, j - 1));
      diag[k] = (ae + aw) * ihx2 + (an + as) * ihy2 - c(i, j);
      if (ii + 1 < nix) east[k] = -ae * ihx2;
      if (jj + 1 < niy) north[k] = -an * ihy2;
    }
  }
  return EllipticOperator(nix, niy, std::move(diag), std::move(east), std::move(north));
}

CgResult solve_pcg(const EllipticOperator& A, double shift, std::span<const double> b,
                   std::span<double> x, double tol, int max_iter) {
  const std::size_t n = A.size();
  std::vector<double> r(n), z(n), p(n), q(n), inv_diag(n);
  for (std::size_t k = 0; k < n; ++k) inv_diag[k] = 1.0 / (A.diagonal(k) + shift);

  double bnorm2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) bnorm2 += b[k] * b[k];
  if (bnorm2 == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    return {};
  }
  const double bnorm = std::sqrt(bnorm2);

  A.apply(x, q, shift);
  double rnorm2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    r[k] = b[k] - q[k];
    rnorm2 += r[k] * r[k];
  }
  if (std::sqrt(rnorm2) <= tol * bnorm) return {0, std::sqrt(rnorm2) / bnorm};

  double rz = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    z[k] = inv_diag[k] * r[k];
    p[k] = z[k];
    rz += r[k] * z[k];
  }
  for (int it = 1; it <= max_iter; ++it) {
    A.apply(p, q, shift);
    double pq = 0.0;
    for (std::size_t k = 0; k < n; ++k) pq += p[k] * q[k];
    const double step = rz / pq;
    rnorm2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += step * p[k];
      r[k] -= step * q[k];
      rnorm2 += r[k] * r[k];
    }
    const double rel = std::sqrt(rnorm2) / bnorm;
    if (rel <= tol) return {it, rel};
    double rz_new = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      z[k] = inv_diag[k] * r[k];
      rz_new += r[k] * z[k];
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
  }
  const double rel = std::sqrt(rnorm2) / bnorm;
  throw SolverError("solve_pcg: no convergence in " + std::to_string(max_iter) +
                        " iterations, relative residual " + std::to_string(rel),
                    rel);
}

SpaceTimeField solve_subdiffusion_l1(const SubdiffusionProblem& problem, const L1SolveOptions& opts) {
  problem.validate();
  const Grid2D& g = problem.grid;
  const TimeGrid& tg = problem.timegrid;
  const int last = opts.last_level.value_or(tg.nt - 1);
  if (last < 0 || last >= tg.nt) throw PreconditionError("solve_subdiffusion_l1: bad last_level");

  const EllipticOperator A = assemble_elliptic(problem.a, problem.c, opts.mean);
  const int nix = g.nx - 2;
  const int niy = g.ny - 2;
  const std::size_t m = A.size();
  const int max_iter = opts.max_cg_iter > 0 ? opts.max_cg_iter : 10 * g.nx * g.ny;

  // Interior-only history; u^0 is u0 restricted to interior nodes.
  std::vector<std::vector<double>> hist(last + 1, std::vector<double>(m, 0.0));
  std::vector<double> f_int(m);
  for (int jj = 0; jj < niy; ++jj) {
    for (int ii = 0; ii < nix; ++ii) {
      const std::size_t k = static_cast<std::size_t>(jj) * nix + ii;
      hist[0][k] = problem.u0(ii + 1, jj + 1);
      f_int[k] = problem.f(ii + 1, jj + 1);
    }
  }

  if (last > 0) {
    const double d = l1_scale(problem.alpha, tg.tau());
    const std::vector<double> b = l1_weights(problem.alpha, last);
    std::vector<double> rhs(m);
    for (int n = 1; n <= last; ++n) {
      // d [ sum_{j=1}^{n-1} (b_{n-j-1} - b_{n-j}) u^j + b_{n-1} u^0 ] + f
      for (std::size_t k = 0; k < m; ++k) rhs[k] = b[n - 1] * hist[0][k];
      for (int jl = 1; jl < n; ++jl) {
        const double w = b[n - jl - 1] - b[n - jl];
        const std::vector<double>& uj = hist[jl];
        for (std::size_t k = 0; k < m; ++k) rhs[k] += w * uj[k];
      }
      for (std::size_t k = 0; k < m; ++k) rhs[k] = d * rhs[k] + f_int[k];

      hist[n] = hist[n - 1];
      solve_pcg(A, d, rhs, hist[n], opts.cg_tol, max_iter);
    }
  }

  SpaceTimeField u(g, tg);
  for (int n = 0; n <= last; ++n) {
    for (int jj = 0; jj < niy; ++jj) {
      for (int ii = 0; ii < nix; ++ii) {
        u(n, ii + 1, jj + 1) = hist[n][static_cast<std::size_t>(jj) * nix + ii];
      }
    }
  }
  return u;
}

ScalarField spectral_reference(double alpha, double a_const, double c_const,
                               std::span<const SineMode> u0_modes,
                               std::span<const SineMode> f_modes, double t, const Grid2D& grid,
                               const MLEvalConfig& ml) {
  constexpr double pi = std::numbers::pi;
  if (!(a_const > 0.0)) throw PreconditionError("spectral_reference: a must be positive");
  if (c_const > 0.0) throw PreconditionError("spectral_reference: c must be non-positive");
  if (t < 0.0) throw PreconditionError("spectral_reference: t must be non-negative");

  ScalarField u(grid);
  auto add_mode = [&](int m, int n, double amp) {
    for (int j = 0; j < grid.ny; ++j) {
      const double sy = std::sin(n * pi * grid.y(j));
      for (int i = 0; i < grid.nx; ++i) {
        u(i, j) += amp * 2.0 * std::sin(m * pi * grid.x(i)) * sy;
      }
    }
  };
  auto eigenvalue = [&](int m, int n) {
    const double lam = a_const * pi * pi * (m * m + n * n) - c_const;
    if (!(lam > 0.0)) throw PreconditionError("spectral_reference: non-positive eigenvalue");
    return lam;
  };
  auto relax = [&](double lam) {
    return t == 0.0 ? 1.0 : mittag_leffler(alpha, -lam * std::pow(t, alpha), ml);
  };

  for (const SineMode& md : u0_modes) {
    add_mode(md.m, md.n, md.coef * relax(eigenvalue(md.m, md.n)));
  }
  for (const SineMode& md : f_modes) {
    const double lam = eigenvalue(md.m, md.n);
    add_mode(md.m, md.n, (1.0 - relax(lam)) / lam * md.coef);
  }
  // Sine modes vanish on the boundary analytically; pin the rounding residue.
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      if (grid.on_boundary(i, j)) u(i, j) = 0.0;
    }
  }
  return u;
}

}  // namespace subdiff
