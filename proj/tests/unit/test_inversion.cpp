#include <doctest.h>

#include <cmath>
#include <limits>

#include "subdiff/error.hpp"
#include "subdiff/inversion.hpp"
#include "subdiff/randfield.hpp"

using namespace subdiff;

namespace {

// Monotone scalar map with a known inverse: g(a)_k = (a + k/10)^2.
FunctionMap quadratic_map(int m) {
  return FunctionMap(ForwardMap::InputKind::Scalar, 1, static_cast<std::size_t>(m),
                     [m](std::span<const double> a) {
                       Eigen::VectorXd out(m);
                       for (int k = 0; k < m; ++k) out[k] = std::pow(a[0] + k / 10.0, 2);
                       return out;
                     });
}

}  // namespace

TEST_CASE("observation noise") {
  std::vector<double> u(100000);
  for (std::size_t k = 0; k < u.size(); ++k) u[k] = std::sin(0.001 * k);
  std::vector<std::size_t> sensors(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) sensors[k] = k;
  SeededRng rng(4);
  const Observation clean = observe(u, sensors, 0.0, rng);
  for (std::size_t k = 0; k < u.size(); k += 997) CHECK(clean.d[k] == u[k]);
  const Observation obs = observe(u, sensors, 0.01, rng);
  double s2 = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s2 += std::pow(obs.d[k] - u[k], 2);
  CHECK(std::sqrt(s2 / u.size()) == doctest::Approx(0.01).epsilon(0.02));
}

TEST_CASE("potential and weighted norm") {
  const FunctionMap g(ForwardMap::InputKind::Scalar, 1, 1,
                      [](std::span<const double> m) { return Eigen::VectorXd::Constant(1, m[0]); });
  Observation obs;
  obs.sigma = 0.1;
  obs.d = Eigen::VectorXd::Constant(1, 2.0);
  const double m0[] = {2.0};
  const double m1[] = {2.1};
  CHECK(potential(m0, g, obs) == 0.0);
  CHECK(potential(m1, g, obs) == doctest::Approx(0.5));
  CHECK(sigma_norm(Eigen::VectorXd::Zero(3), 0.0) == 0.0);
  CHECK(std::isinf(sigma_norm(Eigen::VectorXd::Ones(3), 0.0)));

  // E[Phi(truth)] = M / 2.
  const auto q = quadratic_map(50);
  SeededRng rng(3);
  double mean = 0.0;
  const int trials = 2000;
  const double a[] = {0.4};
  const Eigen::VectorXd clean = q.evaluate(Eigen::VectorXd::Constant(1, 0.4));
  for (int t = 0; t < trials; ++t) {
    Observation o;
    o.sigma = 0.01;
    o.d = clean;
    for (Eigen::Index k = 0; k < o.d.size(); ++k) o.d[k] += 0.01 * rng.normal();
    mean += potential(a, q, o);
  }
  CHECK(mean / trials == doctest::Approx(25.0).epsilon(0.03));
}

TEST_CASE("scalar ensemble covariances") {
  const std::vector<double> alphas{0.1, 0.4, 0.7};
  Eigen::MatrixXd G(2, 3);
  G << 1.0, 2.0, 4.0, 3.0, 1.0, 2.0;
  Eigen::RowVectorXd cag;
  Eigen::MatrixXd cgg;
  ensemble_covariances(alphas, G, cag, cgg);
  // By hand: alpha mean 0.4, row means 7/3 and 2.
  CHECK(cag(0) == doctest::Approx((-0.3 * (1 - 7.0 / 3) + 0.0 + 0.3 * (4 - 7.0 / 3)) / 2));
  CHECK(cag(1) == doctest::Approx((-0.3 * 1.0 + 0.0 + 0.3 * 0.0) / 2));
  CHECK(cgg(0, 0) == doctest::Approx((16.0 / 9 + 1.0 / 9 + 25.0 / 9) / 2));
  CHECK(cgg(0, 1) == doctest::Approx(((-4.0 / 3) * 1 + (-1.0 / 3) * (-1) + (5.0 / 3) * 0) / 2));
  CHECK(cgg(0, 1) == cgg(1, 0));
}

TEST_CASE("Kalman solve matches a dense solve") {
  SeededRng rng(9);
  const int M = 12, J = 5;
  Eigen::MatrixXd U = Eigen::MatrixXd::NullaryExpr(M, J, [&] { return rng.normal(); });
  U = U.colwise() - U.rowwise().mean();
  const Eigen::MatrixXd R = Eigen::MatrixXd::NullaryExpr(M, 3, [&] { return rng.normal(); });
  const double mu = 2.5, sigma = 0.3;
  const Eigen::MatrixXd C = U * U.transpose() / (J - 1) +
                            mu * sigma * sigma * Eigen::MatrixXd::Identity(M, M);
  const Eigen::MatrixXd want = C.ldlt().solve(R);
  CHECK((kalman_solve(U, mu, sigma, R) - want).norm() < 1e-10 * want.norm());
  CHECK_THROWS_AS(kalman_solve(U, 0.0, sigma, R), InversionError);
}

TEST_CASE("mu selection is the first doubling that crosses") {
  SeededRng rng(21);
  const int M = 8, J = 6;
  Eigen::MatrixXd U = Eigen::MatrixXd::NullaryExpr(M, J, [&] { return 3.0 * rng.normal(); });
  U = U.colwise() - U.rowwise().mean();
  const Eigen::VectorXd r = Eigen::VectorXd::NullaryExpr(M, [&] { return rng.normal(); });
  const double sigma = 0.05, nu = 0.6;
  int n = -1;
  const double mu = select_mu(U, sigma, r, 1.0, nu, 200, &n);
  auto lhs = [&](double m) {
    return m * sigma * kalman_solve(U, m, sigma, r).norm();
  };
  const double rhs = nu * r.norm() / sigma;
  CHECK(mu == std::ldexp(1.0, n));
  CHECK(lhs(mu) >= rhs);
  if (n > 0) CHECK(lhs(mu / 2) < rhs);
}

TEST_CASE("IREKM stops at once for a truth-initialised ensemble") {
  const auto g = quadratic_map(5);
  Observation obs;
  obs.sigma = 0.001;
  obs.d = g.evaluate(Eigen::VectorXd::Constant(1, 0.35));
  IrekmConfig cfg;
  cfg.J = 4;
  cfg.alpha_true = 0.35;
  cfg.delta_mode = DeltaMode::Practical;
  cfg.initial_ensemble = std::vector<double>(4, 0.35);
  SeededRng rng(1);
  const IrekmResult r = irekm_invert(g, obs, cfg, rng);
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.alpha == 0.35);
}

TEST_CASE("IREKM recovers a scalar and keeps members in bounds") {
  const auto g = quadratic_map(20);
  SeededRng noise(2);
  Observation obs;
  obs.sigma = 0.001;
  obs.d = g.evaluate(Eigen::VectorXd::Constant(1, 0.62));
  for (Eigen::Index k = 0; k < obs.d.size(); ++k) obs.d[k] += 0.001 * noise.normal();
  IrekmConfig cfg;
  cfg.J = 30;
  cfg.alpha_true = 0.62;
  cfg.threads = 3;
  SeededRng rng(7);
  const IrekmResult r = irekm_invert(g, obs, cfg, rng);
  CHECK(r.converged);
  CHECK(r.alpha == doctest::Approx(0.62).epsilon(0.02));
  for (double a : r.ensemble) {
    CHECK(a >= 0.001);
    CHECK(a <= 0.999);
  }
  CHECK(r.discrepancy.back() <= cfg.tau * r.delta);

  // The thread count does not change the result.
  cfg.threads = 1;
  SeededRng rng1(7);
  CHECK(irekm_invert(g, obs, cfg, rng1).alpha == r.alpha);

  IrekmConfig bad = cfg;
  bad.tau = 1.5;  // tau must exceed 1/nu
  CHECK_THROWS(bad.validate());
}

TEST_CASE("pCN with a flat likelihood accepts everything") {
  const Grid2D g(6, 6);
  const GrfSampler sampler(g, RbfPrior{});
  const FunctionMap zero(ForwardMap::InputKind::Field, 36, 1,
                         [](std::span<const double>) { return Eigen::VectorXd::Zero(1); });
  Observation obs;
  obs.sigma = 1.0;
  obs.d = Eigen::VectorXd::Zero(1);
  PcnConfig cfg;
  cfg.n_iter = 3000;
  cfg.burn_in = 100;
  SeededRng rng(5);
  const auto r = pcn_mcmc(zero, obs, [&](SeededRng& s) { return sampler.draw_lattice(s); },
                          Eigen::VectorXd::Zero(36), cfg, rng);
  CHECK(r.acceptance_rate == 1.0);
  CHECK(r.accepted == r.proposals);
}

TEST_CASE("pCN with beta = 0 never moves") {
  const auto q = quadratic_map(3);
  Observation obs;
  obs.sigma = 0.1;
  obs.d = q.evaluate(Eigen::VectorXd::Constant(1, 0.5));
  PcnConfig cfg;
  cfg.beta = 0.0;
  cfg.n_iter = 50;
  cfg.burn_in = 10;
  SeededRng rng(1);
  const auto r = pcn_mcmc(q, obs, [](SeededRng& s) { return Eigen::VectorXd::Constant(1, s.normal()); },
                          Eigen::VectorXd::Constant(1, 0.3), cfg, rng);
  CHECK(r.mean[0] == doctest::Approx(0.3).epsilon(1e-13));
  CHECK(r.acceptance_rate == 1.0);
  cfg.beta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("pCN rejects inadmissible proposals and reports aborts") {
  const FunctionMap fails(ForwardMap::InputKind::Scalar, 1, 1, [](std::span<const double> m) -> Eigen::VectorXd {
    if (m[0] > 0.5) throw SolverError("boom", 1.0);
    return Eigen::VectorXd::Zero(1);
  });
  Observation obs;
  obs.sigma = 1.0;
  obs.d = Eigen::VectorXd::Zero(1);
  PcnConfig cfg;
  cfg.beta = 0.9;
  cfg.n_iter = 1000;
  cfg.burn_in = 0;
  SeededRng rng(3);
  try {
    pcn_mcmc(fails, obs, [](SeededRng& s) { return Eigen::VectorXd::Constant(1, s.normal()); },
             Eigen::VectorXd::Zero(1), cfg, rng);
    FAIL("expected an abort");
  } catch (const ChainAborted& e) {
    CHECK(e.iteration() >= 1);
    CHECK(e.state().size() == 1);
  }
}
