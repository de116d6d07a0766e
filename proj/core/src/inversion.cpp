#include "subdiff/inversion.hpp"

#include <algorithm>
#include <cmath>

#include "subdiff/parallel.hpp"

namespace subdiff {

double ForwardMap::evaluate_scalar_input(double m) const {
  const Eigen::VectorXd out = evaluate(std::span<const double>(&m, 1));
  if (out.size() != 1) throw ShapeError("evaluate_scalar_input: map output is not scalar");
  return out[0];
}

FunctionMap::FunctionMap(InputKind kind, std::size_t in, std::size_t out, Fn fn, std::string label)
    : kind_(kind), in_(in), out_(out), fn_(std::move(fn)), label_(std::move(label)) {}

Eigen::VectorXd FunctionMap::evaluate(std::span<const double> m) const {
  if (m.size() != in_) throw ShapeError("FunctionMap: input size mismatch");
  Eigen::VectorXd out = fn_(m);
  if (static_cast<std::size_t>(out.size()) != out_) throw ShapeError("FunctionMap: output size mismatch");
  return out;
}

Observation observe(std::span<const double> u, std::span<const std::size_t> sensors, double sigma,
                    SeededRng& rng) {
  if (sigma < 0.0) throw PreconditionError("observe: sigma must be non-negative");
  Observation obs;
  obs.sensors.assign(sensors.begin(), sensors.end());
  obs.sigma = sigma;
  obs.d.resize(static_cast<Eigen::Index>(sensors.size()));
  for (std::size_t k = 0; k < sensors.size(); ++k) {
    if (sensors[k] >= u.size()) throw PreconditionError("observe: sensor index out of range");
    obs.d[static_cast<Eigen::Index>(k)] = u[sensors[k]];
  }
  if (sigma > 0.0) {
    for (Eigen::Index k = 0; k < obs.d.size(); ++k) obs.d[k] += sigma * rng.normal();
  }
  return obs;
}

double sigma_norm(const Eigen::VectorXd& r, double sigma) {
  const double n = r.norm();
  if (sigma > 0.0) return n / sigma;
  return n == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

double potential(std::span<const double> m, const ForwardMap& fwd, const Observation& obs) {
  if (!fwd.admissible(m)) return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd g = fwd.evaluate(m);
  if (g.size() != obs.d.size()) throw ShapeError("potential: forward output length differs from data");
  const double s = sigma_norm(obs.d - g, obs.sigma);
  return 0.5 * s * s;
}

// ---------------------------------------------------------------------------

void IrekmConfig::validate() const {
  if (J < 2) throw ConfigError("IREKM: ensemble size must be >= 2");
  if (!(nu > 0.0 && nu < 1.0)) throw ConfigError("IREKM: nu must lie in (0,1)");
  if (!(tau > 1.0 / nu)) throw ConfigError("IREKM: tau must exceed 1/nu");
  if (!(mu0 > 0.0)) throw ConfigError("IREKM: mu0 must be positive");
  if (max_iter < 0) throw ConfigError("IREKM: max_iter must be non-negative");
  if (!(lower < upper)) throw ConfigError("IREKM: empty clipping interval");
  if (delta_mode == DeltaMode::Synthetic && !alpha_true) {
    throw ConfigError("IREKM: synthetic discrepancy mode needs the true alpha");
  }
  if (initial_ensemble && static_cast<int>(initial_ensemble->size()) != J) {
    throw ConfigError("IREKM: initial ensemble size differs from J");
  }
}

void ensemble_covariances(std::span<const double> alphas, const Eigen::MatrixXd& G,
                          Eigen::RowVectorXd& c_ag, Eigen::MatrixXd& c_gg) {
  const auto J = static_cast<Eigen::Index>(alphas.size());
  if (G.cols() != J || J < 2) throw ShapeError("ensemble_covariances: need J >= 2 matching columns");
  const Eigen::VectorXd gbar = G.rowwise().mean();
  const Eigen::MatrixXd U = G.colwise() - gbar;
  double abar = 0.0;
  for (double a : alphas) abar += a;
  abar /= static_cast<double>(J);
  Eigen::RowVectorXd da(J);
  for (Eigen::Index j = 0; j < J; ++j) da[j] = alphas[j] - abar;
  const double inv = 1.0 / static_cast<double>(J - 1);
  c_ag = inv * da * U.transpose();
  c_gg = inv * U * U.transpose();
}

Eigen::MatrixXd kalman_solve(const Eigen::MatrixXd& U_centered, double mu, double sigma,
                             const Eigen::MatrixXd& R) {
  const double s = mu * sigma * sigma;
  if (!(s > 0.0)) throw InversionError("kalman_solve: mu * sigma^2 must be positive");
  const Eigen::Index J = U_centered.cols();
  const Eigen::MatrixXd V = U_centered / std::sqrt(static_cast<double>(J - 1));
  Eigen::MatrixXd K = V.transpose() * V;
  K.diagonal().array() += s;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) throw InversionError("kalman_solve: singular J x J system");
  const Eigen::MatrixXd VtR = V.transpose() * R;
  return (R - V * llt.solve(VtR)) / s;
}

double select_mu(const Eigen::MatrixXd& U_centered, double sigma, const Eigen::VectorXd& r_mean,
                 double mu0, double nu, int max_doublings, int* doublings) {
  const double rhs = nu * sigma_norm(r_mean, sigma);
  double mu = mu0;
  for (int i = 0; i <= max_doublings; ++i) {
    const Eigen::VectorXd y = kalman_solve(U_centered, mu, sigma, r_mean);
    const double lhs = mu * sigma * y.norm();
    if (lhs >= rhs) {
      if (doublings != nullptr) *doublings = i;
      return mu;
    }
    mu *= 2.0;
  }
  throw InversionError("select_mu: no admissible mu within the doubling cap");
}

IrekmResult irekm_invert(const ForwardMap& fwd, const Observation& obs, const IrekmConfig& cfg,
                         SeededRng& rng) {
  cfg.validate();
  if (fwd.input_kind() != ForwardMap::InputKind::Scalar || fwd.input_size() != 1) {
    throw InversionError("irekm_invert: forward map must take a scalar input");
  }
  const auto M = static_cast<Eigen::Index>(obs.size());
  if (static_cast<Eigen::Index>(fwd.output_size()) != M) {
    throw ShapeError("irekm_invert: forward map output differs from data length");
  }
  const int J = cfg.J;

  std::vector<double> alpha(static_cast<std::size_t>(J));
  if (cfg.initial_ensemble) {
    alpha = *cfg.initial_ensemble;
  } else {
    for (auto& a : alpha) a = rng.uniform(cfg.lower, cfg.upper);
  }

  IrekmResult res;
  if (cfg.delta_mode == DeltaMode::Synthetic) {
    const double at = *cfg.alpha_true;
    res.delta = sigma_norm(obs.d - fwd.evaluate(std::span<const double>(&at, 1)), obs.sigma);
  } else {
    res.delta = std::sqrt(static_cast<double>(M));
  }

  Eigen::MatrixXd G(M, J);
  double best_disc = std::numeric_limits<double>::infinity();
  double best_alpha = 0.0;
  for (int n = 0;; ++n) {
    parallel_for(J, cfg.threads, [&](int j) {
      G.col(j) = fwd.evaluate(std::span<const double>(&alpha[static_cast<std::size_t>(j)], 1));
    });
    const Eigen::VectorXd gbar = G.rowwise().mean();
    double abar = 0.0;
    for (double a : alpha) abar += a;
    abar /= J;
    const Eigen::VectorXd rbar = obs.d - gbar;
    const double disc = sigma_norm(rbar, obs.sigma);
    res.discrepancy.push_back(disc);
    res.mean_alpha.push_back(abar);
    if (disc < best_disc) {
      best_disc = disc;
      best_alpha = abar;
    }
    if (disc <= cfg.tau * res.delta) {
      res.alpha = abar;
      res.converged = true;
      break;
    }
    if (n == cfg.max_iter) {
      res.alpha = best_alpha;
      res.max_iter_reached = true;
      break;
    }

    const Eigen::MatrixXd U = G.colwise() - gbar;
    Eigen::RowVectorXd da(J);
    for (int j = 0; j < J; ++j) da[j] = alpha[j] - abar;
    const Eigen::RowVectorXd c_ag = da * U.transpose() / static_cast<double>(J - 1);

    double mu = select_mu(U, obs.sigma, rbar, cfg.mu0, cfg.nu, cfg.max_mu_doublings);
    const Eigen::MatrixXd R = (-G).colwise() + obs.d;
    Eigen::MatrixXd S;
    for (int tries = 0;; ++tries) {
      try {
        S = kalman_solve(U, mu, obs.sigma, R);
        break;
      } catch (const InversionError&) {
        if (tries >= cfg.max_mu_doublings) throw;
        mu *= 2.0;
      }
    }
    res.mu.push_back(mu);
    const Eigen::RowVectorXd step = c_ag * S;
    for (int j = 0; j < J; ++j) alpha[j] = std::min(cfg.upper, std::max(cfg.lower, alpha[j] + step[j]));
    ++res.iterations;
  }
  res.ensemble = alpha;
  return res;
}

// ---------------------------------------------------------------------------

void PcnConfig::validate() const {
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("pCN: beta must lie in [0,1)");
  if (n_iter < 1) throw ConfigError("pCN: n_iter must be positive");
  if (burn_in < 0 || burn_in >= n_iter) throw ConfigError("pCN: burn_in must lie in [0, n_iter)");
  if (store_every < 1) throw ConfigError("pCN: store_every must be >= 1");
}

PcnResult pcn_mcmc(const ForwardMap& fwd, const Observation& obs, const PriorSampler& prior,
                   const Eigen::VectorXd& m0, const PcnConfig& cfg, SeededRng& rng) {
  cfg.validate();
  if (static_cast<std::size_t>(m0.size()) != fwd.input_size()) {
    throw ShapeError("pcn_mcmc: initial state size differs from forward-map input");
  }
  auto phi = [&](const Eigen::VectorXd& m, int k) {
    try {
      return potential(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())), fwd, obs);
    } catch (const Error& e) {
      throw ChainAborted(std::string("pcn_mcmc: forward map failed at iteration ") +
                             std::to_string(k) + ": " + e.what(),
                         k, m);
    }
  };

  Eigen::VectorXd m = m0;
  double phi_m = phi(m, 0);
  if (!std::isfinite(phi_m)) throw InversionError("pcn_mcmc: initial state is inadmissible");

  const double keep = std::sqrt(1.0 - cfg.beta * cfg.beta);
  PcnResult res;
  res.mean = Eigen::VectorXd::Zero(m.size());
  res.second_moment = Eigen::VectorXd::Zero(m.size());
  res.potential_trace.reserve(static_cast<std::size_t>(cfg.n_iter));
  Eigen::VectorXd prop(m.size());

  for (int k = 1; k <= cfg.n_iter; ++k) {
    const Eigen::VectorXd v = prior(rng);
    if (v.size() != m.size()) throw ShapeError("pcn_mcmc: prior draw has the wrong size");
    prop = keep * m + cfg.beta * v;
    const double phi_p = phi(prop, k);
    const double rho = std::isfinite(phi_p) ? std::min(1.0, std::exp(phi_m - phi_p)) : 0.0;
    const double u = rng.uniform();
    ++res.proposals;
    if (u < rho) {
      m.swap(prop);
      phi_m = phi_p;
      ++res.accepted;
    }
    if (k > cfg.burn_in) {
      res.mean += m;
      res.second_moment += m.cwiseAbs2();
      if (cfg.store_samples && (k - cfg.burn_in) % cfg.store_every == 0) res.samples.push_back(m);
    }
    res.potential_trace.push_back(phi_m);
  }
  const double kept = static_cast<double>(cfg.n_iter - cfg.burn_in);
  res.mean /= kept;
  res.second_moment /= kept;
  res.acceptance_rate = static_cast<double>(res.accepted) / res.proposals;
  res.final_potential = phi_m;
  return res;
}

}  // namespace subdiff
