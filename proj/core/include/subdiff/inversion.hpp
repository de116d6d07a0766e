#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subdiff/error.hpp"
#include "subdiff/rng.hpp"

namespace subdiff {

/// Parameter-to-observation map g = O o F.
class ForwardMap {
 public:
  enum class InputKind { Scalar, Field };

  virtual ~ForwardMap() = default;
  virtual InputKind input_kind() const = 0;
  virtual std::size_t input_size() const = 0;
  virtual std::size_t output_size() const = 0;
  /// "fdm", "surrogate", ...
  virtual std::string kind() const = 0;
  virtual Eigen::VectorXd evaluate(std::span<const double> m) const = 0;
  /// Parameters the underlying model cannot accept (e.g. non-positive a).
  virtual bool admissible(std::span<const double> /*m*/) const { return true; }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& m) const {
    return evaluate(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
  }
  double evaluate_scalar_input(double m) const;
};

/// Wraps a callable; used for analytic maps and tests.
class FunctionMap final : public ForwardMap {
 public:
  using Fn = std::function<Eigen::VectorXd(std::span<const double>)>;
  FunctionMap(InputKind kind, std::size_t in, std::size_t out, Fn fn, std::string label = "function");

  InputKind input_kind() const override { return kind_; }
  std::size_t input_size() const override { return in_; }
  std::size_t output_size() const override { return out_; }
  std::string kind() const override { return label_; }
  Eigen::VectorXd evaluate(std::span<const double> m) const override;
  using ForwardMap::evaluate;

 private:
  InputKind kind_;
  std::size_t in_;
  std::size_t out_;
  Fn fn_;
  std::string label_;
};

/// Noisy data d = g(m) + eta, eta ~ N(0, sigma^2 I).
struct Observation {
  std::vector<std::size_t> sensors;  ///< indices into the flattened solver output
  Eigen::VectorXd d;
  double sigma = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(d.size()); }
};

/// Restricts `u` to the sensor indices and adds seeded Gaussian noise.
Observation observe(std::span<const double> u, std::span<const std::size_t> sensors, double sigma,
                    SeededRng& rng);

/// |r|_Sigma = |r| / sigma. For sigma == 0 this is 0 when r == 0 and +inf otherwise.
double sigma_norm(const Eigen::VectorXd& r, double sigma);

/// 1/2 |d - g(m)|_Sigma^2; +inf for inadmissible m.
double potential(std::span<const double> m, const ForwardMap& fwd, const Observation& obs);

// ---------------------------------------------------------------------------
// Iterative regularizing ensemble Kalman method for a scalar order alpha.

enum class DeltaMode { Synthetic, Practical };

struct IrekmConfig {
  int J = 100;
  double nu = 0.6;
  double tau = 2.0;
  double mu0 = 1.0;
  int max_iter = 50;
  double lower = 0.001;
  double upper = 0.999;
  DeltaMode delta_mode = DeltaMode::Synthetic;
  std::optional<double> alpha_true;  ///< required in synthetic mode
  std::optional<std::vector<double>> initial_ensemble;  ///< overrides the prior draw
  int max_mu_doublings = 200;
  int threads = 1;  ///< workers for the member evaluations; results do not depend on it

  void validate() const;
};

struct IrekmResult {
  double alpha = 0.0;  ///< ensemble mean at the stopping iterate
  int iterations = 0;  ///< number of analysis updates performed
  bool converged = false;
  bool max_iter_reached = false;
  double delta = 0.0;
  std::vector<double> discrepancy;  ///< |d - mean G_n|_Sigma per iterate
  std::vector<double> mean_alpha;   ///< ensemble mean per iterate
  std::vector<double> mu;           ///< mu_n per update
  std::vector<double> ensemble;     ///< final members
};

/// Sample covariances with 1/(J-1) normalization.
/// G is M x J, alphas has J entries. Returns C^{alpha G} (1 x M) and C^{GG} (M x M).
void ensemble_covariances(std::span<const double> alphas, const Eigen::MatrixXd& G,
                          Eigen::RowVectorXd& c_ag, Eigen::MatrixXd& c_gg);

/// Applies (C^{GG} + mu sigma^2 I)^{-1} to the columns of R, with
/// C^{GG} = U U^T / (J-1) and U the centered predictions (M x J); uses the
/// J x J Woodbury form. Throws InversionError when mu * sigma^2 == 0.
Eigen::MatrixXd kalman_solve(const Eigen::MatrixXd& U_centered, double mu, double sigma,
                             const Eigen::MatrixXd& R);

/// mu = 2^N mu0 for the first N with
///   mu |Sigma^{1/2} (C^{GG} + mu Sigma)^{-1} r| >= nu |Sigma^{-1/2} r|.
double select_mu(const Eigen::MatrixXd& U_centered, double sigma, const Eigen::VectorXd& r_mean,
                 double mu0, double nu, int max_doublings, int* doublings = nullptr);

IrekmResult irekm_invert(const ForwardMap& fwd, const Observation& obs, const IrekmConfig& cfg,
                         SeededRng& rng);

// ---------------------------------------------------------------------------
// Preconditioned Crank-Nicolson MCMC.

struct PcnConfig {
  double beta = 0.005;
  int n_iter = 10000;
  int burn_in = 2000;
  bool store_samples = false;
  int store_every = 1;

  void validate() const;
};

struct PcnResult {
  Eigen::VectorXd mean;           ///< mean of m over the post-burn-in samples
  Eigen::VectorXd second_moment;  ///< mean of m^2 over the same samples
  int accepted = 0;
  int proposals = 0;
  double acceptance_rate = 0.0;
  double final_potential = 0.0;
  std::vector<double> potential_trace;
  std::vector<Eigen::VectorXd> samples;
};

/// Raised when the forward map fails mid-chain; carries the chain position.
class ChainAborted : public InversionError {
 public:
  ChainAborted(const std::string& what, int iteration, Eigen::VectorXd state)
      : InversionError(what), iteration_(iteration), state_(std::move(state)) {}
  int iteration() const noexcept { return iteration_; }
  const Eigen::VectorXd& state() const noexcept { return state_; }

 private:
  int iteration_;
  Eigen::VectorXd state_;
};

using PriorSampler = std::function<Eigen::VectorXd(SeededRng&)>;

/// m~ = sqrt(1 - beta^2) m + beta v, v ~ N(0, C); accept with
/// min{1, exp(Phi(m) - Phi(m~))}.
PcnResult pcn_mcmc(const ForwardMap& fwd, const Observation& obs, const PriorSampler& prior,
                   const Eigen::VectorXd& m0, const PcnConfig& cfg, SeededRng& rng);

}  // namespace subdiff
