#include "subdiff/mittag.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "subdiff/error.hpp"

namespace subdiff {
namespace {

constexpr double kPi = std::numbers::pi;

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw DomainError("mittag_leffler: alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
}

// log|Gamma(y)| and sign(Gamma(y)) for non-pole y.
double log_abs_gamma(double y, int& sign) {
  sign = 1;
  if (y < 0.0) {
    // Gamma alternates sign between consecutive negative integers.
    const double n = std::floor(-y);
    sign = (static_cast<long long>(n) % 2 == 0) ? -1 : 1;
  }
  return std::lgamma(y);
}

bool is_gamma_pole(double y) {
  return y <= 0.0 && std::abs(y - std::round(y)) < 1e-13;
}

}  // namespace

void MLEvalConfig::validate() const {
  if (!(series_tol > 0.0 && series_tol < 1e-6)) {
    throw PreconditionError("MLEvalConfig: series_tol must lie in (0, 1e-6)");
  }
  if (!(crossover > 0.0)) throw PreconditionError("MLEvalConfig: crossover must be positive");
  if (max_terms < 50) throw PreconditionError("MLEvalConfig: max_terms must be >= 50");
}

double mittag_leffler_series(double alpha, double z, double tol, int max_terms) {
  if (!(alpha > 0.0)) throw DomainError("mittag_leffler_series: alpha must be positive");
  if (z == 0.0) return 1.0;

  const double log_abs_z = std::log(std::abs(z));
  // Neumaier-compensated sum
  double sum = 1.0;
  double comp = 0.0;
  for (int k = 1; k < max_terms; ++k) {
    const double log_mag = k * log_abs_z - std::lgamma(alpha * k + 1.0);
    double term = std::exp(log_mag);
    if (z < 0.0 && (k % 2 == 1)) term = -term;

    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term)) {
      comp += (sum - t) + term;
    } else {
      comp += (term - t) + sum;
    }
    sum = t;

    // Past the peak the terms decrease monotonically; only stop there.
    const double next_log_mag = (k + 1) * log_abs_z - std::lgamma(alpha * (k + 1) + 1.0);
    const bool decreasing = next_log_mag < log_mag;
    if (decreasing && std::abs(term) <= tol * std::abs(sum + comp)) {
      return sum + comp;
    }
  }
  throw EvaluationError("mittag_leffler_series: no convergence within " +
                        std::to_string(max_terms) + " terms (alpha=" + std::to_string(alpha) +
                        ", z=" + std::to_string(z) + ")");
}

double mittag_leffler_asymptotic(double alpha, double z, int max_terms, double* error_estimate) {
  check_alpha(alpha);
  if (!(z < 0.0)) throw DomainError("mittag_leffler_asymptotic: z must be negative");
  const double x = -z;
  const double log_x = std::log(x);

  // |1/Gamma(1 - a k)| <= Gamma(a k) / pi; truncate where this envelope is smallest.
  auto log_envelope = [&](int k) { return -k * log_x + std::lgamma(alpha * k) - std::log(kPi); };

  double sum = 0.0;
  int k = 1;
  for (; k <= max_terms; ++k) {
    const double y = 1.0 - alpha * k;
    if (!is_gamma_pole(y)) {
      int sign = 1;
      const double lg = log_abs_gamma(y, sign);
      double term = std::exp(-k * log_x - lg) * sign;
      if (k % 2 == 0) term = -term;  // (-1)^{k-1}
      sum += term;
    }
    if (log_envelope(k + 1) >= log_envelope(k)) break;
  }
  if (error_estimate != nullptr) {
    *error_estimate = std::exp(log_envelope(std::min(k, max_terms) + 1));
  }
  return sum;
}

double mittag_leffler_integral(double alpha, double z, double tol) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("mittag_leffler_integral: alpha must lie in (0, 1)");
  }
  if (!(z < 0.0)) throw DomainError("mittag_leffler_integral: z must be negative");
  const double x = -z;
  const double inv_alpha = 1.0 / alpha;

  // The kernel x / (w^2 + 2xw cos(alpha pi) + x^2) is a Lorentzian centred at
  // p = -x cos(alpha pi) with half-width s = x sin(alpha pi).
  const double p = -x * std::cos(alpha * kPi);
  const double s = x * std::sin(alpha * kPi);
  // exp(-w^{1/alpha}) underflows beyond 745^alpha.
  const double w_max = std::pow(745.0, alpha);

  auto decay = [&](double w) { return std::exp(-std::pow(w, inv_alpha)); };
  auto lorentz = [&](double w) { return x / ((w - p) * (w - p) + s * s); };

  // For a narrow peak inside the range, subtract the first two Taylor terms of
  // the decay at p and integrate them in closed form.
  const bool subtract = p > 0.0 && p < w_max && s < 0.25 * p;
  double g0 = 0.0;
  double g1 = 0.0;
  double closed = 0.0;
  if (subtract) {
    g0 = decay(p);
    g1 = -inv_alpha * std::pow(p, inv_alpha - 1.0) * g0;
    closed = x * g0 / s * (std::atan((w_max - p) / s) + std::atan(p / s)) +
             0.5 * x * g1 *
                 std::log(((w_max - p) * (w_max - p) + s * s) / (p * p + s * s));
  }
  auto integrand = [&](double w) {
    double g = decay(w);
    if (subtract) g -= g0 + g1 * (w - p);
    return g * lorentz(w);
  };

  std::vector<double> breaks{0.0, w_max};
  if (!(p > 0.0 && std::abs(1.0 - p) < 0.5 * s)) breaks.push_back(1.0);
  if (p > 0.0) {
    breaks.push_back(p);
    for (double k = 1.0; k < 1e4; k *= 8.0) {
      breaks.push_back(p - k * s);
      breaks.push_back(p + k * s);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  std::erase_if(breaks, [&](double b) { return b < 0.0 || b > w_max; });
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double l, double r) { return r - l < 1e-14 * (1.0 + r); }),
               breaks.end());

  using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;
  // Relative tolerances below ~1e-14 are not reachable in double precision.
  const double qtol = std::max(tol, 2e-14);
  double total = closed;
  double total_err = 0.0;
  double l1 = std::abs(closed);
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    double err = 0.0;
    double seg_l1 = 0.0;
    total += Quad::integrate(integrand, breaks[i], breaks[i + 1], 12, qtol, &err, &seg_l1);
    total_err += err;
    l1 += seg_l1;
  }
  const double scale = std::sin(alpha * kPi) / (alpha * kPi);
  const double value = scale * total;
  if (!std::isfinite(value) || total_err > 100.0 * qtol * l1) {
    throw EvaluationError("mittag_leffler_integral: quadrature did not converge (alpha=" +
                          std::to_string(alpha) + ", z=" + std::to_string(z) + ")");
  }
  return value;
}

double mittag_leffler(double alpha, double z, const MLEvalConfig& cfg) {
  check_alpha(alpha);
  cfg.validate();
  if (std::isnan(z)) throw DomainError("mittag_leffler: z is NaN");
  if (z > 0.0) throw DomainError("mittag_leffler: only z <= 0 is supported");
  if (z == 0.0) return 1.0;
  if (alpha == 1.0) return std::exp(z);
  if (std::isinf(z)) return 0.0;

  if (-z <= cfg.crossover) {
    // For small alpha the terms barely decay near |z| = 1.
    try {
      return mittag_leffler_series(alpha, z, cfg.series_tol, cfg.max_terms);
    } catch (const EvaluationError&) {
      return mittag_leffler_integral(alpha, z, cfg.series_tol * 0.1);
    }
  }
  double err = std::numeric_limits<double>::infinity();
  const double asym = mittag_leffler_asymptotic(alpha, z, cfg.max_terms, &err);
  if (asym > 0.0 && err <= 0.1 * cfg.series_tol * asym) return asym;
  return mittag_leffler_integral(alpha, z, cfg.series_tol * 0.1);
}

}  // namespace subdiff
