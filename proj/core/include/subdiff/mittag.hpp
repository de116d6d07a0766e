#pragma once

namespace subdiff {

/// Evaluation policy for the one-parameter Mittag-Leffler function E_{alpha,1}.
struct MLEvalConfig {
  double series_tol = 1e-12;  ///< relative accuracy target, in (0, 1e-6)
  double crossover = 1.0;     ///< |z| at or below which the power series is used
  int max_terms = 500;        ///< cap on series / asymptotic terms

  void validate() const;
};

/// E_{alpha,1}(z) for 0 < alpha <= 1 and real z <= 0.
///
/// Power series for |z| <= crossover. Beyond that the asymptotic expansion is
/// used when its optimally truncated error estimate meets series_tol, and
/// otherwise the real integral representation
///   E_a(-x) = sin(a pi)/(a pi) * int_0^inf exp(-w^{1/a}) x / (w^2 + 2 x w cos(a pi) + x^2) dw
/// is integrated by adaptive Gauss-Kronrod. alpha == 1 returns exp(z).
///
/// Throws DomainError for alpha outside (0,1] or z > 0, and EvaluationError
/// when no branch reaches the tolerance.
double mittag_leffler(double alpha, double z, const MLEvalConfig& cfg = {});

/// Straight Taylor summation sum_k z^k / Gamma(alpha k + 1). Accepts any real z;
/// throws EvaluationError if the terms have not fallen below tol within max_terms.
double mittag_leffler_series(double alpha, double z, double tol, int max_terms = 500);

/// Optimally truncated large-|z| expansion -sum_{k>=1} z^{-k} / Gamma(1 - alpha k), z < 0.
/// `error_estimate`, when non-null, receives the envelope of the first omitted term.
double mittag_leffler_asymptotic(double alpha, double z, int max_terms = 500,
                                 double* error_estimate = nullptr);

/// Integral-representation branch, 0 < alpha < 1, z < 0.
double mittag_leffler_integral(double alpha, double z, double tol = 1e-13);

}  // namespace subdiff
