#include <doctest.h>

#include <cmath>

#include "subdiff/error.hpp"
#include "subdiff/mittag.hpp"

using namespace subdiff;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// e^{x^2} erfc(x) by the continued fraction for large x, direct product otherwise.
double erfcx(double x) {
  if (x < 5.0) return std::exp(x * x) * std::erfc(x);
  double f = 0.0;
  for (int k = 60; k >= 1; --k) f = (k / 2.0) / (x + f);
  return 1.0 / (std::sqrt(M_PI) * (x + f));
}

}  // namespace

TEST_CASE("alpha = 1 reduces to the exponential") {
  for (double x = 0.0; x <= 20.0; x += 0.25) {
    CHECK(rel(mittag_leffler(1.0, -x), std::exp(-x)) <= 1e-10);
  }
}

TEST_CASE("alpha = 1/2 matches the scaled complementary error function") {
  for (double x = 0.0; x <= 5.0; x += 0.05) {
    CHECK(rel(mittag_leffler(0.5, -x), erfcx(x)) <= 1e-8);
  }
  // Beyond the oracle range the asymptotic branch should still agree.
  for (double x : {8.0, 15.0, 30.0}) CHECK(rel(mittag_leffler(0.5, -x), erfcx(x)) <= 1e-8);
}

TEST_CASE("value at zero and monotone decay") {
  for (double a : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    CHECK(mittag_leffler(a, 0.0) == 1.0);
    double prev = 1.0;
    for (double x = 0.1; x < 40.0; x *= 1.3) {
      const double v = mittag_leffler(a, -x);
      CHECK(v > 0.0);
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("series and integral agree where both apply") {
  for (double a : {0.25, 0.5, 0.75, 0.95}) {
    for (double x : {0.5, 1.5, 3.0}) {
      // Cancellation ruins the plain series once x^k / Gamma(a k + 1) peaks above 1e4.
      if (a < 0.5 && x > 2.0) continue;
      const double s = mittag_leffler_series(a, -x, 1e-15, 2000);
      const double q = mittag_leffler_integral(a, -x, 1e-13);
      CHECK(rel(q, s) <= 1e-9);
    }
  }
}

TEST_CASE("small orders near the series crossover") {
  // Terms decay like 0.9^k here, so the series alone still converges.
  for (double a : {0.02, 0.05, 0.1}) {
    const double s = mittag_leffler_series(a, -0.9, 1e-15, 2000);
    CHECK(rel(mittag_leffler_integral(a, -0.9, 1e-13), s) <= 1e-9);
    CHECK(rel(mittag_leffler(a, -0.9), s) <= 1e-10);
  }
  // Just past |z| = 1 only the integral is usable; continuity across the switch.
  for (double a : {0.02, 0.05}) {
    CHECK(rel(mittag_leffler(a, -1.0), mittag_leffler(a, -1.0 - 1e-9)) < 1e-6);
  }
}

TEST_CASE("asymptotic expansion for large arguments") {
  // E_a(-x) ~ x^{-1} / Gamma(1 - a) to leading order.
  for (double a : {0.3, 0.6}) {
    const double x = 1e4;
    double err = 0.0;
    const double v = mittag_leffler_asymptotic(a, -x, 500, &err);
    CHECK(rel(v, 1.0 / (x * std::tgamma(1.0 - a))) < 1e-3);
    CHECK(err < 1e-12);
  }
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(mittag_leffler(0.0, -1.0), DomainError);
  CHECK_THROWS_AS(mittag_leffler(1.5, -1.0), DomainError);
  CHECK_THROWS_AS(mittag_leffler(0.5, 1.0), DomainError);
  MLEvalConfig bad;
  bad.series_tol = 0.1;
  CHECK_THROWS(mittag_leffler(0.5, -1.0, bad));
}
