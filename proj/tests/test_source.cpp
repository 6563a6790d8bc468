#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "coincx/math_util.hpp"
#include "coincx/source.hpp"

using namespace coincx;

TEST_CASE("poisson pmf") {
  CHECK(poisson_pmf(1.0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(poisson_pmf(0.0, 0) == 1.0);
  CHECK(poisson_pmf(0.0, 5) == 0.0);
  CHECK_THROWS_AS(poisson_pmf(-1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(poisson_pmf(1.0, -1), std::invalid_argument);

  SUBCASE("normalization at lambda = 5") {
    double sum = 0.0;
    for (int m = 0; m <= 200; ++m) sum += poisson_pmf(5.0, m);
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }

  SUBCASE("log-domain recurrence holds for large m") {
    // P(m)/P(m-1) = lambda/m, including across the log-domain switch.
    for (int m : {21, 50, 150}) {
      const double ratio = poisson_pmf(30.0, m) / poisson_pmf(30.0, m - 1);
      CHECK(ratio == doctest::Approx(30.0 / m).epsilon(1e-11));
    }
  }
}

TEST_CASE("side peak counts") {
  SourceParams p;
  p.lambda = 0.01;
  p.eps_a = p.eps_b = 0.1;
  p.n_pulses = 1000000;

  SUBCASE("reference value at n = 1") {
    // Independent high-precision evaluation of the closed form.
    const long double trig = 1.0L - std::exp(-0.01L);
    const long double expect = 0.01L * trig * trig * (1000000.0L - 1.0L);
    CHECK(peak_counts(p, 1) == doctest::Approx(static_cast<double>(expect)).epsilon(1e-12));
    CHECK(peak_counts(p, 1) == doctest::Approx(0.990057).epsilon(1e-5));
  }

  SUBCASE("zero emission gives zero counts") {
    p.lambda = 0.0;
    for (int n = 1; n <= 5; ++n) CHECK(peak_counts(p, n) == 0.0);
  }

  SUBCASE("domain errors") {
    CHECK_THROWS_AS(peak_counts(p, 0), std::invalid_argument);
    CHECK_THROWS_AS(peak_counts(p, p.n_pulses), std::invalid_argument);
  }

  SUBCASE("successive-peak ratio identity") {
    p.lambda = 0.3;
    for (int n = 1; n <= 4; ++n) {
      const double got = peak_counts(p, n) / peak_counts(p, n + 1);
      const double expect = std::exp(p.eps_b * p.lambda) *
                            static_cast<double>(p.n_pulses - n) /
                            static_cast<double>(p.n_pulses - n - 1);
      CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("strictly decreasing in n") {
    p.lambda = 0.2;
    double prev = peak_counts(p, 1);
    for (int n = 2; n <= 10; ++n) {
      const double cur = peak_counts(p, n);
      CHECK(cur < prev);
      prev = cur;
    }
  }

  SUBCASE("saturates at eps_a eps_b (N_p - 1) for huge lambda") {
    p.lambda = 50.0;
    CHECK(peak_counts(p, 1) ==
          doctest::Approx(p.eps_a * p.eps_b * (p.n_pulses - 1)).epsilon(1e-8));
  }
}

TEST_CASE("central peak counts") {
  SourceParams p;
  p.lambda = 0.01;
  p.eps_a = p.eps_b = 0.1;
  p.n_pulses = 1000000;
  CHECK(central_peak_counts(p) == doctest::Approx(1.0).epsilon(1e-12));

  p.lambda = 0.0;
  CHECK(central_peak_counts(p) == 0.0);

  SUBCASE("equal-peak limit at small lambda") {
    p.lambda = 1e-3;
    const double central = central_peak_counts(p);
    const double side = peak_counts(p, 1);
    // The exact relative gap is lambda - 7 lambda^2/12 + 1/N_p, i.e. the
    // peaks agree at the 0.1% level for lambda = 1e-3.
    const double gap = std::fabs(central - side) / central;
    const double expect = p.lambda - 7.0 * p.lambda * p.lambda / 12.0 +
                          1.0 / static_cast<double>(p.n_pulses);
    CHECK(gap == doctest::Approx(expect).epsilon(1e-4));
    CHECK(gap < 1.05e-3);
  }
}

TEST_CASE("trigger densities") {
  TemporalModel tm;
  tm.sigma = 1.41;
  const double tau0 = 11.8;

  SUBCASE("start density is a unit Gaussian at zero") {
    const double peak = trigger_density(tm, Detector::start, 0.0, tau0);
    CHECK(peak == doctest::Approx(1.0 / (1.41 * std::sqrt(2.0 * M_PI))).epsilon(1e-12));
    CHECK(peak == doctest::Approx(0.28295).epsilon(1e-4));
  }

  SUBCASE("stop density integrates to the number of peaks") {
    auto f = [&](double t) { return trigger_density(tm, Detector::stop, t, tau0); };
    const double integral = trapezoid(f, -120.0, 120.0, 24000);
    CHECK(integral == doctest::Approx(7.0).epsilon(1e-6));
  }

  SUBCASE("stop density peaks at integer multiples of tau0") {
    for (int i = -3; i <= 3; ++i) {
      const double at_peak = trigger_density(tm, Detector::stop, i * tau0, tau0);
      const double off = trigger_density(tm, Detector::stop, i * tau0 + 3.0, tau0);
      CHECK(at_peak > off);
    }
  }

  SUBCASE("continuous mode is flat") {
    for (double t : {-33.0, 0.0, 7.5, 120.0}) {
      CHECK(trigger_density(tm, Detector::start, t, tau0, SourceMode::continuous) == 1.0);
      CHECK(trigger_density(tm, Detector::stop, t, tau0, SourceMode::continuous) == 1.0);
    }
  }
}

TEST_CASE("parameter validation") {
  SourceParams p;
  p.lambda = -0.1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.lambda = 0.1;
  p.tau0 = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.tau0 = 11.8;
  p.eps_a = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.eps_a = 0.6;
  p.eps_b = 0.6;  // combined assignment probability above one
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  TemporalModel tm;
  tm.sigma = 0.0;
  CHECK_THROWS_AS(tm.validate(), std::invalid_argument);
}
