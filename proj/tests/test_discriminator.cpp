#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "coincx/discriminator.hpp"
#include "coincx/math_util.hpp"

using namespace coincx;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Closed form for two uniform [0,1] channels: the partner average height
// above threshold is (1+v)/2, so F = k (1+v) / (2 (1-v)) while v + k <= 1.
double uniform_loss_oracle(double k, double v_th) {
  return k * (1.0 + v_th) / (2.0 * (1.0 - v_th));
}

} // namespace

TEST_CASE("accepted fraction") {
  const auto u = PulseHeightDistribution::uniform(0.0, 1.0);
  CHECK(accepted_fraction(u, 0.15) == doctest::Approx(0.85).epsilon(1e-12));
  CHECK(accepted_fraction(u, 0.0) == 1.0);

  bool above = false;
  CHECK(accepted_fraction(u, 1.5, &above) == 0.0);
  CHECK(above);

  SUBCASE("non-increasing in the threshold") {
    double prev = 1.0;
    for (double v = 0.0; v <= 1.0; v += 0.05) {
      const double f = accepted_fraction(u, v);
      CHECK(f <= prev + 1e-15);
      prev = f;
    }
  }

  SUBCASE("empirical partial bins are exact") {
    const auto e = PulseHeightDistribution::empirical({0.0, 0.5, 1.0}, {1.0, 1.0});
    CHECK(accepted_fraction(e, 0.25) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(accepted_fraction(e, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("density normalization of the parametric families") {
  const auto tg = PulseHeightDistribution::truncated_gaussian(0.5, 0.2, 0.0, 1.2);
  const auto gm = PulseHeightDistribution::gamma(4.0, 0.14, 0.0, 1.4);
  for (const auto* phd : {&tg, &gm}) {
    const double total = integrate_adaptive(
        [phd](double v) { return phd->density(v); }, phd->v_min(), phd->v_max(), 1e-10);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-7));
    for (double u : {0.05, 0.3, 0.77, 0.99})
      CHECK(phd->cdf(phd->quantile(u)) == doctest::Approx(u).epsilon(1e-7));
  }
}

TEST_CASE("acceptance under crosstalk") {
  const auto u = PulseHeightDistribution::uniform(0.0, 1.0);

  SUBCASE("zero coupling reduces to the plain fraction") {
    CHECK(accepted_fraction_with_crosstalk(u, u, 0.0, 0.15) == accepted_fraction(u, 0.15));
  }

  SUBCASE("point-mass partner produces a constant shift") {
    const auto delta = PulseHeightDistribution::point_mass(1.0);
    const double got = accepted_fraction_with_crosstalk(u, delta, 0.012, 0.15);
    CHECK(got == doctest::Approx(0.838).epsilon(1e-9));
    CHECK(loss_fraction(u, delta, 0.012, 0.15) ==
          doctest::Approx(0.012 / 0.85).epsilon(1e-9));
  }

  SUBCASE("uniform closed form at several settings") {
    for (double k : {0.012, 0.013, 0.05}) {
      for (double v : {0.1, 0.15, 0.3}) {
        CHECK(loss_fraction(u, u, k, v) ==
              doctest::Approx(uniform_loss_oracle(k, v)).epsilon(1e-6));
      }
    }
  }

  SUBCASE("monotone in the coupling ratio") {
    double prev = 0.0;
    for (double k : {0.0, 1e-3, 0.01, 0.05, 0.1, 0.3}) {
      const double f = loss_fraction(u, u, k, 0.15);
      CHECK(f >= prev - 1e-15);
      prev = f;
    }
  }

  SUBCASE("small-k slope matches the first-order density estimate") {
    // Smooth density with essentially all mass above threshold: the loss
    // slope is density(v_th) * mean partner height.
    const auto g = PulseHeightDistribution::truncated_gaussian(0.5, 0.155, 0.0, 1.0);
    const double k = 1e-4;
    const double f = loss_fraction(g, g, k, 0.15);
    const double mean = integrate_adaptive(
        [&](double v) { return v * g.density(v); }, 0.0, 1.0, 1e-12);
    const double slope_est = g.density(0.15) * mean;
    CHECK(f / k == doctest::Approx(slope_est).epsilon(0.05));
  }

  SUBCASE("threshold killing the self channel is an error") {
    CHECK_THROWS_AS(loss_fraction(u, u, 0.01, 1.5), std::invalid_argument);
  }

  SUBCASE("partner with no mass above threshold is an error") {
    const auto low = PulseHeightDistribution::uniform(0.0, 0.1);
    CHECK_THROWS_AS(accepted_fraction_with_crosstalk(u, low, 0.01, 0.15),
                    std::invalid_argument);
  }
}

TEST_CASE("threshold sweep") {
  const auto u = PulseHeightDistribution::uniform(0.0, 1.0);

  SUBCASE("flat distribution keeps a strictly positive loss everywhere") {
    const auto rows = threshold_sweep(u, u, 0.012, 0.05, 0.9, 40);
    REQUIRE(rows.size() == 41);
    for (const auto& [v, f] : rows) CHECK(f > 0.0);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].first > rows[i - 1].first);
  }

  SUBCASE("zero coupling gives identically zero loss") {
    for (const auto& [v, f] : threshold_sweep(u, u, 0.0, 0.05, 0.9, 10)) CHECK(f == 0.0);
  }

  SUBCASE("a zero-density notch at the threshold removes the loss") {
    // Notch just above 0.15 that is wider than the largest possible shift.
    const auto notched = PulseHeightDistribution::empirical(
        {0.0, 0.15, 0.17, 1.0}, {0.15, 0.0, 0.83});
    const double f_at_notch = loss_fraction(notched, notched, 0.012, 0.15);
    CHECK(f_at_notch == 0.0);
    const double f_off_notch = loss_fraction(notched, notched, 0.012, 0.05);
    CHECK(f_off_notch > 0.0);
  }

  SUBCASE("range beyond support is rejected") {
    CHECK_THROWS_AS(threshold_sweep(u, u, 0.01, 0.5, 1.5, 10), std::invalid_argument);
  }
}

TEST_CASE("empirical distribution construction guards") {
  CHECK_THROWS_AS(PulseHeightDistribution::empirical({0.0, 1.0}, {-1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PulseHeightDistribution::empirical({0.0, 0.5, 0.4}, {1.0, 1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PulseHeightDistribution::empirical({0.0, 1.0}, {0.0}),
                  std::invalid_argument);
}

TEST_CASE("phd csv") {
  const std::string path = temp_path("coincx_phd_test.csv");

  SUBCASE("round trip preserves the distribution") {
    const auto orig = PulseHeightDistribution::empirical(
        {0.0, 0.2, 0.5, 0.9, 1.3}, {1.0, 4.0, 2.5, 0.5});
    save_phd_csv(orig, path);
    const auto back = load_phd_csv(path);
    for (double v : {0.1, 0.3, 0.6, 1.0, 1.25})
      CHECK(back.cdf(v) == doctest::Approx(orig.cdf(v)).epsilon(1e-9));
  }

  SUBCASE("single-bin file behaves like a narrow block") {
    std::ofstream(path) << "bin_left_V,bin_right_V,counts\n0.9,1.0,12\n";
    const auto phd = load_phd_csv(path);
    CHECK(accepted_fraction(phd, 0.15) == 1.0);
    CHECK(accepted_fraction(phd, 0.95) == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("negative counts are rejected") {
    std::ofstream(path) << "bin_left_V,bin_right_V,counts\n0,0.5,3\n0.5,1,-1\n";
    CHECK_THROWS_AS(load_phd_csv(path), std::runtime_error);
  }

  SUBCASE("overlapping bins are rejected") {
    std::ofstream(path) << "bin_left_V,bin_right_V,counts\n0,0.5,3\n0.4,1,1\n";
    CHECK_THROWS_AS(load_phd_csv(path), std::runtime_error);
  }

  SUBCASE("decreasing bin is rejected") {
    std::ofstream(path) << "bin_left_V,bin_right_V,counts\n0,0.5,3\n0.5,0.2,1\n";
    CHECK_THROWS_AS(load_phd_csv(path), std::runtime_error);
  }

  SUBCASE("gaps between bins are rejected") {
    std::ofstream(path) << "bin_left_V,bin_right_V,counts\n0,0.4,3\n0.5,1,1\n";
    CHECK_THROWS_AS(load_phd_csv(path), std::runtime_error);
  }
}
