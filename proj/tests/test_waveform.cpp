#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "coincx/trace.hpp"

using namespace coincx;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Brute-force oracle for the modified extremum: explicit loop over the
// signal grid with a plain linear interpolation of the shifted partner.
double extremum_oracle(const Trace& s, const Trace& c, double tau) {
  double m = 1e300;
  for (int i = 0; i < s.size(); ++i) {
    const double t = s.time(i) + tau;
    double cv = 0.0;
    if (t >= c.t0 && t <= c.t_end()) {
      const double x = (t - c.t0) / c.dt;
      const int j = std::min(static_cast<int>(x), c.size() - 2);
      cv = c.v[j] + (c.v[j + 1] - c.v[j]) * (x - j);
    }
    m = std::min(m, s.v[i] + cv);
  }
  return m;
}

} // namespace

TEST_CASE("synthetic signal pulse") {
  const Trace s = synth_signal(1.0, 2.0, 5.0, GridSpec{-50.0, 0.05, 2001});
  CHECK(min_value(s) == -1.0);

  // Analytic extremum of (1 - e^{-t/r}) e^{-t/f} is at r ln(1 + f/r).
  const double t_star = 2.0 * std::log(1.0 + 5.0 / 2.0);
  CHECK(std::fabs(argmin_time(s) - t_star) <= 0.05 + 1e-12);

  // Independent grid search for the extremum location.
  int imin = 0;
  double best = 1e300;
  for (int i = 0; i < s.size(); ++i) {
    if (s.v[i] < best) {
      best = s.v[i];
      imin = i;
    }
  }
  CHECK(s.time(imin) == argmin_time(s));
  CHECK(s.v[0] == 0.0);  // zero before onset
}

TEST_CASE("synthetic signal preconditions") {
  CHECK_THROWS_AS(synth_signal(0.0, 2.0, 5.0), std::invalid_argument);
  CHECK_THROWS_AS(synth_signal(-1.0, 2.0, 5.0), std::invalid_argument);
  CHECK_THROWS_AS(synth_signal(1.0, -2.0, 5.0), std::invalid_argument);
  CHECK_THROWS_AS(synth_signal(1.0, 2.0, 0.0), std::invalid_argument);
  // dt > rise/4 is rejected as too coarse.
  try {
    synth_signal(1.0, 2.0, 5.0, GridSpec{-10.0, 0.6, 100});
    FAIL("expected a grid-too-coarse rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("too coarse") != std::string::npos);
  }
}

TEST_CASE("crosstalk synthesis") {
  const Trace s = synth_signal(1.0, 2.0, 5.0);

  SUBCASE("zero coupling gives a zero trace in both modes") {
    for (auto mode : {CrosstalkMode::inverted_copy, CrosstalkMode::derivative}) {
      const Trace ct = synth_crosstalk(s, 0.0, mode);
      CHECK(ct.v.abs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("inverted copy peaks at k |min|") {
    const Trace ct = synth_crosstalk(s, 0.012, CrosstalkMode::inverted_copy);
    CHECK(max_value(ct) == doctest::Approx(0.012).epsilon(1e-12));
    CHECK(min_value(ct) >= -1e-12);  // strictly non-negative replica
  }

  SUBCASE("derivative mode peaks at k |min| and integrates to zero") {
    // Grid long enough for the pulse to decay to numerical zero.
    const Trace sl = synth_signal(1.0, 2.0, 5.0, GridSpec::from_range(-20.0, 120.0, 0.05));
    const Trace ct = synth_crosstalk(sl, 0.012, CrosstalkMode::derivative);
    CHECK(max_value(ct) == doctest::Approx(0.012).epsilon(1e-9));
    double integral = 0.0;  // trapezoid
    for (int i = 0; i + 1 < ct.size(); ++i)
      integral += 0.5 * (ct.v[i] + ct.v[i + 1]) * ct.dt;
    CHECK(std::fabs(integral) < 1e-6);
  }

  SUBCASE("pair invariants") {
    CHECK_THROWS_AS(make_waveform_pair(s, 0.6), std::invalid_argument);
    const WaveformPair p = make_waveform_pair(s, 0.013);
    CHECK(std::fabs(max_value(p.crosstalk) - 0.013 * std::fabs(min_value(p.signal))) < 1e-9);
  }
}

TEST_CASE("modified extremum") {
  const Trace s = synth_signal(1.0, 2.0, 5.0);
  const Trace ct = synth_crosstalk(s, 0.012);
  const Trace zero = synth_crosstalk(s, 0.0);

  SUBCASE("zero crosstalk returns min(signal) at any shift") {
    for (double tau : {0.0, 5.0, -17.0, 300.0})
      CHECK(modified_extremum(s, zero, tau) == min_value(s));
  }

  SUBCASE("identical shapes at full overlap give (1-k) min") {
    CHECK(modified_extremum(s, ct, 0.0) == doctest::Approx(-0.988).epsilon(1e-12));
  }

  SUBCASE("agrees with the brute-force oracle off-center") {
    for (double tau : {0.0, 0.3, -0.7, 3.05, -12.1, 47.0})
      CHECK(modified_extremum(s, ct, tau) == doctest::Approx(extremum_oracle(s, ct, tau)));
  }

  SUBCASE("no overlap far away, exactly") {
    const double far = 10.0 * (s.duration());
    CHECK(modified_extremum(s, ct, far) == min_value(s));
    CHECK(modified_extremum(s, ct, -far) == min_value(s));
  }

  SUBCASE("monotone recovery beyond the last overlap") {
    double prev = modified_extremum(s, ct, 0.0);
    for (double tau = 1.0; tau <= 120.0; tau += 1.0) {
      const double m = modified_extremum(s, ct, tau);
      CHECK(m <= prev + 1e-15);
      prev = m;
    }
    CHECK(prev == min_value(s));
  }

  SUBCASE("time reversal of both traces mirrors the delay axis") {
    const Trace sr = reversed(s);
    const Trace cr = reversed(ct);
    for (double tau : {0.0, 1.7, -4.2, 9.9})
      CHECK(modified_extremum(sr, cr, tau) ==
            doctest::Approx(modified_extremum(s, ct, -tau)).epsilon(1e-12));
  }

  SUBCASE("integer-step shift equals an index shift") {
    const int shift = 40;
    const double tau = shift * s.dt;
    double m = 1e300;
    for (int i = 0; i < s.size(); ++i) {
      const int j = i + shift;
      const double cv = (j >= 0 && j < ct.size()) ? ct.v[j] : 0.0;
      m = std::min(m, s.v[i] + cv);
    }
    CHECK(modified_extremum(s, ct, tau) == doctest::Approx(m).epsilon(1e-14));
  }
}

TEST_CASE("trace csv round trip") {
  const Trace s = synth_signal(0.8, 1.5, 6.0, GridSpec{-20.0, 0.05, 1001});
  const std::string path = temp_path("coincx_trace_test.csv");
  save_trace_csv(s, path);
  const Trace r = load_trace_csv(path);
  REQUIRE(r.size() == s.size());
  CHECK(std::fabs(r.t0 - s.t0) < 1e-9);
  CHECK((r.v - s.v).abs().maxCoeff() < 1e-9);

  // Re-saving the loaded trace reproduces the file byte for byte.
  const std::string path2 = temp_path("coincx_trace_test2.csv");
  save_trace_csv(r, path2);
  std::ifstream f1(path), f2(path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("trace csv rejects malformed input") {
  const std::string path = temp_path("coincx_trace_bad.csv");

  SUBCASE("empty file") {
    std::ofstream(path) << "";
    CHECK_THROWS_AS(load_trace_csv(path), std::runtime_error);
  }
  SUBCASE("missing header") {
    std::ofstream(path) << "0,0\n1,0\n";
    CHECK_THROWS_AS(load_trace_csv(path), std::runtime_error);
  }
  SUBCASE("shuffled rows") {
    std::ofstream(path) << "time_ns,voltage_V\n0,0\n2,0.5\n1,0.2\n";
    CHECK_THROWS_AS(load_trace_csv(path), std::runtime_error);
  }
  SUBCASE("non-uniform spacing") {
    std::ofstream(path) << "time_ns,voltage_V\n0,0\n1,0.1\n2.5,0.2\n";
    CHECK_THROWS_AS(load_trace_csv(path), std::runtime_error);
  }
}
