#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "coincx/crosstalk.hpp"
#include "coincx/math_util.hpp"
#include "coincx/philox.hpp"

using namespace coincx;

namespace {

SourceParams nominal_source() {
  SourceParams p;
  p.lambda = 0.1;
  p.tau0 = 11.8;
  p.eps_a = p.eps_b = 0.1;
  p.n_pulses = 1000000;
  return p;
}

// Symmetric Gaussian-shaped test pulse, minimum -1 at t = 0.
Trace gaussian_pulse(double width, double half_span = 15.0, double dt = 0.05) {
  Trace t;
  t.dt = dt;
  const int m = static_cast<int>(std::round(half_span / dt));
  t.t0 = -m * dt;
  t.v.resize(2 * m + 1);
  for (int i = 0; i < t.v.size(); ++i) {
    const double x = t.time(i) / width;
    t.v[i] = -std::exp(-0.5 * x * x);
  }
  return t;
}

double fwhm_by_bisection(const SourceParams& p, const TemporalModel& tm) {
  const double peak = spectrum_model_value(p, tm, SourceMode::pulsed, 0.0);
  const double half = 0.5 * peak;
  auto cross = [&](double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
      const double m = 0.5 * (lo + hi);
      if (spectrum_model_value(p, tm, SourceMode::pulsed, m) > half)
        lo = m;
      else
        hi = m;
    }
    return 0.5 * (lo + hi);
  };
  return cross(0.0, 30.0) - (-cross(0.0, 30.0));
}

} // namespace

TEST_CASE("pulsed spectrum closed form against quadrature") {
  const SourceParams p = nominal_source();
  TemporalModel tm;
  const TauGrid grid = TauGrid::symmetric(42.0, 0.1);

  const auto closed = spectrum_no_crosstalk(p, tm, grid, SourceMode::pulsed);
  const auto numeric = spectrum_no_crosstalk_numeric(p, tm, grid, SourceMode::pulsed);
  const double top = closed.values.maxCoeff();
  for (int i = 0; i < grid.n; ++i) {
    if (closed.values[i] < 1e-12 * top) continue;
    CHECK(numeric.values[i] ==
          doctest::Approx(closed.values[i]).epsilon(1e-6));
  }

  // Independent trapezoid correlation at a few arbitrary delays.
  for (double tau : {0.0, 3.7, -11.8, 17.3, -29.9}) {
    auto f = [&](double t) {
      double stop = 0.0;
      for (int i : tm.stop_peak_indices) {
        const double w = i == 0 ? central_peak_counts(p) : peak_counts(p, std::abs(i));
        stop += w * norm_pdf(t + tau, i * p.tau0, tm.sigma);
      }
      return norm_pdf(t, 0.0, tm.sigma) * stop;
    };
    const double oracle = trapezoid(f, -14.0, 14.0, 4000);
    CHECK(spectrum_model_value(p, tm, SourceMode::pulsed, tau) ==
          doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("per-peak width") {
  SourceParams p = nominal_source();
  TemporalModel tm;
  tm.stop_peak_indices = {0};  // isolated peak profile
  const double fwhm = fwhm_by_bisection(p, tm);
  const double closed = 2.0 * std::sqrt(2.0 * std::log(2.0)) * tm.sigma * std::sqrt(2.0);
  CHECK(std::fabs(fwhm - closed) / closed < 1e-9);
  CHECK(fwhm == doctest::Approx(4.695618).epsilon(1e-5));
}

TEST_CASE("continuous spectrum is flat") {
  const auto s = spectrum_no_crosstalk(nominal_source(), TemporalModel{},
                                       TauGrid::symmetric(42.0, 0.1),
                                       SourceMode::continuous, 2.5);
  CHECK(s.values.minCoeff() == 2.5);
  CHECK(s.values.maxCoeff() == 2.5);
}

TEST_CASE("grid too small is rejected with the required span") {
  try {
    spectrum_no_crosstalk(nominal_source(), TemporalModel{},
                          TauGrid::symmetric(20.0, 0.1), SourceMode::pulsed);
    FAIL("expected a span rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("does not cover") != std::string::npos);
  }
}

TEST_CASE("loss multiplier") {
  const Trace s = synth_signal(1.0, 2.0, 5.0);
  const WaveformPair pa = make_waveform_pair(s, 0.012);
  const WaveformPair pb = make_waveform_pair(s, 0.013);
  const TauGrid grid = TauGrid::symmetric(120.0, 0.1);

  SUBCASE("zero coupling gives unity for both variants") {
    const WaveformPair za = make_waveform_pair(s, 0.0);
    for (auto variant : {MultiplierVariant::anchored, MultiplierVariant::literal}) {
      const auto m = LossMultiplier::build(za.signal, za.crosstalk, 0.05, variant, grid);
      for (double tau : {0.0, 3.0, -17.0, 80.0}) CHECK(m.value(tau) == 1.0);
    }
  }

  SUBCASE("anchored multiplier hits 1 - f at the most-modified delay") {
    const auto m = LossMultiplier::build(pa.signal, pb.crosstalk, 0.033,
                                         MultiplierVariant::anchored, grid);
    CHECK(m.tau_star == 0.0);
    CHECK(m.value(m.tau_star) == doctest::Approx(1.0 - 0.033).epsilon(1e-12));
    CHECK(m.value(1e6) == 1.0);
    CHECK(loss_multiplier(pa, pb, 0.033, MultiplierVariant::anchored, 0.0) ==
          doctest::Approx(0.967).epsilon(1e-12));
  }

  SUBCASE("literal multiplier follows the printed extrapolation") {
    // Ms(0) = -(1 - k_b) for identical unit shapes, Ms(inf) = -1, so
    // M(0) = (0.987/1 - 1) f + 1.
    const auto m = LossMultiplier::build(pa.signal, pb.crosstalk, 0.033,
                                         MultiplierVariant::literal, grid);
    CHECK(m.value(0.0) == doctest::Approx(1.0 - 0.013 * 0.033).epsilon(1e-9));
    CHECK(m.value(1e6) == 1.0);
  }

  SUBCASE("f outside [0,1) is rejected") {
    CHECK_THROWS_AS(LossMultiplier::build(pa.signal, pb.crosstalk, 1.0,
                                          MultiplierVariant::anchored, grid),
                    std::invalid_argument);
  }
}

TEST_CASE("spectrum with crosstalk") {
  SourceParams p = nominal_source();
  TemporalModel tm;
  const TauGrid grid = TauGrid::symmetric(42.0, 0.1);
  const Trace s = synth_signal(1.0, 2.0, 5.0);
  const WaveformPair pa = make_waveform_pair(s, 0.012);
  const WaveformPair pb = make_waveform_pair(s, 0.013);
  const auto base = spectrum_no_crosstalk(p, tm, grid, SourceMode::pulsed);

  SUBCASE("unit multipliers are the identity") {
    const WaveformPair za = make_waveform_pair(s, 0.0);
    const auto m1 = LossMultiplier::build(za.signal, za.crosstalk, 0.0,
                                          MultiplierVariant::anchored, grid);
    const auto out = spectrum_with_crosstalk(base, m1, m1);
    CHECK((out.values == base.values).all());
  }

  SUBCASE("grid mismatch is rejected") {
    const auto m = LossMultiplier::build(pa.signal, pb.crosstalk, 0.033,
                                         MultiplierVariant::anchored,
                                         TauGrid::symmetric(40.0, 0.1));
    CHECK_THROWS_AS(spectrum_with_crosstalk(base, m, m), std::invalid_argument);
  }

  SUBCASE("crosstalk never raises the spectrum, and leaves it untouched without overlap") {
    const auto m_a = LossMultiplier::build(pa.signal, pb.crosstalk, 0.033,
                                           MultiplierVariant::anchored, grid,
                                           Detector::start);
    const auto m_b = LossMultiplier::build(pb.signal, pa.crosstalk, 0.024,
                                           MultiplierVariant::anchored, grid,
                                           Detector::stop);
    const auto out = spectrum_with_crosstalk(base, m_a, m_b);
    for (int i = 0; i < grid.n; ++i) CHECK(out.values[i] <= base.values[i]);

    // Compactly supported traces: no overlap possible beyond the trace span.
    const Trace sc = synth_signal(1.0, 2.0, 5.0, GridSpec::from_range(-10.0, 40.0, 0.05));
    const WaveformPair ca = make_waveform_pair(sc, 0.012);
    const WaveformPair cb = make_waveform_pair(sc, 0.013);
    const TauGrid wide = TauGrid::symmetric(150.0, 0.5);
    const auto cont = spectrum_no_crosstalk(p, tm, wide, SourceMode::continuous);
    const auto ma = LossMultiplier::build(ca.signal, cb.crosstalk, 0.033,
                                          MultiplierVariant::anchored, wide);
    const auto mb = LossMultiplier::build(cb.signal, ca.crosstalk, 0.024,
                                          MultiplierVariant::anchored, wide,
                                          Detector::stop);
    const auto cct = spectrum_with_crosstalk(cont, ma, mb);
    for (int i = 0; i < wide.n; ++i) {
      if (std::fabs(wide.center(i)) > 51.0) CHECK(cct.values[i] == cont.values[i]);
    }
  }

  SUBCASE("vanishing coupling converges to the clean spectrum") {
    const WaveformPair ta = make_waveform_pair(s, 1e-6);
    const WaveformPair tb = make_waveform_pair(s, 1e-6);
    const double f_small = 1e-6 * 0.575 / 0.85;  // uniform-channel loss at this k
    const auto m_a = LossMultiplier::build(ta.signal, tb.crosstalk, f_small,
                                           MultiplierVariant::anchored, grid);
    const auto out = spectrum_with_crosstalk(base, m_a, m_a);
    for (int i = 0; i < grid.n; ++i) {
      if (base.values[i] > 1e-12)
        CHECK(std::fabs(out.values[i] / base.values[i] - 1.0) < 3e-6);
    }
  }
}

TEST_CASE("dip depth") {
  SourceParams p = nominal_source();
  TemporalModel tm;

  SUBCASE("crosstalk-free continuous spectrum has zero depth") {
    const auto s = spectrum_no_crosstalk(p, tm, TauGrid::symmetric(42.0, 0.1),
                                         SourceMode::continuous);
    CHECK(std::fabs(dip_depth(s)) < 1e-12);
  }

  SUBCASE("anchored continuous depth composes the loss fractions exactly") {
    const Trace sc = synth_signal(1.0, 2.0, 5.0, GridSpec::from_range(-10.0, 40.0, 0.05));
    const WaveformPair ca = make_waveform_pair(sc, 0.012);
    const WaveformPair cb = make_waveform_pair(sc, 0.013);
    const TauGrid wide = TauGrid::symmetric(150.0, 0.5);
    const auto cont = spectrum_no_crosstalk(p, tm, wide, SourceMode::continuous);
    const auto ma = LossMultiplier::build(ca.signal, cb.crosstalk, 0.033,
                                          MultiplierVariant::anchored, wide);
    const auto mb = LossMultiplier::build(cb.signal, ca.crosstalk, 0.024,
                                          MultiplierVariant::anchored, wide,
                                          Detector::stop);
    const auto cct = spectrum_with_crosstalk(cont, ma, mb);
    const double expect = 1.0 - (1.0 - 0.033) * (1.0 - 0.024);
    CHECK(std::fabs(dip_depth(cct) - expect) < 1e-9);

    // Identity against the multipliers evaluated at zero delay.
    const double identity =
        1.0 - (1.0 - 0.033 * ma.weight(0.0)) * (1.0 - 0.024 * mb.weight(0.0));
    CHECK(std::fabs(dip_depth(cct) - identity) < 1e-12);
  }

  SUBCASE("well-separated pulsed peaks reproduce the continuous depth") {
    SourceParams ps = p;
    ps.lambda = 1e-4;
    ps.tau0 = 80.0;
    ps.n_pulses = 1000000000;
    TemporalModel tms;
    tms.stop_peak_indices = {-2, -1, 0, 1, 2};
    const TauGrid grid = TauGrid::symmetric(180.0, 0.1);
    const Trace s = synth_signal(1.0, 2.0, 5.0);
    const WaveformPair pa = make_waveform_pair(s, 0.012);
    const WaveformPair pb = make_waveform_pair(s, 0.013);
    const auto ma = LossMultiplier::build(pa.signal, pb.crosstalk, 0.033,
                                          MultiplierVariant::anchored, grid);
    const auto mb = LossMultiplier::build(pb.signal, pa.crosstalk, 0.024,
                                          MultiplierVariant::anchored, grid,
                                          Detector::stop);
    const auto pulsed =
        spectrum_with_crosstalk(spectrum_no_crosstalk(ps, tms, grid, SourceMode::pulsed),
                                ma, mb);
    const auto cont =
        spectrum_with_crosstalk(spectrum_no_crosstalk(ps, tms, grid, SourceMode::continuous),
                                ma, mb);
    CHECK(std::fabs(dip_depth(pulsed) - dip_depth(cont)) < 1e-3);
  }

  SUBCASE("pulsed side-peak heights follow the emission statistics") {
    SourceParams ps = p;
    ps.lambda = 0.3;
    ps.tau0 = 60.0;  // isolates the peaks
    TemporalModel tms;
    const TauGrid grid = TauGrid::symmetric(200.0, 0.1);
    const auto s = spectrum_no_crosstalk(ps, tms, grid, SourceMode::pulsed);
    for (int i = 1; i <= 2; ++i) {
      const double got = s.value_at(i * ps.tau0) / s.value_at((i + 1) * ps.tau0);
      const double expect = peak_counts(ps, i) / peak_counts(ps, i + 1);
      CHECK(got == doctest::Approx(expect).epsilon(1e-6));
    }
    const double central_ratio = s.value_at(0.0) / s.value_at(ps.tau0);
    CHECK(central_ratio ==
          doctest::Approx(central_peak_counts(ps) / peak_counts(ps, 1)).epsilon(1e-6));
  }
}

TEST_CASE("symmetric waveforms give a symmetric spectrum") {
  const Trace g = gaussian_pulse(3.0);
  const WaveformPair pa = make_waveform_pair(g, 0.012);
  const WaveformPair pb = make_waveform_pair(g, 0.013);
  const TauGrid grid = TauGrid::symmetric(42.0, 0.1);
  const auto ma = LossMultiplier::build(pa.signal, pb.crosstalk, 0.033,
                                        MultiplierVariant::anchored, grid);
  const auto mb = LossMultiplier::build(pb.signal, pa.crosstalk, 0.024,
                                        MultiplierVariant::anchored, grid,
                                        Detector::stop);
  for (auto mode : {SourceMode::continuous, SourceMode::pulsed}) {
    const auto base = spectrum_no_crosstalk(nominal_source(), TemporalModel{}, grid, mode);
    const auto out = spectrum_with_crosstalk(base, ma, mb);
    for (int i = 0; i < grid.n; ++i) {
      const int j = grid.n - 1 - i;
      if (out.values[i] > 1e-300)
        CHECK(std::fabs(out.values[i] / out.values[j] - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("dip width follows the waveform overlap, not the temporal model") {
  SourceParams p = nominal_source();
  auto width_for = [&](double fall) {
    const Trace s = synth_signal(1.0, 2.0, fall, GridSpec::from_range(-10.0, 120.0, 0.05));
    const WaveformPair pa = make_waveform_pair(s, 0.012);
    const WaveformPair pb = make_waveform_pair(s, 0.013);
    const TauGrid grid = TauGrid::symmetric(130.0, 0.1);
    const auto ma = LossMultiplier::build(pa.signal, pb.crosstalk, 0.033,
                                          MultiplierVariant::anchored, grid);
    const auto mb = LossMultiplier::build(pb.signal, pa.crosstalk, 0.024,
                                          MultiplierVariant::anchored, grid,
                                          Detector::stop);
    const auto cct = spectrum_with_crosstalk(
        spectrum_no_crosstalk(p, TemporalModel{}, grid, SourceMode::continuous), ma, mb);
    // Width where the dip exceeds half its depth.
    const double depth = dip_depth(cct);
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < grid.n; ++i) {
      if (1.0 - cct.values[i] > 0.5 * depth) {
        lo = std::min(lo, grid.center(i));
        hi = std::max(hi, grid.center(i));
      }
    }
    return hi - lo;
  };
  const double w5 = width_for(5.0);
  const double w12 = width_for(12.0);
  CHECK(w12 > 1.5 * w5);
}

TEST_CASE("spectrum csv round trip with metadata") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "coincx_spec_test.csv").string();
  SourceParams p = nominal_source();
  auto s = spectrum_no_crosstalk(p, TemporalModel{}, TauGrid::symmetric(42.0, 0.1),
                                 SourceMode::pulsed);
  s.errors = s.values.sqrt();
  s.meta.extra["note"] = "unit test";
  save_spectrum_csv(s, path, "test header");
  const auto r = load_spectrum_csv(path);
  REQUIRE(r.grid.n == s.grid.n);
  CHECK((r.values - s.values).abs().maxCoeff() < 1e-9 * s.values.maxCoeff());
  CHECK(r.meta.mode == SourceMode::pulsed);
  CHECK(r.meta.tau0 == doctest::Approx(11.8));
  CHECK(r.meta.peak_indices == s.meta.peak_indices);
  REQUIRE(r.errors.size() == s.errors.size());
  CHECK((r.errors - s.errors).abs().maxCoeff() < 1e-12);
  CHECK(r.meta.extra.at("note") == "unit test");
}
