#include "coincx/crosstalk.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "coincx/math_util.hpp"

namespace coincx {

double LossMultiplier::ms_at(double t) const {
  const int n = static_cast<int>(tau.size());
  if (n == 0) return ms_inf;
  if (t <= tau[0] || t >= tau[n - 1]) {
    // Outside the tabulation the pulses are taken as non-overlapping.
    if (t == tau[0]) return ms[0];
    if (t == tau[n - 1]) return ms[n - 1];
    return ms_inf;
  }
  const double step = tau[1] - tau[0];
  const double x = (t - tau[0]) / step;
  const int i = std::min(static_cast<int>(x), n - 2);
  const double fr = x - i;
  return ms[i] * (1.0 - fr) + ms[i + 1] * fr;
}

double LossMultiplier::weight(double t) const {
  const double denom = ms_star - ms_inf;
  if (denom == 0.0) return 0.0;
  return (ms_at(t) - ms_inf) / denom;
}

double LossMultiplier::value(double t) const {
  if (variant == MultiplierVariant::anchored) {
    const double denom = ms_star - ms_inf;
    if (denom == 0.0) return 1.0;
    return 1.0 - f * weight(t);
  }
  if (ms_inf == 0.0) return 1.0;
  return (ms_at(t) / ms_inf - 1.0) * f + 1.0;
}

LossMultiplier LossMultiplier::build(const Trace& signal_self,
                                     const Trace& crosstalk_other, double f,
                                     MultiplierVariant variant,
                                     const TauGrid& grid, Detector channel) {
  if (f < 0.0 || f >= 1.0)
    throw std::invalid_argument("loss multiplier: f must be in [0,1)");
  LossMultiplier m;
  m.f = f;
  m.variant = variant;
  m.tau = grid.centers();
  m.ms.resize(grid.n);
  // The stop channel sees its pulse shifted by tau against the start
  // channel's crosstalk: Ms_b(tau) = min_t(S_b(t + tau) + CT_a(t)), which is
  // the same extremum evaluated at -tau.
  const double sign = channel == Detector::start ? 1.0 : -1.0;
  for (int i = 0; i < grid.n; ++i)
    m.ms[i] = modified_extremum(signal_self, crosstalk_other, sign * m.tau[i]);
  m.ms_inf = min_value(signal_self);
  int istar = 0;
  m.ms_star = m.ms.maxCoeff(&istar);
  m.tau_star = m.tau[istar];
  return m;
}

double loss_multiplier(const WaveformPair& pair_self,
                       const WaveformPair& pair_other, double f,
                       MultiplierVariant variant, double tau_eval) {
  const double span = pair_self.signal.duration() + pair_other.crosstalk.duration();
  const double step = std::min(pair_self.signal.dt, pair_other.crosstalk.dt);
  const auto grid = TauGrid::symmetric(span, step);
  const auto m = LossMultiplier::build(pair_self.signal, pair_other.crosstalk, f,
                                       variant, grid, Detector::start);
  return m.value(tau_eval);
}

namespace {

double peak_weight(const SourceParams& p, int i) {
  return i == 0 ? central_peak_counts(p)
                : peak_counts(p, static_cast<std::int64_t>(std::abs(i)));
}

void check_grid_span(const SourceParams& p, const TemporalModel& tm,
                     const TauGrid& grid) {
  const double margin = 5.0 * tm.sigma * std::sqrt(2.0);
  double lo = 0.0, hi = 0.0;
  for (int i : tm.stop_peak_indices) {
    lo = std::min(lo, i * p.tau0 - margin);
    hi = std::max(hi, i * p.tau0 + margin);
  }
  if (grid.tau_min > lo || grid.tau_max() < hi) {
    std::ostringstream msg;
    msg << "spectrum grid [" << grid.tau_min << ", " << grid.tau_max()
        << "] ns does not cover the required span [" << lo << ", " << hi << "] ns";
    throw std::invalid_argument(msg.str());
  }
}

SpectrumMeta base_meta(const SourceParams& p, const TemporalModel& tm,
                       SourceMode mode) {
  SpectrumMeta meta;
  meta.mode = mode;
  meta.tau0 = p.tau0;
  meta.peak_indices = tm.stop_peak_indices;
  meta.value_kind = mode == SourceMode::pulsed ? "expected counts per bin" : "relative level";
  return meta;
}

} // namespace

double spectrum_model_value(const SourceParams& p, const TemporalModel& tm,
                            SourceMode mode, double tau, double scale) {
  if (mode == SourceMode::continuous) return scale;
  const double width = tm.sigma * std::sqrt(2.0);
  double v = 0.0;
  for (int i : tm.stop_peak_indices)
    v += peak_weight(p, i) * norm_pdf(tau, i * p.tau0, width);
  return v;
}

CoincidenceSpectrum spectrum_no_crosstalk(const SourceParams& p,
                                          const TemporalModel& tm,
                                          const TauGrid& grid, SourceMode mode,
                                          double scale) {
  p.validate();
  tm.validate();
  if (grid.n < 2) throw std::invalid_argument("spectrum_no_crosstalk: empty grid");
  if (mode == SourceMode::pulsed) check_grid_span(p, tm, grid);

  CoincidenceSpectrum s;
  s.grid = grid;
  s.values.resize(grid.n);
  if (mode == SourceMode::continuous) {
    s.values.setConstant(scale);
  } else {
    for (int i = 0; i < grid.n; ++i)
      s.values[i] = spectrum_model_value(p, tm, mode, grid.center(i)) * grid.bin;
  }
  s.meta = base_meta(p, tm, mode);
  return s;
}

CoincidenceSpectrum spectrum_no_crosstalk_numeric(const SourceParams& p,
                                                  const TemporalModel& tm,
                                                  const TauGrid& grid,
                                                  SourceMode mode, double scale) {
  p.validate();
  tm.validate();
  if (mode == SourceMode::pulsed) check_grid_span(p, tm, grid);

  CoincidenceSpectrum s;
  s.grid = grid;
  s.values.resize(grid.n);
  if (mode == SourceMode::continuous) {
    s.values.setConstant(scale);
    s.meta = base_meta(p, tm, mode);
    return s;
  }

  // Correlate the start density against the weighted stop peaks by direct
  // quadrature over the start trigger time. The trapezoid rule converges
  // spectrally for Gaussian integrands at this step size.
  const double span = 9.0 * tm.sigma;
  const int steps = static_cast<int>(std::ceil(2.0 * span / (tm.sigma / 8.0)));
  for (int b = 0; b < grid.n; ++b) {
    const double tau = grid.center(b);
    auto f = [&](double t) {
      double stop = 0.0;
      for (int i : tm.stop_peak_indices)
        stop += peak_weight(p, i) * norm_pdf(t + tau, i * p.tau0, tm.sigma);
      return norm_pdf(t, 0.0, tm.sigma) * stop;
    };
    s.values[b] = trapezoid(f, -span, span, steps) * grid.bin;
  }
  s.meta = base_meta(p, tm, mode);
  return s;
}

CoincidenceSpectrum spectrum_with_crosstalk(const CoincidenceSpectrum& base,
                                            const LossMultiplier& m_a,
                                            const LossMultiplier& m_b) {
  base.check();
  if (!(m_a.tau.size() == base.grid.n && m_b.tau.size() == base.grid.n) ||
      std::fabs(m_a.tau[0] - base.grid.tau_min) > 1e-12 ||
      std::fabs(m_b.tau[0] - base.grid.tau_min) > 1e-12)
    throw std::invalid_argument("spectrum_with_crosstalk: multiplier grids do not match the spectrum");

  CoincidenceSpectrum out = base;
  for (int i = 0; i < base.grid.n; ++i) {
    const double tau = base.grid.center(i);
    out.values[i] = base.values[i] * m_a.value(tau) * m_b.value(tau);
  }
  out.meta.variant = variant_name(m_a.variant);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", m_a.f);
  out.meta.extra["f_a"] = buf;
  std::snprintf(buf, sizeof(buf), "%.9g", m_b.f);
  out.meta.extra["f_b"] = buf;
  return out;
}

double dip_depth(const CoincidenceSpectrum& s, double background_fraction) {
  s.check();
  if (background_fraction <= 0.0 || background_fraction >= 0.5)
    throw std::invalid_argument("dip_depth: background fraction must be in (0, 0.5)");

  if (s.meta.mode == SourceMode::continuous) {
    const int edge = static_cast<int>(background_fraction * s.grid.n);
    if (edge < 2) throw std::invalid_argument("dip_depth: no background region in the grid");
    double bg = 0.0;
    for (int i = 0; i < edge; ++i) bg += s.values[i] + s.values[s.grid.n - 1 - i];
    bg /= 2.0 * edge;
    if (bg <= 0.0) throw std::invalid_argument("dip_depth: empty background");
    const int zero = s.grid.index_of(0.0);
    if (zero < 0) throw std::invalid_argument("dip_depth: grid does not contain tau = 0");
    return 1.0 - s.values[zero] / bg;
  }

  // Pulsed: compare the central peak maximum against the side-peak maxima.
  if (s.meta.tau0 <= 0.0)
    throw std::invalid_argument("dip_depth: pulsed spectrum lacks tau0 metadata");
  auto window_max = [&](double center) {
    const double half = 0.5 * s.meta.tau0;
    int lo = s.grid.index_of(center - half);
    int hi = s.grid.index_of(center + half);
    if (lo < 0) lo = 0;
    if (hi < 0) hi = s.grid.n - 1;
    double m = 0.0;
    for (int i = lo; i <= hi; ++i) m = std::max(m, s.values[i]);
    return m;
  };

  double side_sum = 0.0;
  int side_n = 0;
  bool have_central = false;
  double central = 0.0;
  for (int i : s.meta.peak_indices) {
    const double c = i * s.meta.tau0;
    if (s.grid.index_of(c) < 0) continue;
    if (i == 0) {
      central = window_max(0.0);
      have_central = true;
    } else {
      side_sum += window_max(c);
      ++side_n;
    }
  }
  if (!have_central || side_n == 0)
    throw std::invalid_argument("dip_depth: pulsed spectrum needs the central and at least one side peak");
  return 1.0 - central / (side_sum / side_n);
}

} // namespace coincx
