#pragma once

// Analytic coincidence spectra with and without crosstalk: the pulsed
// spectrum as a sum of Gaussian peaks weighted by the emission statistics,
// the tau-dependent loss multipliers derived from the waveform overlap, and
// the dip-depth observable.

#include "coincx/source.hpp"
#include "coincx/spectrum.hpp"
#include "coincx/trace.hpp"

namespace coincx {

enum class MultiplierVariant { anchored, literal };

inline const char* variant_name(MultiplierVariant v) {
  return v == MultiplierVariant::anchored ? "anchored" : "literal";
}

// Per-channel loss multiplier M(tau). The modified extremum Ms(tau) of the
// summed signal + partner crosstalk is tabulated on a tau grid; the
// anchored variant maps it to 1 - f * w(tau) with the overlap weight
// w = (Ms(tau) - Ms(inf)) / (Ms(tau*) - Ms(inf)), so M equals 1 - f at the
// most-modified delay and 1 where the pulses never overlap. The literal
// variant applies (Ms(tau)/Ms(inf) - 1) f + 1 directly.
struct LossMultiplier {
  double f = 0.0;
  MultiplierVariant variant = MultiplierVariant::anchored;
  Eigen::ArrayXd tau;
  Eigen::ArrayXd ms;
  double ms_inf = 0.0;   // min(signal), the no-overlap anchor
  double ms_star = 0.0;  // extremum of the tabulated curve
  double tau_star = 0.0;

  // Ms interpolated at tau; ms_inf outside the tabulated range.
  double ms_at(double t) const;
  // Normalized overlap weight w(tau) in [0,1] for inverted-copy coupling.
  double weight(double t) const;
  // The multiplier value M(tau).
  double value(double t) const;

  static LossMultiplier build(const Trace& signal_self,
                              const Trace& crosstalk_other, double f,
                              MultiplierVariant variant, const TauGrid& grid,
                              Detector channel = Detector::start);
};

// Convenience point evaluation used by the spec-level operation: builds the
// tabulation over the full overlap range internally.
double loss_multiplier(const WaveformPair& pair_self,
                       const WaveformPair& pair_other, double f,
                       MultiplierVariant variant, double tau_eval);

// Closed-form model value at a single delay (per ns for pulsed mode,
// `scale` for continuous mode).
double spectrum_model_value(const SourceParams& p, const TemporalModel& tm,
                            SourceMode mode, double tau, double scale = 1.0);

// Crosstalk-free spectrum on the grid. Pulsed: Gaussian peaks of width
// sigma*sqrt(2) at i*tau0 with heights from the emission statistics,
// expressed as expected counts per bin. Continuous: a flat level `scale`.
CoincidenceSpectrum spectrum_no_crosstalk(const SourceParams& p,
                                          const TemporalModel& tm,
                                          const TauGrid& grid, SourceMode mode,
                                          double scale = 1.0);

// Same quantity via direct trapezoid integration of the trigger densities;
// exists to cross-check the closed form.
CoincidenceSpectrum spectrum_no_crosstalk_numeric(const SourceParams& p,
                                                  const TemporalModel& tm,
                                                  const TauGrid& grid,
                                                  SourceMode mode,
                                                  double scale = 1.0);

// Pointwise product C_ct(tau) = M_a(tau) M_b(tau) C(tau).
CoincidenceSpectrum spectrum_with_crosstalk(const CoincidenceSpectrum& base,
                                            const LossMultiplier& m_a,
                                            const LossMultiplier& m_b);

// Depth of the central dip. Continuous spectra compare the tau=0 bin to the
// mean of the outer background region; pulsed spectra compare the central
// peak maximum to the mean of the side-peak maxima.
double dip_depth(const CoincidenceSpectrum& s,
                 double background_fraction = 0.2);

} // namespace coincx
