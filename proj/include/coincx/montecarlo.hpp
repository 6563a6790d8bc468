#pragma once

// Event-level oracle: individual electrons with drawn arrival times and
// pulse heights, waveform-overlap crosstalk between coincident pulses,
// threshold discrimination, TAC pairing, and MCA histogramming. Ground
// truth for the analytic model. Counter-based random streams keyed by
// pulse/frame index make results independent of the worker count.

#include <cstdint>

#include "coincx/crosstalk.hpp"
#include "coincx/discriminator.hpp"
#include "coincx/source.hpp"
#include "coincx/spectrum.hpp"
#include "coincx/trace.hpp"

namespace coincx {

enum class PairingMode { first_stop, all_pairs };

struct McConfig {
  std::uint64_t seed = 1;
  // continuous mode: target number of electron arrivals;
  // pulsed mode: number of laser pulses.
  std::int64_t n_events = 1000000;
  SourceMode mode = SourceMode::continuous;
  SourceParams source;
  TemporalModel temporal;
  WaveformPair pair_a;
  WaveformPair pair_b;
  PulseHeightDistribution phd_a = PulseHeightDistribution::uniform(0.0, 1.0);
  PulseHeightDistribution phd_b = PulseHeightDistribution::uniform(0.0, 1.0);
  DiscriminatorConfig disc;
  double bin_ns = 0.1;
  double tac_window_ns = 42.0;
  PairingMode pairing = PairingMode::first_stop;
  int threads = 0;  // <= 0: pick automatically
  // Re-derive each pulse pair's effective heights from the summed traces
  // instead of the tabulated overlap profile; for spot validation only.
  bool slow_waveform_path = false;

  void validate() const;
};

struct McTotals {
  std::int64_t generated_events = 0;
  std::int64_t starts = 0;          // start-channel triggers after crosstalk
  std::int64_t stops = 0;           // stop-channel triggers after crosstalk
  std::int64_t accepted_pairs = 0;  // histogrammed start-stop pairs
  std::int64_t vetoed_events = 0;   // triggers killed by crosstalk alone
  std::int64_t vetoed_pairs = 0;    // pair deficit versus the crosstalk-free run
};

struct McResult {
  CoincidenceSpectrum spectrum;  // counts; errors = sqrt(counts)
  McTotals totals;
};

McResult run_simulation(const McConfig& cfg);

// Emission statistics only (no waveforms, heights, or thresholds): per
// pulse, Poisson electron counts thinned onto the detectors; coincidences
// tallied per peak index. Side peak n pairs a start at pulse j with the
// first stop at pulse j+n (pulses strictly between must be stop-silent);
// the central tally counts pulses that triggered both detectors.
struct EmissionTally {
  std::int64_t n_pulses = 0;
  std::vector<std::int64_t> counts;  // index n = 0..n_max

  double error(int n) const;  // sqrt(N), at least 1
};

EmissionTally emission_oracle(const SourceParams& p, std::int64_t n_pulses_sim,
                              std::uint64_t seed, int n_max = 5);

// Exact expectations for the event-level process the oracle implements
// (Poisson thinning identities); for transparent comparisons.
double emission_oracle_expectation(const SourceParams& p, std::int64_t n_pulses_sim,
                                   int n);

// High-statistics joint acceptance at a fixed overlap: draw height pairs,
// apply the crosstalk reductions at the given profile values, and count how
// many pairs that would have passed clean are lost.
struct JointProbe {
  std::int64_t n = 0;
  std::int64_t pass_base = 0;
  std::int64_t pass_ct = 0;
  double depth() const;
  double depth_err() const;
};

JointProbe joint_acceptance_probe(const PulseHeightDistribution& phd_a,
                                  const PulseHeightDistribution& phd_b,
                                  double k_a, double k_b, double v_th,
                                  double chi_a, double chi_b, std::int64_t n,
                                  std::uint64_t seed, int threads = 0);

} // namespace coincx
