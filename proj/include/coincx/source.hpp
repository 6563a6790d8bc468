#pragma once

// Emission statistics for the two source types (continuous thermal wire,
// pulsed photoemission) and the Gaussian trigger-time densities of the
// start and stop channels.

#include <cstdint>
#include <vector>

namespace coincx {

enum class Detector { start, stop };
enum class SourceMode { continuous, pulsed };

struct SourceParams {
  double lambda = 0.1;        // mean electrons per laser pulse
  double tau0 = 11.8;         // pulse period (ns)
  double eps_a = 0.1;         // start detector efficiency
  double eps_b = 0.1;         // stop detector efficiency
  std::int64_t n_pulses = 1000000;
  double rate_per_s = 1e5;    // continuous-source arrival rate (1/s)

  void validate() const;
};

struct TemporalModel {
  double sigma = 1.41;              // per-detector trigger-time spread (ns)
  std::vector<int> stop_peak_indices = {-3, -2, -1, 0, 1, 2, 3};

  void validate() const;
};

// lambda^m exp(-lambda) / m!; evaluated in the log domain for large m.
double poisson_pmf(double lambda, std::int64_t m);

// Expected counts in the side peak at delay n*tau0 (n >= 1):
// eps_a eps_b (1-e^-lambda)^2 e^{-(n-1) eps_b lambda} (N_p - n).
double peak_counts(const SourceParams& p, std::int64_t n);

// Expected counts in the central peak: eps_a eps_b lambda^2 N_p.
double central_peak_counts(const SourceParams& p);

// Trigger-time density (1/ns). Start: unit-area Gaussian at 0. Stop: sum of
// unit-area Gaussians at i*tau0 over stop_peak_indices. Continuous mode is
// flat and returns 1 for either detector.
double trigger_density(const TemporalModel& m, Detector det, double t,
                       double tau0, SourceMode mode = SourceMode::pulsed);

} // namespace coincx
