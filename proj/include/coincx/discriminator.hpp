#pragma once

// Pulse-height distributions, the amplitude threshold, and the fractional
// count loss caused by coincident crosstalk pushing pulses below threshold.
//
// Heights are stored as positive magnitudes of the negative-going pulses;
// coincident crosstalk (positive polarity) subtracts from the magnitude.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace coincx {

class PulseHeightDistribution {
public:
  enum class Kind { uniform, truncated_gaussian, gamma, point_mass, empirical };

  static PulseHeightDistribution uniform(double lo, double hi);
  static PulseHeightDistribution truncated_gaussian(double mu, double sigma,
                                                    double lo, double hi);
  static PulseHeightDistribution gamma(double shape, double scale, double lo,
                                       double hi);
  static PulseHeightDistribution point_mass(double v0);
  static PulseHeightDistribution empirical(std::vector<double> bin_edges,
                                           std::vector<double> counts);

  Kind kind() const { return kind_; }
  double v_min() const { return lo_; }
  double v_max() const { return hi_; }

  // Unit-normalized density. A point mass has no density function.
  double density(double v) const;
  double cdf(double v) const;
  double survival(double v) const { return 1.0 - cdf(v); }
  double quantile(double u) const;

  // Interior points where the density is only piecewise smooth.
  std::vector<double> breakpoints() const;

  std::string describe() const;

private:
  PulseHeightDistribution() = default;

  Kind kind_ = Kind::uniform;
  double lo_ = 0.0, hi_ = 1.0;
  double p1_ = 0.0, p2_ = 0.0;     // family parameters
  double norm_ = 1.0;              // truncation normalization
  double cdf_lo_ = 0.0;            // parent cdf at lo (truncated families)
  std::vector<double> edges_;      // empirical
  std::vector<double> dens_;       // empirical densities per bin
  std::vector<double> cum_;        // empirical cdf at edges
};

struct DiscriminatorConfig {
  double v_th = 0.15;   // threshold (V)
  double k_a = 0.012;   // start-channel pulse fraction coupled onto the stop wire
  double k_b = 0.013;   // stop-channel pulse fraction coupled onto the start wire

  void validate() const;
};

// Fraction of pulses above threshold, integral_{v_th} of the unit density.
// If v_th lies above the support the fraction is 0 and *above_support (when
// given) is set.
double accepted_fraction(const PulseHeightDistribution& phd, double v_th,
                         bool* above_support = nullptr);

// Acceptance of the self channel when a coincident partner pulse couples
// k_other of its height onto the self wire, averaged over the partner's
// distribution conditioned on the partner itself passing the threshold.
double accepted_fraction_with_crosstalk(const PulseHeightDistribution& phd_self,
                                        const PulseHeightDistribution& phd_other,
                                        double k_other, double v_th);

// F = (P - P_ct) / P, the fraction of coincident counts lost at full overlap.
double loss_fraction(const PulseHeightDistribution& phd_self,
                     const PulseHeightDistribution& phd_other, double k_other,
                     double v_th);

std::vector<std::pair<double, double>> threshold_sweep(
    const PulseHeightDistribution& phd_self,
    const PulseHeightDistribution& phd_other, double k_other, double v_lo,
    double v_hi, int steps);

// CSV format: header "bin_left_V,bin_right_V,counts"; bins must be
// contiguous and increasing, counts non-negative. Normalized on load.
PulseHeightDistribution load_phd_csv(const std::string& path);
void save_phd_csv(const PulseHeightDistribution& phd, const std::string& path);

} // namespace coincx
