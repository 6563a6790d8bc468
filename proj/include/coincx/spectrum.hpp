#pragma once

// The TAC/MCA product: a histogram of start-stop delays, either expected
// values from the analytic model or counts from the Monte Carlo. Spectra
// are written as "tau_ns,value" CSV with a JSON metadata sidecar.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>

#include "coincx/source.hpp"

namespace coincx {

struct TauGrid {
  double tau_min = 0.0;  // center of the first bin (ns)
  double bin = 0.1;      // bin width (ns)
  int n = 0;

  double center(int i) const { return tau_min + i * bin; }
  double tau_max() const { return center(n - 1); }
  Eigen::ArrayXd centers() const;
  // Index of the bin whose center is nearest to tau; -1 when outside.
  int index_of(double tau) const;

  // Symmetric grid containing a bin centered exactly at tau = 0.
  static TauGrid symmetric(double half_span, double bin);

  bool operator==(const TauGrid& o) const;
};

struct SpectrumMeta {
  SourceMode mode = SourceMode::continuous;
  std::string variant;            // loss-multiplier variant, when applied
  double tau0 = 0.0;              // pulse period for pulsed spectra (ns)
  std::vector<int> peak_indices;  // pulsed peak positions, units of tau0
  std::string value_kind;         // "expected counts per bin" or "counts"
  std::map<std::string, std::string> extra;
};

struct CoincidenceSpectrum {
  TauGrid grid;
  Eigen::ArrayXd values;
  Eigen::ArrayXd errors;  // per-bin statistical error; empty when exact
  SpectrumMeta meta;

  double value_at(double tau) const;  // nearest-bin lookup
  void check() const;                 // grid/value consistency, values >= 0
};

// path gets the spectrum CSV; a "<path minus .csv>.meta.json" sidecar holds
// the metadata. header_comment, when non-empty, is written as a '#' line.
void save_spectrum_csv(const CoincidenceSpectrum& s, const std::string& path,
                       const std::string& header_comment = "");
CoincidenceSpectrum load_spectrum_csv(const std::string& path);

} // namespace coincx
