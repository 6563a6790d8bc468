#pragma once

// Gaussian dip/peak fitting against a flat background and the
// continuous-reference correction: divide a pulsed spectrum by the
// normalized dip profile measured with a continuous source.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "coincx/spectrum.hpp"

namespace coincx {

struct FitResult {
  enum class Status { ok, no_dip, not_converged };

  double amplitude = 0.0;   // dip depth (or peak height) above background
  double center = 0.0;      // ns
  double sigma = 0.0;       // ns
  double background = 0.0;

  double amplitude_err = 0.0;
  double center_err = 0.0;
  double sigma_err = 0.0;
  double background_err = 0.0;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();  // order: A, c, s, B

  double residual_rms = 0.0;
  int iterations = 0;
  bool converged = false;
  Status status = Status::ok;

  double depth() const { return background != 0.0 ? amplitude / background : 0.0; }
  double depth_err() const;

  std::string summary() const;  // "key: value" lines
};

// Fit y(tau) = B - A exp(-(tau-c)^2 / 2 s^2) by damped Gauss-Newton.
// `weighted` divides residuals by the per-bin statistical errors when the
// spectrum carries them.
FitResult fit_gaussian_dip(const CoincidenceSpectrum& spec, bool weighted = false);

// Independent Gaussian-plus-background fits in windows of +-half_window
// around each expected center. Windows must not overlap or be empty.
std::vector<FitResult> fit_peaks(const CoincidenceSpectrum& spec,
                                 const std::vector<double>& expected_centers,
                                 double half_window, bool weighted = false);

// Normalized dip profile: D(tau) = 1 - depth * exp(-(tau-c)^2 / 2 s^2),
// unit background, D -> 1 far from the dip.
struct CorrectionReference {
  double depth = 0.0;
  double center = 0.0;
  double sigma = 1.0;
  double depth_err = 0.0;
  std::string provenance;

  double value(double tau) const;
};

CorrectionReference build_reference(const FitResult& dip_fit);

// Divide the spectrum (and its errors) by the reference profile.
CoincidenceSpectrum apply_correction(const CoincidenceSpectrum& spec,
                                     const CorrectionReference& ref);

// Sampled reference profile, for file interchange: CSV "tau_ns,dhat".
struct SampledReference {
  TauGrid grid;
  Eigen::ArrayXd values;

  double value(double tau) const;  // linear interpolation, 1 outside
};

SampledReference sample_reference(const CorrectionReference& ref, const TauGrid& grid);
// A reference taken directly from a continuous spectrum: values divided by
// the outer-region background level.
SampledReference reference_from_spectrum(const CoincidenceSpectrum& spec,
                                         double background_fraction = 0.2);
CoincidenceSpectrum apply_correction(const CoincidenceSpectrum& spec,
                                     const SampledReference& ref);

void save_reference_csv(const SampledReference& ref, const std::string& path,
                        const std::string& header_comment = "");
SampledReference load_reference_csv(const std::string& path);

} // namespace coincx
