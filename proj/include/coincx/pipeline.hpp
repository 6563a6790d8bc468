#pragma once

// Orchestration behind the CLI subcommands; kept in the library so tests
// can drive the same code paths directly.

#include <array>
#include <string>

#include "coincx/analysis.hpp"
#include "coincx/config.hpp"
#include "coincx/crosstalk.hpp"
#include "coincx/montecarlo.hpp"

namespace coincx {

struct SimulateResult {
  CoincidenceSpectrum base;
  CoincidenceSpectrum with_crosstalk;
  double f_a = 0.0;
  double f_b = 0.0;
  double dip = 0.0;
  std::string report;
};

SimulateResult run_simulate(const RunConfig& cfg, SourceMode mode,
                            MultiplierVariant variant,
                            const std::string& out_dir);

struct MonteCarloResult {
  McResult mc;
  double analytic_dip = 0.0;
  double mc_dip = 0.0;
  double mc_dip_err = 0.0;
  std::string report;
};

MonteCarloResult run_montecarlo(const RunConfig& cfg, const std::string& out_dir);

struct FitCommandResult {
  std::vector<FitResult> fits;  // one entry for a dip, one per peak otherwise
  std::string report;
};

FitCommandResult run_fit(const RunConfig& cfg, const std::string& in_csv,
                         const std::string& kind, const std::string& out_dir);

struct CorrectResult {
  CoincidenceSpectrum corrected;
  double ratio_before = 0.0;  // central/side peak-height ratio (window maxima)
  double ratio_after = 0.0;
  std::string report;
};

CorrectResult run_correct(const RunConfig& cfg, const std::string& in_csv,
                          const std::string& ref_csv, const std::string& out_dir);

struct SweepResult {
  std::vector<std::array<double, 4>> rows;  // v_th, F_a, F_b, predicted dip
  std::string report;
};

SweepResult run_sweep(const RunConfig& cfg, double v_from, double v_to, int steps,
                      const std::string& out_dir);

// "# coincx <version> config=<hash>" provenance line used on all outputs.
std::string provenance_line(const RunConfig& cfg);

} // namespace coincx
