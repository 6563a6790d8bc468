#pragma once

// Sectioned key = value run configuration with strict key checking, a
// canonical dump for reproducibility, and factories that assemble the
// module objects. A bare (empty) config runs the nominal scenario:
// tau0 = 11.8 ns, sigma = 1.41 ns, k_a = 1.2%, k_b = 1.3%, v_th = 0.15 V.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coincx/crosstalk.hpp"
#include "coincx/discriminator.hpp"
#include "coincx/montecarlo.hpp"
#include "coincx/source.hpp"
#include "coincx/trace.hpp"

namespace coincx {

struct ConfigError : std::runtime_error {
  int line;
  ConfigError(const std::string& msg, int line_no)
      : std::runtime_error(line_no > 0 ? "config line " + std::to_string(line_no) + ": " + msg
                                       : "config: " + msg),
        line(line_no) {}
};

struct RunConfig {
  struct Source {
    double lambda = 0.1;
    double tau0_ns = 11.8;
    double eps_a = 0.1;
    double eps_b = 0.1;
    std::int64_t n_pulses = 1000000;
    double rate_per_s = 1e5;
    double sigma_ns = 1.41;
    std::vector<int> stop_peaks = {-3, -2, -1, 0, 1, 2, 3};
  } source;

  struct Waveform {
    double amplitude_v = 1.0;
    double rise_ns = 2.0;
    double fall_ns = 5.0;
    double t_min_ns = -50.0;
    double t_max_ns = 50.0;
    double dt_ns = 0.05;
    std::string ct_mode = "inverted-copy";  // or "derivative"
    std::string signal_a_csv;               // measured traces override synthesis
    std::string signal_b_csv;
  } waveform;

  struct Discriminator {
    double v_th = 0.15;
    double k_a = 0.012;
    double k_b = 0.013;
    std::string phd_a = "tgauss:0.5,0.2,0,1.2";
    std::string phd_b = "tgauss:0.5,0.2,0,1.2";
  } discriminator;

  struct Crosstalk {
    std::string variant = "anchored";  // or "literal"
    std::optional<double> f_a;         // empty: derive from the distributions
    std::optional<double> f_b;
    double half_span_ns = 42.0;
    double bin_ns = 0.1;
    double scale = 1.0;
  } crosstalk;

  struct MonteCarlo {
    std::int64_t events = 1000000;
    std::uint64_t seed = 12345;
    std::string mode = "continuous";  // or "pulsed"
    double tac_window_ns = 42.0;
    double bin_ns = 0.1;
    std::string pairing = "first-stop";  // or "all-pairs"
    int threads = 0;
    bool slow_waveform_path = false;
  } montecarlo;

  struct Analysis {
    bool weighted_fit = false;
    double background_fraction = 0.2;
  } analysis;

  struct Io {
    std::string out_dir = "out";
  } io;
};

RunConfig parse_config_string(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Canonical text with every key explicit; re-parses to the same config.
std::string dump_config(const RunConfig& cfg);
// FNV-1a over the canonical dump, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

// "uniform:lo,hi", "tgauss:mu,sigma,lo,hi", "gamma:shape,scale,lo,hi",
// "delta:v0", or "csv:path".
PulseHeightDistribution make_phd(const std::string& desc);

SourceParams make_source_params(const RunConfig& cfg);
TemporalModel make_temporal_model(const RunConfig& cfg);
// pair_a carries the start signal and the crosstalk it induces (ratio k_a);
// pair_b likewise for the stop channel.
WaveformPair make_pair_a(const RunConfig& cfg);
WaveformPair make_pair_b(const RunConfig& cfg);
MultiplierVariant make_variant(const RunConfig& cfg);
McConfig make_mc_config(const RunConfig& cfg);

// The loss fractions at full overlap, either configured directly or derived
// from the pulse-height distributions. first = F_a, second = F_b.
std::pair<double, double> resolve_loss_fractions(const RunConfig& cfg);

} // namespace coincx
