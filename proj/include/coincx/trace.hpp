#pragma once

// Voltage-vs-time pulse shapes on a uniform grid: detector signal pulses,
// the crosstalk replicas they induce on the partner channel, and the
// extremum of their overlapping sum which drives the coincidence loss.

#include <Eigen/Dense>
#include <string>

namespace coincx {

struct Trace {
  double t0 = 0.0;          // time of the first sample (ns)
  double dt = 0.0;          // sample spacing (ns)
  Eigen::ArrayXd v;         // voltages (V)

  int size() const { return static_cast<int>(v.size()); }
  double time(int i) const { return t0 + i * dt; }
  double t_end() const { return t0 + (size() - 1) * dt; }
  double duration() const { return t_end() - t0; }
};

struct GridSpec {
  double t0 = -50.0;
  double dt = 0.05;
  int n = 2001;

  static GridSpec from_range(double t_min, double t_max, double dt);
};

enum class CrosstalkMode { inverted_copy, derivative };

// Negative-going pulse -A (1 - exp(-t/rise)) exp(-t/fall) for t >= 0,
// renormalized so the sampled minimum is exactly -amplitude.
Trace synth_signal(double amplitude, double rise, double fall,
                   const GridSpec& grid = GridSpec{});

// Crosstalk replica with peak k * |min(signal)|. Inverted copy scales the
// signal; derivative mode uses a central-difference dV/dt, rescaled.
Trace synth_crosstalk(const Trace& signal, double k,
                      CrosstalkMode mode = CrosstalkMode::inverted_copy);

struct WaveformPair {
  Trace signal;
  Trace crosstalk;
  double coupling_ratio = 0.0;
};

WaveformPair make_waveform_pair(const Trace& signal, double k,
                                CrosstalkMode mode = CrosstalkMode::inverted_copy);

double min_value(const Trace& t);
double max_value(const Trace& t);
double argmin_time(const Trace& t);

// Linear interpolation; zero outside the sampled support.
double sample_at(const Trace& t, double time);

Trace reversed(const Trace& t);

// min over t of signal(t) + crosstalk(t + tau). Beyond any overlap this is
// exactly min(signal).
double modified_extremum(const Trace& signal, const Trace& crosstalk,
                         double tau);

// CSV format: header "time_ns,voltage_V", one sample per row, values
// printed with 9 significant digits. The time column must be uniform and
// increasing (tolerance 1e-6 ns).
Trace load_trace_csv(const std::string& path);
void save_trace_csv(const Trace& t, const std::string& path);

} // namespace coincx
