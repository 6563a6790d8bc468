#include "coincx/trace.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace coincx {

GridSpec GridSpec::from_range(double t_min, double t_max, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("GridSpec: dt must be positive");
  if (t_max <= t_min) throw std::invalid_argument("GridSpec: empty time range");
  GridSpec g;
  g.t0 = t_min;
  g.dt = dt;
  g.n = static_cast<int>(std::round((t_max - t_min) / dt)) + 1;
  return g;
}

namespace {

void check_trace(const Trace& t, const char* what) {
  if (t.dt <= 0.0 || t.size() == 0)
    throw std::invalid_argument(std::string(what) + ": trace needs dt > 0 and samples");
}

} // namespace

Trace synth_signal(double amplitude, double rise, double fall, const GridSpec& grid) {
  if (amplitude <= 0.0) throw std::invalid_argument("synth_signal: amplitude must be positive");
  if (rise <= 0.0 || fall <= 0.0) throw std::invalid_argument("synth_signal: rise and fall must be positive");
  if (grid.dt <= 0.0 || grid.n < 2) throw std::invalid_argument("synth_signal: bad grid");
  if (grid.dt > rise / 4.0) {
    std::ostringstream msg;
    msg << "synth_signal: grid too coarse, dt=" << grid.dt
        << " ns exceeds rise/4=" << rise / 4.0 << " ns";
    throw std::invalid_argument(msg.str());
  }

  Trace out;
  out.t0 = grid.t0;
  out.dt = grid.dt;
  const Eigen::ArrayXd t =
      grid.t0 + grid.dt * Eigen::ArrayXd::LinSpaced(grid.n, 0.0, grid.n - 1.0);
  Eigen::ArrayXd shape =
      (t >= 0.0).select(-(1.0 - (-t / rise).exp()) * (-t / fall).exp(),
                        Eigen::ArrayXd::Zero(grid.n));
  int imin = 0;
  const double vmin = shape.minCoeff(&imin);
  if (vmin >= 0.0)
    throw std::invalid_argument("synth_signal: grid does not cover the pulse (t >= 0)");
  out.v = shape * (amplitude / -vmin) + 0.0;  // + 0.0 clears negative zeros
  out.v[imin] = -amplitude;  // pin the extremum against scaling round-off
  return out;
}

Trace synth_crosstalk(const Trace& signal, double k, CrosstalkMode mode) {
  check_trace(signal, "synth_crosstalk");
  if (k < 0.0) throw std::invalid_argument("synth_crosstalk: k must be non-negative");

  Trace out;
  out.t0 = signal.t0;
  out.dt = signal.dt;
  if (k == 0.0) {
    out.v = Eigen::ArrayXd::Zero(signal.size());
    return out;
  }

  const double target_peak = k * std::fabs(min_value(signal));
  if (mode == CrosstalkMode::inverted_copy) {
    out.v = -k * signal.v;
    return out;
  }

  // Central differences, forward/backward at the ends.
  const int n = signal.size();
  Eigen::ArrayXd d(n);
  d[0] = (signal.v[1] - signal.v[0]) / signal.dt;
  d[n - 1] = (signal.v[n - 1] - signal.v[n - 2]) / signal.dt;
  for (int i = 1; i < n - 1; ++i)
    d[i] = (signal.v[i + 1] - signal.v[i - 1]) / (2.0 * signal.dt);
  const double peak = d.maxCoeff();
  if (peak <= 0.0)
    throw std::invalid_argument("synth_crosstalk: derivative has no positive peak");
  out.v = d * (target_peak / peak);
  return out;
}

WaveformPair make_waveform_pair(const Trace& signal, double k, CrosstalkMode mode) {
  if (k < 0.0 || k > 0.5)
    throw std::invalid_argument("make_waveform_pair: coupling ratio outside [0, 0.5]");
  WaveformPair p;
  p.signal = signal;
  p.crosstalk = synth_crosstalk(signal, k, mode);
  p.coupling_ratio = k;
  return p;
}

double min_value(const Trace& t) {
  check_trace(t, "min_value");
  return t.v.minCoeff();
}

double max_value(const Trace& t) {
  check_trace(t, "max_value");
  return t.v.maxCoeff();
}

double argmin_time(const Trace& t) {
  check_trace(t, "argmin_time");
  int idx = 0;
  t.v.minCoeff(&idx);
  return t.time(idx);
}

double sample_at(const Trace& t, double time) {
  const double x = (time - t.t0) / t.dt;
  if (x < 0.0 || x > t.size() - 1) return 0.0;
  const int i = std::min(static_cast<int>(x), t.size() - 2);
  const double f = x - i;
  return t.v[i] * (1.0 - f) + t.v[i + 1] * f;
}

Trace reversed(const Trace& t) {
  check_trace(t, "reversed");
  Trace out;
  out.dt = t.dt;
  out.t0 = -t.t_end();
  out.v = t.v.reverse();
  return out;
}

double modified_extremum(const Trace& signal, const Trace& crosstalk, double tau) {
  check_trace(signal, "modified_extremum");
  check_trace(crosstalk, "modified_extremum");

  // No overlap: the shifted crosstalk contributes nothing.
  const double lo = crosstalk.t0 - tau;
  const double hi = crosstalk.t_end() - tau;
  if (hi < signal.t0 || lo > signal.t_end()) return min_value(signal);

  double m = std::numeric_limits<double>::infinity();
  const int n = signal.size();
  for (int i = 0; i < n; ++i) {
    const double s = signal.v[i] + sample_at(crosstalk, signal.time(i) + tau);
    if (s < m) m = s;
  }
  return m;
}

Trace load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trace_csv: cannot open " + path);

  std::string line;
  bool got_header = false;
  // Skip provenance comments.
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') {
      got_header = true;
      break;
    }
  }
  if (!got_header) throw std::runtime_error("load_trace_csv: empty file " + path);
  if (line.find("time_ns") == std::string::npos || line.find("voltage_V") == std::string::npos)
    throw std::runtime_error("load_trace_csv: missing 'time_ns,voltage_V' header in " + path);

  std::vector<double> times, volts;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, v;
    char comma;
    if (!(ss >> t >> comma >> v) || comma != ',') {
      throw std::runtime_error("load_trace_csv: malformed row " + std::to_string(row) +
                               " in " + path);
    }
    times.push_back(t);
    volts.push_back(v);
  }
  if (times.empty()) throw std::runtime_error("load_trace_csv: no samples in " + path);
  if (times.size() < 2) throw std::runtime_error("load_trace_csv: need at least two samples in " + path);

  // The endpoint span gives the least noisy spacing estimate.
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (dt <= 0.0) throw std::runtime_error("load_trace_csv: non-increasing time column in " + path);
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double step = times[i] - times[i - 1];
    if (std::fabs(step - dt) > 1e-6) {
      throw std::runtime_error("load_trace_csv: non-uniform time column at row " +
                               std::to_string(i + 2) + " in " + path);
    }
  }

  Trace out;
  out.t0 = times[0];
  out.dt = dt;
  out.v = Eigen::Map<Eigen::ArrayXd>(volts.data(), static_cast<int>(volts.size()));
  return out;
}

void save_trace_csv(const Trace& t, const std::string& path) {
  check_trace(t, "save_trace_csv");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_trace_csv: cannot write " + path);
  out << "time_ns,voltage_V\n";
  char buf[80];
  for (int i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", t.time(i), t.v[i]);
    out << buf;
  }
}

} // namespace coincx
