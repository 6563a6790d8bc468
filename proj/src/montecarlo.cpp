#include "coincx/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "coincx/philox.hpp"

namespace coincx {

namespace {

struct Event {
  double t = 0.0;
  float v = 0.0f;
  std::uint8_t det = 0;  // 0 = start, 1 = stop
};

int pick_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(hw == 0 ? 2u : hw, 8u));
}

// Run fn(chunk_index) for chunk indices [0, n_chunks) on a small pool.
void parallel_chunks(std::int64_t n_chunks, int threads,
                     const std::function<void(std::int64_t)>& fn) {
  if (threads <= 1 || n_chunks <= 1) {
    for (std::int64_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::int64_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      fn(c);
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<std::int64_t>(threads, n_chunks);
  pool.reserve(n);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

struct ChannelShapes {
  // Unit-normalized shapes: signal minimum -1, partner crosstalk peak +1.
  Trace signal_unit;
  Trace crosstalk_unit_other;  // the partner channel's crosstalk shape
  double k_other = 0.0;        // partner coupling ratio reducing this channel
};

// Effective height of one channel's pulse when the partner pulse sits at
// pair delay tau = t_stop - t_start, from the full summed waveform.
double slow_effective_height(const ChannelShapes& ch, double v_self,
                             double v_partner, double tau, Detector det) {
  const double sign = det == Detector::start ? 1.0 : -1.0;
  const Trace& s = ch.signal_unit;
  const Trace& c = ch.crosstalk_unit_other;
  double m = 0.0;  // the summed trace is <= 0 near the pulse
  for (int i = 0; i < s.size(); ++i) {
    const double val =
        v_self * s.v[i] + ch.k_other * v_partner * sample_at(c, s.time(i) + sign * tau);
    if (val < m) m = val;
  }
  return -m;
}

struct Histogram {
  TauGrid grid;
  std::vector<std::int64_t> counts;

  void add(double tau) {
    const int i = grid.index_of(tau);
    if (i >= 0) ++counts[i];
  }
  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

// Streaming start-stop pairing. first_stop consumes the earliest unused
// stop inside [t_start - W, t_start + W]; all_pairs histograms every
// start-stop combination within the window.
struct Pairer {
  PairingMode mode = PairingMode::first_stop;
  double window = 0.0;
  Histogram* hist = nullptr;  // null: count only
  std::int64_t pairs = 0;

  std::deque<double> pending_starts;
  std::deque<double> recent_starts;
  std::deque<double> recent_stops;

  void feed(double t, std::uint8_t det) {
    if (mode == PairingMode::first_stop) {
      if (det == 0) {
        while (!pending_starts.empty() && t > pending_starts.front() + window)
          pending_starts.pop_front();
        pending_starts.push_back(t);
      } else {
        while (!pending_starts.empty()) {
          const double ts = pending_starts.front();
          if (t > ts + window) {
            pending_starts.pop_front();  // start expired unstopped
            continue;
          }
          if (t >= ts - window) {
            record(t - ts);
            pending_starts.pop_front();  // stop consumed
          }
          break;  // stop is earlier than every remaining window: drop it
        }
      }
      return;
    }
    // all_pairs
    while (!recent_stops.empty() && t - recent_stops.front() > window)
      recent_stops.pop_front();
    while (!recent_starts.empty() && t - recent_starts.front() > window)
      recent_starts.pop_front();
    if (det == 0) {
      for (double tb : recent_stops) record(tb - t);
      recent_starts.push_back(t);
    } else {
      for (double ta : recent_starts) record(t - ta);
      recent_stops.push_back(t);
    }
  }

  void record(double tau) {
    ++pairs;
    if (hist) hist->add(tau);
  }
};

} // namespace

void McConfig::validate() const {
  source.validate();
  temporal.validate();
  disc.validate();
  if (n_events < 1) throw std::invalid_argument("montecarlo: n_events must be >= 1");
  if (bin_ns <= 0.0) throw std::invalid_argument("montecarlo: bin width must be > 0");
  if (tac_window_ns <= bin_ns)
    throw std::invalid_argument("montecarlo: TAC window must exceed the bin width");
  if (mode == SourceMode::pulsed) {
    double span = 0.0;
    for (int i : temporal.stop_peak_indices)
      span = std::max(span, std::fabs(i * source.tau0) + 5.0 * temporal.sigma * std::sqrt(2.0));
    if (tac_window_ns < span)
      throw std::invalid_argument("montecarlo: TAC window does not cover the configured peak span");
  }
  if (accepted_fraction(phd_a, disc.v_th) <= 0.0 ||
      accepted_fraction(phd_b, disc.v_th) <= 0.0)
    throw std::invalid_argument("montecarlo: threshold sits above the pulse-height support, no counts possible");
  if (pair_a.signal.size() == 0 || pair_b.signal.size() == 0)
    throw std::invalid_argument("montecarlo: waveform pairs are required");
}

McResult run_simulation(const McConfig& cfg) {
  cfg.validate();
  const int threads = pick_threads(cfg.threads);

  // Overlap weights chi(tau) for both channels on a fine grid.
  const double span_a = cfg.pair_a.signal.duration() + cfg.pair_b.crosstalk.duration();
  const double span_b = cfg.pair_b.signal.duration() + cfg.pair_a.crosstalk.duration();
  const double chi_span = std::max(span_a, span_b);
  const double chi_step =
      std::min({cfg.pair_a.signal.dt, cfg.pair_b.signal.dt, 0.05});
  const TauGrid chi_grid = TauGrid::symmetric(chi_span, chi_step);
  const LossMultiplier chi_a =
      LossMultiplier::build(cfg.pair_a.signal, cfg.pair_b.crosstalk, 0.0,
                            MultiplierVariant::anchored, chi_grid, Detector::start);
  const LossMultiplier chi_b =
      LossMultiplier::build(cfg.pair_b.signal, cfg.pair_a.crosstalk, 0.0,
                            MultiplierVariant::anchored, chi_grid, Detector::stop);

  ChannelShapes shapes_a, shapes_b;
  if (cfg.slow_waveform_path) {
    const double amp_a = std::fabs(min_value(cfg.pair_a.signal));
    const double amp_b = std::fabs(min_value(cfg.pair_b.signal));
    shapes_a.signal_unit = cfg.pair_a.signal;
    shapes_a.signal_unit.v /= amp_a;
    shapes_b.signal_unit = cfg.pair_b.signal;
    shapes_b.signal_unit.v /= amp_b;
    shapes_a.k_other = cfg.disc.k_b;
    shapes_b.k_other = cfg.disc.k_a;
    shapes_a.crosstalk_unit_other = cfg.pair_b.crosstalk;
    if (cfg.disc.k_b > 0.0) shapes_a.crosstalk_unit_other.v /= cfg.disc.k_b * amp_b;
    shapes_b.crosstalk_unit_other = cfg.pair_a.crosstalk;
    if (cfg.disc.k_a > 0.0) shapes_b.crosstalk_unit_other.v /= cfg.disc.k_a * amp_a;
  }

  // ---- generation, chunked onto counter-based streams ----
  std::vector<std::vector<Event>> chunks;
  bool needs_sort = false;

  if (cfg.mode == SourceMode::pulsed) {
    const std::int64_t n_pulses = cfg.n_events;
    const std::int64_t per_chunk = 16384;
    const std::int64_t n_chunks = (n_pulses + per_chunk - 1) / per_chunk;
    chunks.resize(n_chunks);
    parallel_chunks(n_chunks, threads, [&](std::int64_t c) {
      auto& out = chunks[c];
      const std::int64_t lo = c * per_chunk;
      const std::int64_t hi = std::min(lo + per_chunk, n_pulses);
      out.reserve(static_cast<std::size_t>((hi - lo) * cfg.source.lambda *
                                               (cfg.source.eps_a + cfg.source.eps_b) +
                                           16));
      for (std::int64_t p = lo; p < hi; ++p) {
        PhiloxStream rng(cfg.seed, static_cast<std::uint64_t>(p));
        const std::int64_t m = rng.poisson(cfg.source.lambda);
        for (std::int64_t e = 0; e < m; ++e) {
          const double u = rng.uniform();
          std::uint8_t det;
          if (u < cfg.source.eps_a)
            det = 0;
          else if (u < cfg.source.eps_a + cfg.source.eps_b)
            det = 1;
          else
            continue;
          Event ev;
          ev.t = static_cast<double>(p) * cfg.source.tau0 +
                 cfg.temporal.sigma * rng.gaussian();
          ev.v = static_cast<float>((det == 0 ? cfg.phd_a : cfg.phd_b).quantile(rng.uniform()));
          ev.det = det;
          out.push_back(ev);
        }
      }
      std::stable_sort(out.begin(), out.end(),
                       [](const Event& a, const Event& b) { return a.t < b.t; });
    });
    needs_sort = true;  // jitter can cross chunk boundaries
  } else {
    const double rate_ns = cfg.source.rate_per_s * 1e-9;
    const double target_mean = 16.0;
    const double frame_ns = target_mean / rate_ns;
    const std::int64_t n_frames =
        std::max<std::int64_t>(1, (cfg.n_events + 15) / 16);
    const std::int64_t frames_per_chunk = 1024;
    const std::int64_t n_chunks = (n_frames + frames_per_chunk - 1) / frames_per_chunk;
    chunks.resize(n_chunks);
    parallel_chunks(n_chunks, threads, [&](std::int64_t c) {
      auto& out = chunks[c];
      const std::int64_t lo = c * frames_per_chunk;
      const std::int64_t hi = std::min(lo + frames_per_chunk, n_frames);
      out.reserve(static_cast<std::size_t>((hi - lo) * target_mean + 64));
      std::vector<double> times;
      for (std::int64_t f = lo; f < hi; ++f) {
        PhiloxStream rng(cfg.seed, static_cast<std::uint64_t>(f));
        const std::int64_t m = rng.poisson(frame_ns * rate_ns);
        times.clear();
        times.reserve(m);
        for (std::int64_t e = 0; e < m; ++e)
          times.push_back((static_cast<double>(f) + rng.uniform()) * frame_ns);
        std::sort(times.begin(), times.end());
        for (double t : times) {
          const double u = rng.uniform();
          std::uint8_t det;
          if (u < cfg.source.eps_a)
            det = 0;
          else if (u < cfg.source.eps_a + cfg.source.eps_b)
            det = 1;
          else
            continue;
          Event ev;
          ev.t = t;
          ev.v = static_cast<float>((det == 0 ? cfg.phd_a : cfg.phd_b).quantile(rng.uniform()));
          ev.det = det;
          out.push_back(ev);
        }
      }
    });
  }

  std::size_t total_events = 0;
  for (const auto& ch : chunks) total_events += ch.size();
  std::vector<Event> events;
  events.reserve(total_events);
  for (auto& ch : chunks) {
    events.insert(events.end(), ch.begin(), ch.end());
    ch.clear();
    ch.shrink_to_fit();
  }
  if (needs_sort)
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });

  // ---- crosstalk reduction from the dominant coincident partner ----
  const std::int64_t n = static_cast<std::int64_t>(events.size());
  std::vector<std::int32_t> prev_opp(n, -1), next_opp(n, -1);
  {
    std::int64_t last[2] = {-1, -1};
    for (std::int64_t i = 0; i < n; ++i) {
      prev_opp[i] = static_cast<std::int32_t>(last[1 - events[i].det]);
      last[events[i].det] = i;
    }
    last[0] = last[1] = -1;
    for (std::int64_t i = n - 1; i >= 0; --i) {
      next_opp[i] = static_cast<std::int32_t>(last[1 - events[i].det]);
      last[events[i].det] = i;
    }
  }

  std::vector<std::uint8_t> fired(n, 0), fired_base(n, 0);
  std::int64_t starts = 0, stops = 0, vetoed_events = 0;

  auto reduction_for = [&](std::int64_t i, std::int64_t j) -> double {
    // Pair delay tau = t_stop - t_start for the (i, j) pulse pair.
    const Event& ev = events[i];
    const Event& nb = events[j];
    const double tau = ev.det == 0 ? nb.t - ev.t : ev.t - nb.t;
    if (cfg.slow_waveform_path) {
      const ChannelShapes& ch = ev.det == 0 ? shapes_a : shapes_b;
      const double eff = slow_effective_height(
          ch, ev.v, nb.v, tau, ev.det == 0 ? Detector::start : Detector::stop);
      return ev.v - eff;
    }
    const double k = ev.det == 0 ? cfg.disc.k_b : cfg.disc.k_a;
    const double chi = ev.det == 0 ? chi_a.weight(tau) : chi_b.weight(tau);
    return k * static_cast<double>(nb.v) * chi;
  };

  for (std::int64_t i = 0; i < n; ++i) {
    const Event& ev = events[i];
    double red = 0.0;
    for (const std::int64_t j : {static_cast<std::int64_t>(prev_opp[i]),
                                 static_cast<std::int64_t>(next_opp[i])}) {
      if (j < 0) continue;
      if (std::fabs(events[j].t - ev.t) > chi_span) continue;
      red = std::max(red, reduction_for(i, j));
    }
    const bool base = ev.v >= cfg.disc.v_th;
    const bool eff = static_cast<double>(ev.v) - red >= cfg.disc.v_th;
    fired_base[i] = base;
    fired[i] = eff;
    if (base && !eff) ++vetoed_events;
    if (eff) (ev.det == 0 ? starts : stops)++;
  }

  // ---- TAC pairing and MCA histogram ----
  Histogram hist;
  hist.grid = TauGrid::symmetric(cfg.tac_window_ns, cfg.bin_ns);
  hist.counts.assign(hist.grid.n, 0);

  Pairer pairer;
  pairer.mode = cfg.pairing;
  pairer.window = cfg.tac_window_ns;
  pairer.hist = &hist;
  Pairer base_pairer;
  base_pairer.mode = cfg.pairing;
  base_pairer.window = cfg.tac_window_ns;
  for (std::int64_t i = 0; i < n; ++i) {
    if (fired[i]) pairer.feed(events[i].t, events[i].det);
    if (fired_base[i]) base_pairer.feed(events[i].t, events[i].det);
  }

  McResult res;
  res.spectrum.grid = hist.grid;
  res.spectrum.values.resize(hist.grid.n);
  res.spectrum.errors.resize(hist.grid.n);
  for (int i = 0; i < hist.grid.n; ++i) {
    res.spectrum.values[i] = static_cast<double>(hist.counts[i]);
    res.spectrum.errors[i] = std::sqrt(static_cast<double>(hist.counts[i]));
  }
  res.spectrum.meta.mode = cfg.mode;
  res.spectrum.meta.tau0 = cfg.source.tau0;
  res.spectrum.meta.peak_indices = cfg.temporal.stop_peak_indices;
  res.spectrum.meta.value_kind = "counts";
  res.spectrum.meta.extra["pairing"] =
      cfg.pairing == PairingMode::first_stop ? "first-stop" : "all-pairs";

  res.totals.generated_events = n;
  res.totals.starts = starts;
  res.totals.stops = stops;
  res.totals.accepted_pairs = hist.total();
  res.totals.vetoed_events = vetoed_events;
  res.totals.vetoed_pairs = std::max<std::int64_t>(0, base_pairer.pairs - pairer.pairs);
  return res;
}

double EmissionTally::error(int n) const {
  const double c = static_cast<double>(counts.at(n));
  return std::sqrt(std::max(1.0, c));
}

EmissionTally emission_oracle(const SourceParams& p, std::int64_t n_pulses_sim,
                              std::uint64_t seed, int n_max) {
  p.validate();
  if (n_pulses_sim < 1) throw std::invalid_argument("emission_oracle: need pulses");
  if (n_max < 1) throw std::invalid_argument("emission_oracle: n_max must be >= 1");

  // Per-pulse trigger flags: bit 0 = start fired, bit 1 = stop fired.
  std::vector<std::uint8_t> flags(n_pulses_sim, 0);
  const std::int64_t per_chunk = 65536;
  const std::int64_t n_chunks = (n_pulses_sim + per_chunk - 1) / per_chunk;
  parallel_chunks(n_chunks, pick_threads(0), [&](std::int64_t c) {
    const std::int64_t lo = c * per_chunk;
    const std::int64_t hi = std::min(lo + per_chunk, n_pulses_sim);
    for (std::int64_t j = lo; j < hi; ++j) {
      PhiloxStream rng(seed, static_cast<std::uint64_t>(j));
      const std::int64_t m = rng.poisson(p.lambda);
      std::uint8_t f = 0;
      for (std::int64_t e = 0; e < m; ++e) {
        const double u = rng.uniform();
        if (u < p.eps_a)
          f |= 1;
        else if (u < p.eps_a + p.eps_b)
          f |= 2;
      }
      flags[j] = f;
    }
  });

  EmissionTally tally;
  tally.n_pulses = n_pulses_sim;
  tally.counts.assign(n_max + 1, 0);
  for (std::int64_t j = 0; j < n_pulses_sim; ++j) {
    if (!(flags[j] & 1)) continue;
    if (flags[j] & 2) ++tally.counts[0];
    for (int d = 1; d <= n_max; ++d) {
      const std::int64_t t = j + d;
      if (t >= n_pulses_sim) break;
      if (flags[t] & 2) {
        ++tally.counts[d];
        break;
      }
    }
  }
  return tally;
}

double emission_oracle_expectation(const SourceParams& p, std::int64_t n_pulses_sim,
                                   int n) {
  const double pa = 1.0 - std::exp(-p.eps_a * p.lambda);
  const double pb = 1.0 - std::exp(-p.eps_b * p.lambda);
  if (n == 0) return pa * pb * static_cast<double>(n_pulses_sim);
  const double silent = std::exp(-p.eps_b * p.lambda);
  return pa * pb * std::pow(silent, n - 1) * static_cast<double>(n_pulses_sim - n);
}

double JointProbe::depth() const {
  if (pass_base == 0) return 0.0;
  return 1.0 - static_cast<double>(pass_ct) / static_cast<double>(pass_base);
}

double JointProbe::depth_err() const {
  if (pass_base == 0) return 0.0;
  const std::int64_t lost = pass_base - pass_ct;
  return std::sqrt(std::max<std::int64_t>(1, lost)) / static_cast<double>(pass_base);
}

JointProbe joint_acceptance_probe(const PulseHeightDistribution& phd_a,
                                  const PulseHeightDistribution& phd_b,
                                  double k_a, double k_b, double v_th,
                                  double chi_a, double chi_b, std::int64_t n,
                                  std::uint64_t seed, int threads) {
  if (n < 1) throw std::invalid_argument("joint_acceptance_probe: n must be >= 1");
  const std::int64_t per_chunk = 65536;
  const std::int64_t n_chunks = (n + per_chunk - 1) / per_chunk;
  std::vector<std::int64_t> base_c(n_chunks, 0), ct_c(n_chunks, 0);
  parallel_chunks(n_chunks, pick_threads(threads), [&](std::int64_t c) {
    const std::int64_t lo = c * per_chunk;
    const std::int64_t hi = std::min(lo + per_chunk, n);
    PhiloxStream rng(seed, 0x100000000ull + static_cast<std::uint64_t>(c));
    std::int64_t nb = 0, nc = 0;
    for (std::int64_t i = lo; i < hi; ++i) {
      const double va = phd_a.quantile(rng.uniform());
      const double vb = phd_b.quantile(rng.uniform());
      const bool base = va >= v_th && vb >= v_th;
      const bool ct = (va - k_b * vb * chi_a >= v_th) && (vb - k_a * va * chi_b >= v_th);
      nb += base;
      nc += base && ct;
    }
    base_c[c] = nb;
    ct_c[c] = nc;
  });
  JointProbe probe;
  probe.n = n;
  for (std::int64_t c = 0; c < n_chunks; ++c) {
    probe.pass_base += base_c[c];
    probe.pass_ct += ct_c[c];
  }
  return probe;
}

} // namespace coincx
