#include "coincx/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace coincx {

namespace {

struct RawValue {
  std::string text;
  int line = 0;
};

using Section = std::map<std::string, RawValue>;
using RawConfig = std::map<std::string, Section>;

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

RawConfig tokenize(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("empty section name", line_no);
      raw[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value'", line_no);
    if (section.empty())
      throw ConfigError("key outside of any [section]", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    auto [it, fresh] = raw[section].emplace(key, RawValue{value, line_no});
    if (!fresh) throw ConfigError("duplicate key '" + section + "." + key + "'", line_no);
  }
  return raw;
}

class SectionReader {
public:
  SectionReader(RawConfig& raw, std::string name) : name_(std::move(name)) {
    auto it = raw.find(name_);
    if (it != raw.end()) section_ = &it->second;
  }

  void take_double(const char* key, double& out) {
    if (const RawValue* v = pop(key)) out = parse_double(v->text, v->line);
  }
  void take_int64(const char* key, std::int64_t& out) {
    if (const RawValue* v = pop(key)) out = parse_int(v->text, v->line);
  }
  void take_uint64(const char* key, std::uint64_t& out) {
    if (const RawValue* v = pop(key)) {
      const std::int64_t x = parse_int(v->text, v->line);
      if (x < 0) throw ConfigError(std::string(key) + " must be non-negative", v->line);
      out = static_cast<std::uint64_t>(x);
    }
  }
  void take_int(const char* key, int& out) {
    if (const RawValue* v = pop(key)) out = static_cast<int>(parse_int(v->text, v->line));
  }
  void take_bool(const char* key, bool& out) {
    if (const RawValue* v = pop(key)) {
      if (v->text == "true" || v->text == "1")
        out = true;
      else if (v->text == "false" || v->text == "0")
        out = false;
      else
        throw ConfigError(std::string(key) + " must be true or false", v->line);
    }
  }
  void take_string(const char* key, std::string& out) {
    if (const RawValue* v = pop(key)) out = v->text;
  }
  void take_enum(const char* key, std::string& out, std::initializer_list<const char*> allowed) {
    if (const RawValue* v = pop(key)) {
      for (const char* a : allowed) {
        if (v->text == a) {
          out = v->text;
          return;
        }
      }
      std::string opts;
      for (const char* a : allowed) opts += std::string(opts.empty() ? "" : ", ") + a;
      throw ConfigError(std::string(key) + " must be one of: " + opts, v->line);
    }
  }
  void take_optional_double(const char* key, std::optional<double>& out) {
    if (const RawValue* v = pop(key)) {
      if (v->text == "auto")
        out.reset();
      else
        out = parse_double(v->text, v->line);
    }
  }
  // "a..b" inclusive range or a comma-separated list of integers.
  void take_int_list(const char* key, std::vector<int>& out) {
    const RawValue* v = pop(key);
    if (!v) return;
    const std::string& s = v->text;
    const auto dots = s.find("..");
    std::vector<int> vals;
    if (dots != std::string::npos) {
      const int a = static_cast<int>(parse_int(trim(s.substr(0, dots)), v->line));
      const int b = static_cast<int>(parse_int(trim(s.substr(dots + 2)), v->line));
      if (b < a) throw ConfigError(std::string(key) + ": descending range", v->line);
      if (b - a > 1000) throw ConfigError(std::string(key) + ": range too wide", v->line);
      for (int i = a; i <= b; ++i) vals.push_back(i);
    } else {
      std::istringstream ss(s);
      std::string tok;
      while (std::getline(ss, tok, ','))
        vals.push_back(static_cast<int>(parse_int(trim(tok), v->line)));
    }
    if (vals.empty()) throw ConfigError(std::string(key) + ": empty list", v->line);
    out = std::move(vals);
  }

  void finish() const {
    if (!section_) return;
    for (const auto& [key, v] : *section_) {
      if (!consumed(key))
        throw ConfigError("unknown key '" + name_ + "." + key + "'", v.line);
    }
  }

private:
  const RawValue* pop(const char* key) {
    if (!section_) return nullptr;
    auto it = section_->find(key);
    if (it == section_->end()) return nullptr;
    consumed_.push_back(key);
    return &it->second;
  }
  bool consumed(const std::string& key) const {
    return std::find(consumed_.begin(), consumed_.end(), key) != consumed_.end();
  }
  static double parse_double(const std::string& s, int line) {
    try {
      std::size_t pos = 0;
      const double x = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing characters");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + s + "'", line);
    }
  }
  static std::int64_t parse_int(const std::string& s, int line) {
    std::int64_t x = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      // Accept exponent notation for large counts (e.g. 1e6).
      try {
        std::size_t pos = 0;
        const double d = std::stod(s, &pos);
        if (pos != s.size() || d != std::floor(d) || std::fabs(d) > 9.2e18)
          throw std::invalid_argument("not integral");
        return static_cast<std::int64_t>(d);
      } catch (const std::exception&) {
        throw ConfigError("not an integer: '" + s + "'", line);
      }
    }
    return x;
  }

  std::string name_;
  Section* section_ = nullptr;
  std::vector<std::string> consumed_;
};

const char* const kKnownSections[] = {"source",    "waveform",   "discriminator",
                                      "crosstalk", "montecarlo", "analysis", "io"};

} // namespace

RunConfig parse_config_string(const std::string& text) {
  RawConfig raw = tokenize(text);
  for (const auto& [name, sec] : raw) {
    bool known = false;
    for (const char* k : kKnownSections) known |= (name == k);
    if (!known) {
      const int line = sec.empty() ? 0 : sec.begin()->second.line;
      throw ConfigError("unknown section [" + name + "]", line);
    }
  }

  RunConfig cfg;

  {
    SectionReader r(raw, "source");
    r.take_double("lambda", cfg.source.lambda);
    r.take_double("tau0_ns", cfg.source.tau0_ns);
    r.take_double("eps_a", cfg.source.eps_a);
    r.take_double("eps_b", cfg.source.eps_b);
    r.take_int64("n_pulses", cfg.source.n_pulses);
    r.take_double("rate_per_s", cfg.source.rate_per_s);
    r.take_double("sigma_ns", cfg.source.sigma_ns);
    r.take_int_list("stop_peaks", cfg.source.stop_peaks);
    r.finish();
  }
  {
    SectionReader r(raw, "waveform");
    r.take_double("amplitude_v", cfg.waveform.amplitude_v);
    r.take_double("rise_ns", cfg.waveform.rise_ns);
    r.take_double("fall_ns", cfg.waveform.fall_ns);
    r.take_double("t_min_ns", cfg.waveform.t_min_ns);
    r.take_double("t_max_ns", cfg.waveform.t_max_ns);
    r.take_double("dt_ns", cfg.waveform.dt_ns);
    r.take_enum("ct_mode", cfg.waveform.ct_mode, {"inverted-copy", "derivative"});
    r.take_string("signal_a_csv", cfg.waveform.signal_a_csv);
    r.take_string("signal_b_csv", cfg.waveform.signal_b_csv);
    r.finish();
  }
  {
    SectionReader r(raw, "discriminator");
    r.take_double("v_th", cfg.discriminator.v_th);
    r.take_double("k_a", cfg.discriminator.k_a);
    r.take_double("k_b", cfg.discriminator.k_b);
    r.take_string("phd_a", cfg.discriminator.phd_a);
    r.take_string("phd_b", cfg.discriminator.phd_b);
    r.finish();
  }
  {
    SectionReader r(raw, "crosstalk");
    r.take_enum("variant", cfg.crosstalk.variant, {"anchored", "literal"});
    r.take_optional_double("f_a", cfg.crosstalk.f_a);
    r.take_optional_double("f_b", cfg.crosstalk.f_b);
    r.take_double("half_span_ns", cfg.crosstalk.half_span_ns);
    r.take_double("bin_ns", cfg.crosstalk.bin_ns);
    r.take_double("scale", cfg.crosstalk.scale);
    r.finish();
  }
  {
    SectionReader r(raw, "montecarlo");
    r.take_int64("events", cfg.montecarlo.events);
    r.take_uint64("seed", cfg.montecarlo.seed);
    r.take_enum("mode", cfg.montecarlo.mode, {"continuous", "pulsed"});
    r.take_double("tac_window_ns", cfg.montecarlo.tac_window_ns);
    r.take_double("bin_ns", cfg.montecarlo.bin_ns);
    r.take_enum("pairing", cfg.montecarlo.pairing, {"first-stop", "all-pairs"});
    r.take_int("threads", cfg.montecarlo.threads);
    r.take_bool("slow_waveform_path", cfg.montecarlo.slow_waveform_path);
    r.finish();
  }
  {
    SectionReader r(raw, "analysis");
    r.take_bool("weighted_fit", cfg.analysis.weighted_fit);
    r.take_double("background_fraction", cfg.analysis.background_fraction);
    r.finish();
  }
  {
    SectionReader r(raw, "io");
    r.take_string("out_dir", cfg.io.out_dir);
    r.finish();
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str());
}

namespace {

std::string fmt(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

std::string fmt_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

} // namespace

std::string dump_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[source]\n";
  o << "lambda = " << fmt(c.source.lambda) << "\n";
  o << "tau0_ns = " << fmt(c.source.tau0_ns) << "\n";
  o << "eps_a = " << fmt(c.source.eps_a) << "\n";
  o << "eps_b = " << fmt(c.source.eps_b) << "\n";
  o << "n_pulses = " << c.source.n_pulses << "\n";
  o << "rate_per_s = " << fmt(c.source.rate_per_s) << "\n";
  o << "sigma_ns = " << fmt(c.source.sigma_ns) << "\n";
  o << "stop_peaks = " << fmt_list(c.source.stop_peaks) << "\n";
  o << "\n[waveform]\n";
  o << "amplitude_v = " << fmt(c.waveform.amplitude_v) << "\n";
  o << "rise_ns = " << fmt(c.waveform.rise_ns) << "\n";
  o << "fall_ns = " << fmt(c.waveform.fall_ns) << "\n";
  o << "t_min_ns = " << fmt(c.waveform.t_min_ns) << "\n";
  o << "t_max_ns = " << fmt(c.waveform.t_max_ns) << "\n";
  o << "dt_ns = " << fmt(c.waveform.dt_ns) << "\n";
  o << "ct_mode = " << c.waveform.ct_mode << "\n";
  o << "signal_a_csv = " << c.waveform.signal_a_csv << "\n";
  o << "signal_b_csv = " << c.waveform.signal_b_csv << "\n";
  o << "\n[discriminator]\n";
  o << "v_th = " << fmt(c.discriminator.v_th) << "\n";
  o << "k_a = " << fmt(c.discriminator.k_a) << "\n";
  o << "k_b = " << fmt(c.discriminator.k_b) << "\n";
  o << "phd_a = " << c.discriminator.phd_a << "\n";
  o << "phd_b = " << c.discriminator.phd_b << "\n";
  o << "\n[crosstalk]\n";
  o << "variant = " << c.crosstalk.variant << "\n";
  o << "f_a = " << (c.crosstalk.f_a ? fmt(*c.crosstalk.f_a) : "auto") << "\n";
  o << "f_b = " << (c.crosstalk.f_b ? fmt(*c.crosstalk.f_b) : "auto") << "\n";
  o << "half_span_ns = " << fmt(c.crosstalk.half_span_ns) << "\n";
  o << "bin_ns = " << fmt(c.crosstalk.bin_ns) << "\n";
  o << "scale = " << fmt(c.crosstalk.scale) << "\n";
  o << "\n[montecarlo]\n";
  o << "events = " << c.montecarlo.events << "\n";
  o << "seed = " << c.montecarlo.seed << "\n";
  o << "mode = " << c.montecarlo.mode << "\n";
  o << "tac_window_ns = " << fmt(c.montecarlo.tac_window_ns) << "\n";
  o << "bin_ns = " << fmt(c.montecarlo.bin_ns) << "\n";
  o << "pairing = " << c.montecarlo.pairing << "\n";
  o << "threads = " << c.montecarlo.threads << "\n";
  o << "slow_waveform_path = " << (c.montecarlo.slow_waveform_path ? "true" : "false") << "\n";
  o << "\n[analysis]\n";
  o << "weighted_fit = " << (c.analysis.weighted_fit ? "true" : "false") << "\n";
  o << "background_fraction = " << fmt(c.analysis.background_fraction) << "\n";
  o << "\n[io]\n";
  o << "out_dir = " << c.io.out_dir << "\n";
  return o.str();
}

std::string config_hash(const RunConfig& cfg) {
  const std::string dump = dump_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PulseHeightDistribution make_phd(const std::string& desc) {
  const auto colon = desc.find(':');
  const std::string family = desc.substr(0, colon);
  std::vector<double> args;
  std::string tail = colon == std::string::npos ? "" : desc.substr(colon + 1);
  if (family == "csv") {
    if (tail.empty()) throw std::invalid_argument("phd: csv needs a path");
    return load_phd_csv(tail);
  }
  std::istringstream ss(tail);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      args.push_back(std::stod(trim(tok)));
    } catch (const std::exception&) {
      throw std::invalid_argument("phd: bad number '" + tok + "' in '" + desc + "'");
    }
  }
  auto need = [&](std::size_t n) {
    if (args.size() != n)
      throw std::invalid_argument("phd: '" + family + "' needs " + std::to_string(n) +
                                  " parameters in '" + desc + "'");
  };
  if (family == "uniform") {
    need(2);
    return PulseHeightDistribution::uniform(args[0], args[1]);
  }
  if (family == "tgauss") {
    need(4);
    return PulseHeightDistribution::truncated_gaussian(args[0], args[1], args[2], args[3]);
  }
  if (family == "gamma") {
    need(4);
    return PulseHeightDistribution::gamma(args[0], args[1], args[2], args[3]);
  }
  if (family == "delta") {
    need(1);
    return PulseHeightDistribution::point_mass(args[0]);
  }
  throw std::invalid_argument("phd: unknown family '" + family + "'");
}

SourceParams make_source_params(const RunConfig& cfg) {
  SourceParams p;
  p.lambda = cfg.source.lambda;
  p.tau0 = cfg.source.tau0_ns;
  p.eps_a = cfg.source.eps_a;
  p.eps_b = cfg.source.eps_b;
  p.n_pulses = cfg.source.n_pulses;
  p.rate_per_s = cfg.source.rate_per_s;
  p.validate();
  return p;
}

TemporalModel make_temporal_model(const RunConfig& cfg) {
  TemporalModel tm;
  tm.sigma = cfg.source.sigma_ns;
  tm.stop_peak_indices = cfg.source.stop_peaks;
  tm.validate();
  return tm;
}

namespace {

WaveformPair make_pair(const RunConfig& cfg, const std::string& csv, double k) {
  const CrosstalkMode mode = cfg.waveform.ct_mode == "derivative"
                                 ? CrosstalkMode::derivative
                                 : CrosstalkMode::inverted_copy;
  Trace signal;
  if (!csv.empty()) {
    signal = load_trace_csv(csv);
  } else {
    signal = synth_signal(
        cfg.waveform.amplitude_v, cfg.waveform.rise_ns, cfg.waveform.fall_ns,
        GridSpec::from_range(cfg.waveform.t_min_ns, cfg.waveform.t_max_ns,
                             cfg.waveform.dt_ns));
  }
  return make_waveform_pair(signal, k, mode);
}

} // namespace

WaveformPair make_pair_a(const RunConfig& cfg) {
  return make_pair(cfg, cfg.waveform.signal_a_csv, cfg.discriminator.k_a);
}

WaveformPair make_pair_b(const RunConfig& cfg) {
  return make_pair(cfg, cfg.waveform.signal_b_csv, cfg.discriminator.k_b);
}

MultiplierVariant make_variant(const RunConfig& cfg) {
  return cfg.crosstalk.variant == "literal" ? MultiplierVariant::literal
                                            : MultiplierVariant::anchored;
}

std::pair<double, double> resolve_loss_fractions(const RunConfig& cfg) {
  double f_a, f_b;
  if (cfg.crosstalk.f_a && cfg.crosstalk.f_b) {
    f_a = *cfg.crosstalk.f_a;
    f_b = *cfg.crosstalk.f_b;
  } else {
    const auto phd_a = make_phd(cfg.discriminator.phd_a);
    const auto phd_b = make_phd(cfg.discriminator.phd_b);
    // The start channel loses counts to the stop channel's coupling and
    // vice versa.
    f_a = cfg.crosstalk.f_a
              ? *cfg.crosstalk.f_a
              : loss_fraction(phd_a, phd_b, cfg.discriminator.k_b, cfg.discriminator.v_th);
    f_b = cfg.crosstalk.f_b
              ? *cfg.crosstalk.f_b
              : loss_fraction(phd_b, phd_a, cfg.discriminator.k_a, cfg.discriminator.v_th);
  }
  if (f_a < 0.0 || f_a >= 1.0 || f_b < 0.0 || f_b >= 1.0)
    throw std::invalid_argument("crosstalk: loss fractions must be in [0,1)");
  return {f_a, f_b};
}

McConfig make_mc_config(const RunConfig& cfg) {
  McConfig mc;
  mc.seed = cfg.montecarlo.seed;
  mc.n_events = cfg.montecarlo.events;
  mc.mode = cfg.montecarlo.mode == "pulsed" ? SourceMode::pulsed : SourceMode::continuous;
  mc.source = make_source_params(cfg);
  if (mc.mode == SourceMode::pulsed) mc.source.n_pulses = cfg.montecarlo.events;
  mc.temporal = make_temporal_model(cfg);
  mc.pair_a = make_pair_a(cfg);
  mc.pair_b = make_pair_b(cfg);
  mc.phd_a = make_phd(cfg.discriminator.phd_a);
  mc.phd_b = make_phd(cfg.discriminator.phd_b);
  mc.disc.v_th = cfg.discriminator.v_th;
  mc.disc.k_a = cfg.discriminator.k_a;
  mc.disc.k_b = cfg.discriminator.k_b;
  mc.disc.validate();
  mc.bin_ns = cfg.montecarlo.bin_ns;
  mc.tac_window_ns = cfg.montecarlo.tac_window_ns;
  mc.pairing = cfg.montecarlo.pairing == "all-pairs" ? PairingMode::all_pairs
                                                     : PairingMode::first_stop;
  mc.threads = cfg.montecarlo.threads;
  mc.slow_waveform_path = cfg.montecarlo.slow_waveform_path;
  return mc;
}

} // namespace coincx
