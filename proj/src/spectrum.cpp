#include "coincx/spectrum.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace coincx {

using nlohmann::json;

Eigen::ArrayXd TauGrid::centers() const {
  return tau_min + bin * Eigen::ArrayXd::LinSpaced(n, 0.0, n - 1.0);
}

int TauGrid::index_of(double tau) const {
  const int i = static_cast<int>(std::lround((tau - tau_min) / bin));
  return (i >= 0 && i < n) ? i : -1;
}

TauGrid TauGrid::symmetric(double half_span, double bin) {
  if (bin <= 0.0 || half_span <= 0.0)
    throw std::invalid_argument("TauGrid: half_span and bin must be positive");
  const int m = static_cast<int>(std::round(half_span / bin));
  TauGrid g;
  g.bin = bin;
  g.n = 2 * m + 1;
  g.tau_min = -m * bin;
  return g;
}

bool TauGrid::operator==(const TauGrid& o) const {
  return n == o.n && std::fabs(tau_min - o.tau_min) < 1e-12 &&
         std::fabs(bin - o.bin) < 1e-12;
}

double CoincidenceSpectrum::value_at(double tau) const {
  const int i = grid.index_of(tau);
  if (i < 0) throw std::out_of_range("spectrum: tau outside the grid");
  return values[i];
}

void CoincidenceSpectrum::check() const {
  if (grid.n <= 0 || values.size() != grid.n)
    throw std::invalid_argument("spectrum: value array does not match the grid");
  if (errors.size() != 0 && errors.size() != grid.n)
    throw std::invalid_argument("spectrum: error array does not match the grid");
  if ((values < 0.0).any())
    throw std::invalid_argument("spectrum: negative bin value");
}

namespace {

std::string sidecar_path(const std::string& path) {
  const auto dot = path.rfind(".csv");
  const std::string stem = (dot != std::string::npos && dot == path.size() - 4)
                               ? path.substr(0, dot)
                               : path;
  return stem + ".meta.json";
}

std::string mode_name(SourceMode m) {
  return m == SourceMode::continuous ? "continuous" : "pulsed";
}

} // namespace

void save_spectrum_csv(const CoincidenceSpectrum& s, const std::string& path,
                       const std::string& header_comment) {
  s.check();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_spectrum_csv: cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "tau_ns,value\n";
  char buf[80];
  for (int i = 0; i < s.grid.n; ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", s.grid.center(i), s.values[i]);
    out << buf;
  }
  out.close();

  json j;
  j["mode"] = mode_name(s.meta.mode);
  j["variant"] = s.meta.variant;
  j["tau0_ns"] = s.meta.tau0;
  j["peak_indices"] = s.meta.peak_indices;
  j["value_kind"] = s.meta.value_kind;
  j["bin_ns"] = s.grid.bin;
  j["tau_min_ns"] = s.grid.tau_min;
  j["n_bins"] = s.grid.n;
  j["has_errors"] = s.errors.size() != 0;
  if (s.errors.size() != 0) {
    std::vector<double> e(s.errors.data(), s.errors.data() + s.errors.size());
    j["errors"] = e;
  }
  for (const auto& [k, v] : s.meta.extra) j["extra"][k] = v;
  std::ofstream meta(sidecar_path(path));
  if (!meta) throw std::runtime_error("save_spectrum_csv: cannot write sidecar for " + path);
  meta << j.dump(2) << "\n";
}

CoincidenceSpectrum load_spectrum_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_spectrum_csv: cannot open " + path);

  std::string line;
  bool got_header = false;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line[0] != '#') {
      got_header = true;
      break;
    }
  }
  if (!got_header) throw std::runtime_error("load_spectrum_csv: empty file " + path);
  if (line.find("tau_ns") == std::string::npos)
    throw std::runtime_error("load_spectrum_csv: missing 'tau_ns,value' header in " + path);

  std::vector<double> taus, vals;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, v;
    char comma;
    if (!(ss >> t >> comma >> v) || comma != ',')
      throw std::runtime_error("load_spectrum_csv: malformed row " + std::to_string(row) +
                               " in " + path);
    taus.push_back(t);
    vals.push_back(v);
  }
  if (taus.size() < 2) throw std::runtime_error("load_spectrum_csv: too few bins in " + path);

  const double bin = taus[1] - taus[0];
  if (bin <= 0.0) throw std::runtime_error("load_spectrum_csv: non-increasing tau column in " + path);
  for (std::size_t i = 1; i < taus.size(); ++i) {
    if (std::fabs(taus[i] - taus[i - 1] - bin) > 1e-6)
      throw std::runtime_error("load_spectrum_csv: non-uniform tau column in " + path);
  }

  CoincidenceSpectrum s;
  s.grid.tau_min = taus[0];
  s.grid.bin = bin;
  s.grid.n = static_cast<int>(taus.size());
  s.values = Eigen::Map<Eigen::ArrayXd>(vals.data(), static_cast<int>(vals.size()));

  std::ifstream meta(sidecar_path(path));
  if (meta) {
    json j;
    try {
      meta >> j;
      s.meta.mode = j.value("mode", "continuous") == "pulsed" ? SourceMode::pulsed
                                                              : SourceMode::continuous;
      s.meta.variant = j.value("variant", "");
      s.meta.tau0 = j.value("tau0_ns", 0.0);
      s.meta.peak_indices = j.value("peak_indices", std::vector<int>{});
      s.meta.value_kind = j.value("value_kind", "");
      if (j.contains("errors")) {
        const auto e = j["errors"].get<std::vector<double>>();
        if (static_cast<int>(e.size()) == s.grid.n)
          s.errors = Eigen::Map<const Eigen::ArrayXd>(e.data(), s.grid.n);
      }
      if (j.contains("extra")) {
        for (const auto& [k, v] : j["extra"].items())
          s.meta.extra[k] = v.get<std::string>();
      }
    } catch (const json::exception&) {
      // A damaged sidecar degrades to bare-CSV semantics.
    }
  }
  return s;
}

} // namespace coincx
