#include "coincx/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "coincx/math_util.hpp"

namespace coincx {

void DiscriminatorConfig::validate() const {
  if (v_th < 0.0) throw std::invalid_argument("discriminator: v_th must be >= 0");
  if (k_a < 0.0 || k_a > 0.5 || k_b < 0.0 || k_b > 0.5)
    throw std::invalid_argument("discriminator: coupling ratios must be in [0, 0.5]");
}

PulseHeightDistribution PulseHeightDistribution::uniform(double lo, double hi) {
  if (!(hi > lo)) throw std::invalid_argument("phd: uniform needs hi > lo");
  PulseHeightDistribution p;
  p.kind_ = Kind::uniform;
  p.lo_ = lo;
  p.hi_ = hi;
  return p;
}

PulseHeightDistribution PulseHeightDistribution::truncated_gaussian(double mu, double sigma,
                                                                    double lo, double hi) {
  if (sigma <= 0.0) throw std::invalid_argument("phd: gaussian sigma must be > 0");
  if (!(hi > lo)) throw std::invalid_argument("phd: gaussian needs hi > lo");
  PulseHeightDistribution p;
  p.kind_ = Kind::truncated_gaussian;
  p.lo_ = lo;
  p.hi_ = hi;
  p.p1_ = mu;
  p.p2_ = sigma;
  p.cdf_lo_ = norm_cdf(lo, mu, sigma);
  p.norm_ = norm_cdf(hi, mu, sigma) - p.cdf_lo_;
  if (p.norm_ <= 0.0) throw std::invalid_argument("phd: gaussian has no mass on [lo,hi]");
  return p;
}

PulseHeightDistribution PulseHeightDistribution::gamma(double shape, double scale,
                                                       double lo, double hi) {
  if (shape <= 0.0 || scale <= 0.0)
    throw std::invalid_argument("phd: gamma shape and scale must be > 0");
  if (!(hi > lo) || lo < 0.0) throw std::invalid_argument("phd: gamma needs 0 <= lo < hi");
  PulseHeightDistribution p;
  p.kind_ = Kind::gamma;
  p.lo_ = lo;
  p.hi_ = hi;
  p.p1_ = shape;
  p.p2_ = scale;
  p.cdf_lo_ = gamma_p(shape, lo / scale);
  p.norm_ = gamma_p(shape, hi / scale) - p.cdf_lo_;
  if (p.norm_ <= 0.0) throw std::invalid_argument("phd: gamma has no mass on [lo,hi]");
  return p;
}

PulseHeightDistribution PulseHeightDistribution::point_mass(double v0) {
  PulseHeightDistribution p;
  p.kind_ = Kind::point_mass;
  p.lo_ = v0;
  p.hi_ = v0;
  p.p1_ = v0;
  return p;
}

PulseHeightDistribution PulseHeightDistribution::empirical(std::vector<double> bin_edges,
                                                           std::vector<double> counts) {
  if (bin_edges.size() < 2 || counts.size() + 1 != bin_edges.size())
    throw std::invalid_argument("phd: empirical needs n+1 edges for n bins");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1]))
      throw std::invalid_argument("phd: empirical bin edges must be increasing");
  }
  double total = 0.0;
  for (double c : counts) {
    if (c < 0.0) throw std::invalid_argument("phd: empirical counts must be non-negative");
    total += c;
  }
  if (total <= 0.0) throw std::invalid_argument("phd: empirical counts sum to zero");

  PulseHeightDistribution p;
  p.kind_ = Kind::empirical;
  p.edges_ = std::move(bin_edges);
  p.lo_ = p.edges_.front();
  p.hi_ = p.edges_.back();
  p.dens_.resize(counts.size());
  p.cum_.resize(p.edges_.size());
  p.cum_[0] = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double w = p.edges_[i + 1] - p.edges_[i];
    p.dens_[i] = counts[i] / (total * w);
    p.cum_[i + 1] = p.cum_[i] + counts[i] / total;
  }
  p.cum_.back() = 1.0;
  return p;
}

double PulseHeightDistribution::density(double v) const {
  if (v < lo_ || v > hi_) return 0.0;
  switch (kind_) {
    case Kind::uniform:
      return 1.0 / (hi_ - lo_);
    case Kind::truncated_gaussian:
      return norm_pdf(v, p1_, p2_) / norm_;
    case Kind::gamma: {
      const double x = v / p2_;
      return std::exp((p1_ - 1.0) * std::log(x) - x - std::lgamma(p1_)) / (p2_ * norm_);
    }
    case Kind::point_mass:
      throw std::logic_error("phd: point mass has no density function");
    case Kind::empirical: {
      auto it = std::upper_bound(edges_.begin(), edges_.end(), v);
      std::size_t i = (it == edges_.begin()) ? 0 : static_cast<std::size_t>(it - edges_.begin()) - 1;
      if (i >= dens_.size()) i = dens_.size() - 1;
      return dens_[i];
    }
  }
  return 0.0;
}

double PulseHeightDistribution::cdf(double v) const {
  if (v < lo_) return 0.0;
  if (v >= hi_) return 1.0;
  switch (kind_) {
    case Kind::uniform:
      return (v - lo_) / (hi_ - lo_);
    case Kind::truncated_gaussian:
      return (norm_cdf(v, p1_, p2_) - cdf_lo_) / norm_;
    case Kind::gamma:
      return (gamma_p(p1_, v / p2_) - cdf_lo_) / norm_;
    case Kind::point_mass:
      return v < p1_ ? 0.0 : 1.0;
    case Kind::empirical: {
      auto it = std::upper_bound(edges_.begin(), edges_.end(), v);
      const std::size_t i = static_cast<std::size_t>(it - edges_.begin());
      if (i == 0) return 0.0;
      const std::size_t bin = std::min(i - 1, dens_.size() - 1);
      return cum_[bin] + dens_[bin] * (v - edges_[bin]);
    }
  }
  return 0.0;
}

double PulseHeightDistribution::quantile(double u) const {
  if (u < 0.0 || u > 1.0) throw std::invalid_argument("phd: quantile needs u in [0,1]");
  switch (kind_) {
    case Kind::uniform:
      return lo_ + u * (hi_ - lo_);
    case Kind::truncated_gaussian: {
      if (u <= 0.0) return lo_;
      if (u >= 1.0) return hi_;
      const double p = cdf_lo_ + u * norm_;
      return std::clamp(p1_ + p2_ * norm_quantile(p), lo_, hi_);
    }
    case Kind::gamma: {
      // Bisection on the cdf; smooth and monotone on [lo, hi].
      double a = lo_, b = hi_;
      for (int i = 0; i < 200; ++i) {
        const double m = 0.5 * (a + b);
        if (cdf(m) < u)
          a = m;
        else
          b = m;
        if (b - a < 1e-14 * (hi_ - lo_ + 1.0)) break;
      }
      return 0.5 * (a + b);
    }
    case Kind::point_mass:
      return p1_;
    case Kind::empirical: {
      auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
      std::size_t i = (it == cum_.begin()) ? 0 : static_cast<std::size_t>(it - cum_.begin()) - 1;
      while (i + 1 < cum_.size() && cum_[i + 1] <= cum_[i]) ++i;  // skip empty bins
      if (i >= dens_.size()) i = dens_.size() - 1;
      const double span = cum_[i + 1] - cum_[i];
      const double f = span > 0.0 ? (u - cum_[i]) / span : 0.0;
      return edges_[i] + f * (edges_[i + 1] - edges_[i]);
    }
  }
  return lo_;
}

std::vector<double> PulseHeightDistribution::breakpoints() const {
  if (kind_ == Kind::empirical)
    return std::vector<double>(edges_.begin() + 1, edges_.end() - 1);
  return {};
}

std::string PulseHeightDistribution::describe() const {
  char buf[128];
  switch (kind_) {
    case Kind::uniform:
      std::snprintf(buf, sizeof(buf), "uniform:%g,%g", lo_, hi_);
      break;
    case Kind::truncated_gaussian:
      std::snprintf(buf, sizeof(buf), "tgauss:%g,%g,%g,%g", p1_, p2_, lo_, hi_);
      break;
    case Kind::gamma:
      std::snprintf(buf, sizeof(buf), "gamma:%g,%g,%g,%g", p1_, p2_, lo_, hi_);
      break;
    case Kind::point_mass:
      std::snprintf(buf, sizeof(buf), "delta:%g", p1_);
      break;
    case Kind::empirical:
      std::snprintf(buf, sizeof(buf), "empirical:%zu bins on [%g,%g]", dens_.size(), lo_, hi_);
      break;
  }
  return buf;
}

double accepted_fraction(const PulseHeightDistribution& phd, double v_th,
                         bool* above_support) {
  if (above_support) *above_support = false;
  if (v_th > phd.v_max()) {
    if (above_support) *above_support = true;
    return 0.0;
  }
  if (phd.kind() == PulseHeightDistribution::Kind::point_mass)
    return v_th <= phd.v_max() ? 1.0 : 0.0;
  return phd.survival(v_th);
}

double accepted_fraction_with_crosstalk(const PulseHeightDistribution& phd_self,
                                        const PulseHeightDistribution& phd_other,
                                        double k_other, double v_th) {
  if (k_other < 0.0)
    throw std::invalid_argument("accepted_fraction_with_crosstalk: k must be >= 0");
  if (k_other == 0.0) return accepted_fraction(phd_self, v_th);

  const double partner_pass = accepted_fraction(phd_other, v_th);
  if (partner_pass <= 0.0)
    throw std::invalid_argument(
        "accepted_fraction_with_crosstalk: partner channel has no pulses above threshold");

  if (phd_other.kind() == PulseHeightDistribution::Kind::point_mass)
    return accepted_fraction(phd_self, v_th + k_other * phd_other.v_max());

  const double a = std::max(v_th, phd_other.v_min());
  const double b = phd_other.v_max();
  if (!(b > a)) {
    // All partner mass sits at the top edge; treat as a point evaluation.
    return accepted_fraction(phd_self, v_th + k_other * b);
  }

  // Integrand: density_other(v) * survival_self(v_th + k v). The inner
  // integral of the shifted self density has the exact closed form via the
  // survival function, so only the outer average is numeric.
  auto f = [&](double v) {
    return phd_other.density(v) * phd_self.survival(v_th + k_other * v);
  };

  // Split at density kinks of the partner and at partner heights that map
  // onto kinks of the self distribution.
  std::vector<double> pts{a, b};
  for (double e : phd_other.breakpoints())
    if (e > a && e < b) pts.push_back(e);
  std::vector<double> self_kinks = phd_self.breakpoints();
  self_kinks.push_back(phd_self.v_min());
  self_kinks.push_back(phd_self.v_max());
  for (double e : self_kinks) {
    const double v = (e - v_th) / k_other;
    if (v > a && v < b) pts.push_back(v);
  }
  std::sort(pts.begin(), pts.end());

  double numer = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (pts[i + 1] - pts[i] < 1e-300) continue;
    numer += integrate_adaptive(f, pts[i], pts[i + 1], 1e-10);
  }
  return numer / partner_pass;
}

double loss_fraction(const PulseHeightDistribution& phd_self,
                     const PulseHeightDistribution& phd_other, double k_other,
                     double v_th) {
  const double p = accepted_fraction(phd_self, v_th);
  if (p <= 0.0)
    throw std::invalid_argument("loss_fraction: threshold removes all self counts");
  if (k_other == 0.0) return 0.0;
  const double p_ct = accepted_fraction_with_crosstalk(phd_self, phd_other, k_other, v_th);
  return std::clamp((p - p_ct) / p, 0.0, 1.0);
}

std::vector<std::pair<double, double>> threshold_sweep(
    const PulseHeightDistribution& phd_self,
    const PulseHeightDistribution& phd_other, double k_other, double v_lo,
    double v_hi, int steps) {
  if (steps < 1) throw std::invalid_argument("threshold_sweep: steps must be >= 1");
  if (!(v_hi >= v_lo)) throw std::invalid_argument("threshold_sweep: need v_hi >= v_lo");
  if (accepted_fraction(phd_self, v_hi) <= 0.0 ||
      accepted_fraction(phd_other, v_hi) <= 0.0)
    throw std::invalid_argument("threshold_sweep: range extends beyond the distribution support");

  std::vector<std::pair<double, double>> out;
  out.reserve(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    const double v = steps == 0 ? v_lo : v_lo + (v_hi - v_lo) * i / steps;
    out.emplace_back(v, loss_fraction(phd_self, phd_other, k_other, v));
  }
  return out;
}

PulseHeightDistribution load_phd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_phd_csv: cannot open " + path);

  std::string line;
  bool got_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') {
      got_header = true;
      break;
    }
  }
  if (!got_header) throw std::runtime_error("load_phd_csv: empty file " + path);
  if (line.find("bin_left_V") == std::string::npos)
    throw std::runtime_error("load_phd_csv: missing 'bin_left_V,bin_right_V,counts' header in " + path);

  std::vector<double> edges, counts;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double l, r, c;
    char c1, c2;
    if (!(ss >> l >> c1 >> r >> c2 >> c) || c1 != ',' || c2 != ',')
      throw std::runtime_error("load_phd_csv: malformed row " + std::to_string(row) + " in " + path);
    if (c < 0.0)
      throw std::runtime_error("load_phd_csv: negative count at row " + std::to_string(row));
    if (!(r > l))
      throw std::runtime_error("load_phd_csv: decreasing bin at row " + std::to_string(row));
    if (edges.empty()) {
      edges.push_back(l);
    } else if (std::fabs(l - edges.back()) > 1e-9) {
      throw std::runtime_error(
          edges.back() > l
              ? "load_phd_csv: overlapping bins at row " + std::to_string(row)
              : "load_phd_csv: gap between bins at row " + std::to_string(row));
    }
    edges.push_back(r);
    counts.push_back(c);
  }
  if (counts.empty()) throw std::runtime_error("load_phd_csv: no bins in " + path);
  return PulseHeightDistribution::empirical(std::move(edges), std::move(counts));
}

void save_phd_csv(const PulseHeightDistribution& phd, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_phd_csv: cannot write " + path);
  out << "bin_left_V,bin_right_V,counts\n";
  char buf[96];
  if (phd.kind() == PulseHeightDistribution::Kind::empirical) {
    // Write normalized bin masses; shape is what matters.
    std::vector<double> bp = phd.breakpoints();
    std::vector<double> edges;
    edges.push_back(phd.v_min());
    edges.insert(edges.end(), bp.begin(), bp.end());
    edges.push_back(phd.v_max());
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      const double mass = phd.cdf(edges[i + 1]) - phd.cdf(edges[i]);
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", edges[i], edges[i + 1], mass);
      out << buf;
    }
    return;
  }
  // Parametric families are sampled onto a fine histogram.
  const int n = 512;
  const double w = (phd.v_max() - phd.v_min()) / n;
  for (int i = 0; i < n; ++i) {
    const double l = phd.v_min() + i * w;
    const double r = l + w;
    const double mass = phd.cdf(r) - phd.cdf(l);
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", l, r, mass);
    out << buf;
  }
}

} // namespace coincx
