#include "coincx/source.hpp"

#include <cmath>
#include <stdexcept>

#include "coincx/math_util.hpp"

namespace coincx {

void SourceParams::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("source: lambda must be >= 0");
  if (tau0 <= 0.0) throw std::invalid_argument("source: tau0 must be > 0");
  if (!(eps_a > 0.0 && eps_a <= 1.0) || !(eps_b > 0.0 && eps_b <= 1.0))
    throw std::invalid_argument("source: efficiencies must be in (0,1]");
  if (eps_a + eps_b > 1.0)
    throw std::invalid_argument("source: eps_a + eps_b must not exceed 1");
  if (n_pulses < 1) throw std::invalid_argument("source: n_pulses must be >= 1");
  if (rate_per_s <= 0.0) throw std::invalid_argument("source: rate must be > 0");
}

void TemporalModel::validate() const {
  if (sigma <= 0.0) throw std::invalid_argument("temporal: sigma must be > 0");
  if (stop_peak_indices.empty())
    throw std::invalid_argument("temporal: stop_peak_indices must not be empty");
}

double poisson_pmf(double lambda, std::int64_t m) {
  if (lambda < 0.0) throw std::invalid_argument("poisson_pmf: lambda must be >= 0");
  if (m < 0) throw std::invalid_argument("poisson_pmf: m must be >= 0");
  if (lambda == 0.0) return m == 0 ? 1.0 : 0.0;
  if (m <= 20) {
    double fact = 1.0;
    for (std::int64_t i = 2; i <= m; ++i) fact *= static_cast<double>(i);
    return std::pow(lambda, static_cast<double>(m)) * std::exp(-lambda) / fact;
  }
  const double md = static_cast<double>(m);
  return std::exp(md * std::log(lambda) - lambda - std::lgamma(md + 1.0));
}

double peak_counts(const SourceParams& p, std::int64_t n) {
  p.validate();
  if (n < 1) throw std::invalid_argument("peak_counts: n must be >= 1");
  if (n >= p.n_pulses)
    throw std::invalid_argument("peak_counts: n must be smaller than n_pulses");
  const double trig = 1.0 - std::exp(-p.lambda);
  const double depletion = std::exp(-static_cast<double>(n - 1) * p.eps_b * p.lambda);
  return p.eps_a * p.eps_b * trig * trig * depletion *
         static_cast<double>(p.n_pulses - n);
}

double central_peak_counts(const SourceParams& p) {
  p.validate();
  return p.eps_a * p.eps_b * p.lambda * p.lambda * static_cast<double>(p.n_pulses);
}

double trigger_density(const TemporalModel& m, Detector det, double t,
                       double tau0, SourceMode mode) {
  m.validate();
  if (mode == SourceMode::continuous) return 1.0;
  if (det == Detector::start) return norm_pdf(t, 0.0, m.sigma);
  double sum = 0.0;
  for (int i : m.stop_peak_indices) sum += norm_pdf(t, i * tau0, m.sigma);
  return sum;
}

} // namespace coincx
