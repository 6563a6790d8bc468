#include "coincx/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coincx {

namespace {

// Gaussian-plus-flat-background least squares, damped Gauss-Newton with a
// multiplicative damping schedule (1e-3 start, x10 on a rejected step, /10
// on an accepted one). Parameter order: A, c, s, B; the model is
// y = B + sign * A * exp(-(x-c)^2 / 2 s^2).
struct GaussFit {
  Eigen::ArrayXd x, y, w;
  double sign = -1.0;

  Eigen::ArrayXd model(const Eigen::Vector4d& p) const {
    const Eigen::ArrayXd z = (x - p[1]) / p[2];
    return p[3] + sign * p[0] * (-0.5 * z * z).exp();
  }

  double sse(const Eigen::Vector4d& p) const {
    return ((model(p) - y) * w).square().sum();
  }

  void jacobian(const Eigen::Vector4d& p, Eigen::MatrixXd& J) const {
    const Eigen::ArrayXd z = (x - p[1]) / p[2];
    const Eigen::ArrayXd e = (-0.5 * z * z).exp();
    J.col(0) = (sign * e * w).matrix();
    J.col(1) = (sign * p[0] * e * z / p[2] * w).matrix();
    J.col(2) = (sign * p[0] * e * z * z / p[2] * w).matrix();
    J.col(3) = w.matrix();
  }
};

FitResult run_fit(GaussFit& fit, Eigen::Vector4d p) {
  FitResult res;
  const int n = static_cast<int>(fit.x.size());
  Eigen::MatrixXd J(n, 4);
  double lambda = 1e-3;
  double sse = fit.sse(p);
  bool converged = false;
  int iter = 0;

  for (; iter < 200; ++iter) {
    p[2] = std::fabs(p[2]);
    fit.jacobian(p, J);
    const Eigen::ArrayXd r = (fit.model(p) - fit.y) * fit.w;
    const Eigen::Matrix4d jtj = J.transpose() * J;
    const Eigen::Vector4d g = J.transpose() * r.matrix();

    bool stepped = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::Matrix4d damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal();
      const Eigen::Vector4d delta = damped.ldlt().solve(-g);
      const Eigen::Vector4d cand = p + delta;
      if (!cand.allFinite() || cand[2] == 0.0) {
        lambda *= 10.0;
        continue;
      }
      const double cand_sse = fit.sse(cand);
      if (cand_sse <= sse) {
        double rel = 0.0;
        for (int i = 0; i < 4; ++i)
          rel = std::max(rel, std::fabs(delta[i]) / (std::fabs(p[i]) + 1e-30));
        p = cand;
        sse = cand_sse;
        lambda = std::max(lambda / 10.0, 1e-14);
        stepped = true;
        if (rel < 1e-8) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (converged || !stepped) {
      if (!stepped && !converged) converged = (lambda > 1e10);  // stuck at a flat minimum
      break;
    }
  }

  p[2] = std::fabs(p[2]);
  res.amplitude = p[0];
  res.center = p[1];
  res.sigma = p[2];
  res.background = p[3];
  res.iterations = iter + 1;
  res.converged = converged;
  res.status = converged ? FitResult::Status::ok : FitResult::Status::not_converged;

  // Covariance from the Jacobian at the optimum, scaled by the residual RMS.
  fit.jacobian(p, J);
  const Eigen::ArrayXd r = (fit.model(p) - fit.y) * fit.w;
  const int dof = std::max(1, n - 4);
  const double s2 = r.square().sum() / dof;
  res.residual_rms = std::sqrt(r.square().sum() / n);
  const Eigen::Matrix4d jtj = J.transpose() * J;
  const Eigen::Matrix4d cov = s2 * jtj.ldlt().solve(Eigen::Matrix4d::Identity());
  res.covariance = cov;
  res.amplitude_err = std::sqrt(std::max(0.0, cov(0, 0)));
  res.center_err = std::sqrt(std::max(0.0, cov(1, 1)));
  res.sigma_err = std::sqrt(std::max(0.0, cov(2, 2)));
  res.background_err = std::sqrt(std::max(0.0, cov(3, 3)));

  if (res.converged && res.amplitude <= 0.0) res.status = FitResult::Status::no_dip;
  return res;
}

Eigen::ArrayXd weights_for(const CoincidenceSpectrum& spec, bool weighted) {
  if (weighted && spec.errors.size() == spec.grid.n) {
    Eigen::ArrayXd w(spec.grid.n);
    for (int i = 0; i < spec.grid.n; ++i)
      w[i] = 1.0 / std::max(spec.errors[i], 1.0);
    return w;
  }
  return Eigen::ArrayXd::Ones(spec.grid.n);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

} // namespace

double FitResult::depth_err() const {
  if (background == 0.0) return 0.0;
  const double a = amplitude, b = background;
  const double var = covariance(0, 0) / (b * b) +
                     covariance(3, 3) * a * a / (b * b * b * b) -
                     2.0 * covariance(0, 3) * a / (b * b * b);
  return std::sqrt(std::max(0.0, var));
}

std::string FitResult::summary() const {
  std::ostringstream out;
  const char* st = status == Status::ok ? "ok"
                   : status == Status::no_dip ? "no_dip"
                                              : "not_converged";
  out << "status: " << st << "\n";
  out << "amplitude: " << amplitude << " +- " << amplitude_err << "\n";
  out << "center_ns: " << center << " +- " << center_err << "\n";
  out << "sigma_ns: " << sigma << " +- " << sigma_err << "\n";
  out << "background: " << background << " +- " << background_err << "\n";
  out << "depth: " << depth() << " +- " << depth_err() << "\n";
  out << "residual_rms: " << residual_rms << "\n";
  out << "iterations: " << iterations << "\n";
  return out.str();
}

FitResult fit_gaussian_dip(const CoincidenceSpectrum& spec, bool weighted) {
  spec.check();
  const int n = spec.grid.n;
  if (n < 8) throw std::invalid_argument("fit_gaussian_dip: too few bins");

  GaussFit fit;
  fit.x = spec.grid.centers();
  fit.y = spec.values;
  fit.w = weights_for(spec, weighted);
  fit.sign = -1.0;

  // Background from the outer quartiles, center from the minimum, width
  // from the half-depth crossings.
  std::vector<double> outer;
  const int q = std::max(1, n / 4);
  for (int i = 0; i < q; ++i) {
    outer.push_back(spec.values[i]);
    outer.push_back(spec.values[n - 1 - i]);
  }
  const double b0 = median(outer);
  int imin = 0;
  const double ymin = spec.values.minCoeff(&imin);
  const double a0 = b0 - ymin;
  const double c0 = spec.grid.center(imin);

  if (!(a0 > 0.0) || a0 <= 1e-14 * std::fabs(b0)) {
    FitResult res;
    res.amplitude = 0.0;
    res.background = b0;
    res.center = c0;
    res.sigma = spec.grid.bin;
    res.converged = true;
    res.status = FitResult::Status::no_dip;
    return res;
  }

  const double half = b0 - 0.5 * a0;
  int l = imin, r = imin;
  while (l > 0 && spec.values[l] < half) --l;
  while (r < n - 1 && spec.values[r] < half) ++r;
  double s0 = 0.5 * (spec.grid.center(r) - spec.grid.center(l)) / 1.1774;
  if (!(s0 > 0.0)) s0 = 2.0 * spec.grid.bin;

  return run_fit(fit, Eigen::Vector4d(a0, c0, s0, b0));
}

std::vector<FitResult> fit_peaks(const CoincidenceSpectrum& spec,
                                 const std::vector<double>& expected_centers,
                                 double half_window, bool weighted) {
  spec.check();
  if (expected_centers.empty())
    throw std::invalid_argument("fit_peaks: no expected centers");
  if (half_window <= 0.0) throw std::invalid_argument("fit_peaks: half_window must be > 0");

  std::vector<double> sorted = expected_centers;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    if (sorted[i] + half_window > sorted[i + 1] - half_window)
      throw std::invalid_argument("fit_peaks: fit windows overlap");
  }

  const Eigen::ArrayXd w_all = weights_for(spec, weighted);
  std::vector<FitResult> out;
  out.reserve(expected_centers.size());
  for (double c : expected_centers) {
    std::vector<double> xs, ys, ws;
    for (int i = 0; i < spec.grid.n; ++i) {
      const double t = spec.grid.center(i);
      if (t >= c - half_window && t <= c + half_window) {
        xs.push_back(t);
        ys.push_back(spec.values[i]);
        ws.push_back(w_all[i]);
      }
    }
    if (xs.size() < 8)
      throw std::invalid_argument("fit_peaks: empty or near-empty window around " +
                                  std::to_string(c) + " ns");

    GaussFit fit;
    const int m = static_cast<int>(xs.size());
    fit.x = Eigen::Map<Eigen::ArrayXd>(xs.data(), m);
    fit.y = Eigen::Map<Eigen::ArrayXd>(ys.data(), m);
    fit.w = Eigen::Map<Eigen::ArrayXd>(ws.data(), m);
    fit.sign = +1.0;

    std::vector<double> outer;
    const int q = std::max(1, m / 4);
    for (int i = 0; i < q; ++i) {
      outer.push_back(fit.y[i]);
      outer.push_back(fit.y[m - 1 - i]);
    }
    const double b0 = median(outer);
    int imax = 0;
    const double ymax = fit.y.maxCoeff(&imax);
    const double a0 = std::max(ymax - b0, 1e-12 * (std::fabs(ymax) + 1.0));
    const double c0 = fit.x[imax];
    const double half = b0 + 0.5 * a0;
    int l = imax, r = imax;
    while (l > 0 && fit.y[l] > half) --l;
    while (r < m - 1 && fit.y[r] > half) ++r;
    double s0 = 0.5 * (fit.x[r] - fit.x[l]) / 1.1774;
    if (!(s0 > 0.0)) s0 = 2.0 * spec.grid.bin;

    out.push_back(run_fit(fit, Eigen::Vector4d(a0, c0, s0, b0)));
  }
  return out;
}

double CorrectionReference::value(double tau) const {
  const double z = (tau - center) / sigma;
  return 1.0 - depth * std::exp(-0.5 * z * z);
}

CorrectionReference build_reference(const FitResult& dip_fit) {
  if (!dip_fit.converged)
    throw std::invalid_argument("build_reference: dip fit did not converge");
  CorrectionReference ref;
  ref.depth = std::max(0.0, dip_fit.depth());
  if (ref.depth >= 1.0)
    throw std::invalid_argument("build_reference: fitted depth reaches 100%");
  ref.center = dip_fit.center;
  ref.sigma = dip_fit.sigma > 0.0 ? dip_fit.sigma : 1.0;
  ref.depth_err = dip_fit.depth_err();
  ref.provenance = "gaussian dip fit";
  return ref;
}

CoincidenceSpectrum apply_correction(const CoincidenceSpectrum& spec,
                                     const CorrectionReference& ref) {
  spec.check();
  CoincidenceSpectrum out = spec;
  for (int i = 0; i < spec.grid.n; ++i) {
    const double d = ref.value(spec.grid.center(i));
    if (d <= 0.0)
      throw std::invalid_argument("apply_correction: reference profile is not positive");
    out.values[i] = spec.values[i] / d;
    if (out.errors.size() == spec.grid.n) out.errors[i] = spec.errors[i] / d;
  }
  out.meta.extra["corrected_with"] = ref.provenance;
  return out;
}

double SampledReference::value(double tau) const {
  const int n = grid.n;
  if (n == 0) return 1.0;
  const double x = (tau - grid.tau_min) / grid.bin;
  if (x <= 0.0) return values[0];
  if (x >= n - 1) return values[n - 1];
  const int i = static_cast<int>(x);
  const double f = x - i;
  return values[i] * (1.0 - f) + values[i + 1] * f;
}

SampledReference sample_reference(const CorrectionReference& ref, const TauGrid& grid) {
  SampledReference s;
  s.grid = grid;
  s.values.resize(grid.n);
  for (int i = 0; i < grid.n; ++i) s.values[i] = ref.value(grid.center(i));
  return s;
}

SampledReference reference_from_spectrum(const CoincidenceSpectrum& spec,
                                         double background_fraction) {
  spec.check();
  const int n = spec.grid.n;
  const int edge = static_cast<int>(background_fraction * n);
  if (edge < 2)
    throw std::invalid_argument("reference_from_spectrum: no background region");
  double bg = 0.0;
  for (int i = 0; i < edge; ++i) bg += spec.values[i] + spec.values[n - 1 - i];
  bg /= 2.0 * edge;
  if (bg <= 0.0) throw std::invalid_argument("reference_from_spectrum: empty background");
  SampledReference s;
  s.grid = spec.grid;
  s.values = spec.values / bg;
  return s;
}

CoincidenceSpectrum apply_correction(const CoincidenceSpectrum& spec,
                                     const SampledReference& ref) {
  spec.check();
  CoincidenceSpectrum out = spec;
  for (int i = 0; i < spec.grid.n; ++i) {
    const double d = ref.value(spec.grid.center(i));
    if (d <= 0.0)
      throw std::invalid_argument("apply_correction: reference profile is not positive");
    out.values[i] = spec.values[i] / d;
    if (out.errors.size() == spec.grid.n) out.errors[i] = spec.errors[i] / d;
  }
  out.meta.extra["corrected_with"] = "sampled reference";
  return out;
}

void save_reference_csv(const SampledReference& ref, const std::string& path,
                        const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_reference_csv: cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "tau_ns,dhat\n";
  char buf[80];
  for (int i = 0; i < ref.grid.n; ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", ref.grid.center(i), ref.values[i]);
    out << buf;
  }
}

SampledReference load_reference_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_reference_csv: cannot open " + path);
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
  if (!got_header) throw std::runtime_error("load_reference_csv: empty file " + path);
  if (line.find("tau_ns") == std::string::npos || line.find("dhat") == std::string::npos)
    throw std::runtime_error("load_reference_csv: missing 'tau_ns,dhat' header in " + path);

  std::vector<double> taus, vals;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, v;
    char comma;
    if (!(ss >> t >> comma >> v) || comma != ',')
      throw std::runtime_error("load_reference_csv: malformed row " + std::to_string(row) +
                               " in " + path);
    taus.push_back(t);
    vals.push_back(v);
  }
  if (taus.size() < 2) throw std::runtime_error("load_reference_csv: too few rows in " + path);
  const double bin = taus[1] - taus[0];
  if (bin <= 0.0) throw std::runtime_error("load_reference_csv: non-increasing tau column");
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (std::fabs(taus[i] - taus[i - 1] - bin) > 1e-6)
      throw std::runtime_error("load_reference_csv: non-uniform tau column");

  SampledReference s;
  s.grid.tau_min = taus[0];
  s.grid.bin = bin;
  s.grid.n = static_cast<int>(taus.size());
  s.values = Eigen::Map<Eigen::ArrayXd>(vals.data(), s.grid.n);
  return s;
}

} // namespace coincx
