#pragma once

// Small numerical helpers shared across modules: quadrature, the normal
// distribution, the regularized incomplete gamma function, and tail
// probabilities for the chi-square and Kolmogorov statistics.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace coincx {

inline double norm_pdf(double x, double mu = 0.0, double sigma = 1.0) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

inline double norm_cdf(double x, double mu = 0.0, double sigma = 1.0) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

// Acklam's rational approximation refined with one Halley step.
double norm_quantile(double p);

// Regularized lower incomplete gamma P(a,x); Q(a,x) = 1 - P(a,x).
double gamma_p(double a, double x);
inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

// Survival function of the chi-square distribution with k dof.
inline double chi2_sf(double x, double k) { return gamma_q(0.5 * k, 0.5 * x); }

// Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
double kolmogorov_sf(double lambda);

// Adaptive Simpson quadrature with absolute tolerance.
double integrate_adaptive(const std::function<double(double)>& f, double a,
                          double b, double tol, int max_depth = 40);

// Composite trapezoid rule on n+1 equally spaced nodes.
double trapezoid(const std::function<double(double)>& f, double a, double b,
                 int n);

} // namespace coincx
