#pragma once

// Scalar special functions: Gaussian tails and quantiles, regularized
// incomplete gamma, chi and chi-square densities.

namespace xkit {

inline constexpr double kPi = 3.14159265358979323846264338327950288;
inline constexpr double kSqrt2Pi = 2.50662827463100050241576528481104525;

/// Standard normal density.
double normal_pdf(double x);

/// Standard normal upper tail Psi(x) = P{Z >= x}.
double normal_tail(double x);

/// Standard normal distribution function Phi(x).
double normal_cdf(double x);

/// Mills ratio Psi(x) / phi(x). Finite for all x where the ratio is
/// representable; uses a continued fraction for large positive x.
double mills_ratio(double x);

/// Phi^{-1}(p) for p in (0,1). Throws DomainError otherwise.
double normal_quantile(double p);

/// Psi^{-1}(q): the level whose upper tail probability is q. Accurate for
/// q close to 0 where 1-q would lose digits.
double normal_upper_quantile(double q);

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

/// Density of a chi-square variable with k degrees of freedom.
double chi2_pdf(double u, int k);
double chi2_cdf(double u, int k);
/// Upper tail P{chi2_k >= u}.
double chi2_tail(double u, int k);

/// Density of the chi distribution (norm of k iid standard normals).
double chi_pdf(double r, int k);

}  // namespace xkit
