#pragma once

// Closed-form geometry: Hermite polynomials, unit-ball volumes, flag
// coefficients, Lipschitz-Killing curvatures of rectangles and Gaussian
// Minkowski functionals of Gaussian and chi-square hitting sets.

#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace xkit {

/// Lipschitz-Killing curvatures L_0..L_N of a set. L_j carries units of
/// length^j; L_0 is the Euler characteristic.
class LkcVector {
 public:
  LkcVector() = default;
  explicit LkcVector(std::vector<double> values);

  int dim() const { return static_cast<int>(values_.size()) - 1; }
  double operator[](int j) const { return values_.at(static_cast<std::size_t>(j)); }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_{1.0};
};

/// Truncated Gaussian Minkowski functionals M_0..M_J of a hitting set in
/// k-dimensional Gaussian space. M_0 is a Gaussian probability.
class GmfSeries {
 public:
  GmfSeries(int k, std::vector<double> values);

  int k() const { return k_; }
  int max_order() const { return static_cast<int>(values_.size()) - 1; }
  double operator[](int j) const { return values_.at(static_cast<std::size_t>(j)); }
  std::span<const double> values() const { return values_; }

  GmfSeries scaled(double c) const;

 private:
  int k_;
  std::vector<double> values_;
};

/// Axis-aligned box [0,T_1] x ... x [0,T_N].
class Rectangle {
 public:
  explicit Rectangle(std::vector<double> sides);
  static Rectangle cube(int dim, double side);

  int dim() const { return static_cast<int>(sides_.size()); }
  std::span<const double> sides() const { return sides_; }
  double side(int i) const { return sides_.at(static_cast<std::size_t>(i)); }
  Rectangle scaled(double factor) const;

 private:
  std::vector<double> sides_;
};

/// H_n(x) from the explicit finite sum for n >= 0; for n = -1 the
/// convention H_{-1}(x) = sqrt(2 pi) Psi(x) exp(x^2/2) (the Mills ratio).
double hermite(int n, double x);

/// Volume of the unit ball in R^j.
double ball_volume(int j);

/// binom(n, j) * w_n / (w_{n-j} w_j).
double flag_coefficient(int n, int j);

/// L_j of a rectangle: the summed j-volumes of its j-faces through the
/// origin, i.e. the j-th elementary symmetric polynomial of the sides.
LkcVector rectangle_lkcs(const Rectangle& rect);

/// Steiner polynomial: volume of the rho-tube around the rectangle.
double tube_volume_rectangle(const Rectangle& rect, double rho);

/// GMFs of [u, inf) in one-dimensional Gaussian space.
GmfSeries gaussian_gmf(double u, int max_order);

/// GMFs of {x in R^k : |x|^2 >= u}, the hitting set of a chi-square field
/// with k degrees of freedom.
GmfSeries chi2_gmf(double u, int k, int max_order);

/// A univariate density used to build GMFs by differentiation. `tail`, when
/// set, supplies M_0; the stencil must stay inside [support_lo, support_hi].
struct Density {
  std::function<double(double)> pdf;
  std::function<double(double)> tail;
  double support_lo = -std::numeric_limits<double>::infinity();
  double support_hi = std::numeric_limits<double>::infinity();
};

/// M_j = (-1)^{j-1} p^{(j-1)}(u) for j >= 1 by high-order central finite
/// differences. M_0 is tail(u) if available, NaN otherwise. Valid for
/// hitting sets F^{-1}[u, inf) where F has unit gradient (distance-like),
/// e.g. F(x) = x for Gaussian levels or F(x) = |x| for chi levels.
GmfSeries density_derivative_gmf(const Density& density, double u, int max_order, int k = 1);

/// Central finite-difference weights for the d-th derivative on the points
/// -p..p (Fornberg's recursion). Exposed for testing.
std::vector<double> central_difference_weights(int derivative, int half_width);

}  // namespace xkit
