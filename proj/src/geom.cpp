#include "xkit/geom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xkit/error.hpp"
#include "xkit/special.hpp"

namespace xkit {

namespace {

double binomial(int n, int j) {
  if (j < 0 || j > n) return 0.0;
  double b = 1.0;
  for (int i = 1; i <= j; ++i) b = b * (n - j + i) / i;
  return std::round(b);
}

double factorial(int n) { return std::tgamma(n + 1.0); }

}  // namespace

LkcVector::LkcVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ArgumentError("LkcVector needs at least L_0");
}

GmfSeries::GmfSeries(int k, std::vector<double> values) : k_(k), values_(std::move(values)) {
  if (k_ < 1) throw ArgumentError("GmfSeries: ambient dimension k must be >= 1");
  if (values_.empty()) throw ArgumentError("GmfSeries needs at least M_0");
}

GmfSeries GmfSeries::scaled(double c) const {
  std::vector<double> v(values_);
  for (double& x : v) x *= c;
  return GmfSeries(k_, std::move(v));
}

Rectangle::Rectangle(std::vector<double> sides) : sides_(std::move(sides)) {
  if (sides_.empty()) throw DomainError("Rectangle needs at least one side");
  for (double t : sides_) {
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("Rectangle sides must be positive");
  }
}

Rectangle Rectangle::cube(int dim, double side) {
  if (dim < 1) throw DomainError("cube dimension must be >= 1");
  return Rectangle(std::vector<double>(static_cast<std::size_t>(dim), side));
}

Rectangle Rectangle::scaled(double factor) const {
  std::vector<double> s(sides_);
  for (double& t : s) t *= factor;
  return Rectangle(std::move(s));
}

double hermite(int n, double x) {
  if (n < -1) throw DomainError("hermite: order must be >= -1, got " + std::to_string(n));
  if (n == -1) return mills_ratio(x);
  // n! sum_j (-1)^j x^{n-2j} / (j! (n-2j)! 2^j), as a polynomial in x^2.
  const int m = n / 2;
  const double y = x * x;
  double c = 1.0;
  double acc = 1.0;
  for (int j = 0; j < m; ++j) {
    c = -c * (n - 2 * j) * (n - 2 * j - 1) / (2.0 * (j + 1));
    acc = acc * y + c;
  }
  return (n % 2 == 1) ? acc * x : acc;
}

double ball_volume(int j) {
  if (j < 0) throw DomainError("ball_volume: dimension must be >= 0");
  return std::pow(kPi, 0.5 * j) / std::tgamma(1.0 + 0.5 * j);
}

double flag_coefficient(int n, int j) {
  if (j < 0 || j > n) {
    throw DomainError("flag_coefficient: need 0 <= j <= n, got n=" + std::to_string(n) +
                      " j=" + std::to_string(j));
  }
  return binomial(n, j) * ball_volume(n) / (ball_volume(n - j) * ball_volume(j));
}

LkcVector rectangle_lkcs(const Rectangle& rect) {
  const int n = rect.dim();
  std::vector<double> e(static_cast<std::size_t>(n) + 1, 0.0);
  e[0] = 1.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j >= 1; --j) e[j] += e[j - 1] * rect.side(i);
  }
  return LkcVector(std::move(e));
}

double tube_volume_rectangle(const Rectangle& rect, double rho) {
  if (!(rho >= 0.0)) throw DomainError("tube_volume_rectangle: rho must be >= 0");
  const LkcVector l = rectangle_lkcs(rect);
  const int n = rect.dim();
  double v = 0.0;
  for (int j = 0; j <= n; ++j) v += ball_volume(n - j) * std::pow(rho, n - j) * l[j];
  return v;
}

GmfSeries gaussian_gmf(double u, int max_order) {
  if (max_order < 0) throw DomainError("gaussian_gmf: max_order must be >= 0");
  std::vector<double> m(static_cast<std::size_t>(max_order) + 1);
  m[0] = normal_tail(u);
  const double phi = normal_pdf(u);
  for (int j = 1; j <= max_order; ++j) m[j] = hermite(j - 1, u) * phi;
  return GmfSeries(1, std::move(m));
}

GmfSeries chi2_gmf(double u, int k, int max_order) {
  if (!(u >= 0.0)) throw DomainError("chi2_gmf: level must be >= 0");
  if (k < 1) throw DomainError("chi2_gmf: degrees of freedom must be >= 1");
  if (max_order < 0) throw DomainError("chi2_gmf: max_order must be >= 0");
  std::vector<double> m(static_cast<std::size_t>(max_order) + 1, 0.0);
  m[0] = chi2_tail(u, k);
  // u = 0 is the whole space: every higher functional vanishes.
  if (u == 0.0) return GmfSeries(k, std::move(m));

  // The closed form is written in the radius r of the ball complement
  // {|x| >= r}, r = sqrt(u); it equals (-1)^{j-1} d^{j-1}/dr^{j-1} of the
  // chi_k density. The binomial vanishes exactly when k < j - m - 2l, which
  // is the indicator in the printed sum.
  const double r = std::sqrt(u);
  const double log_r = std::log(r);
  const double log_pref = -0.5 * u - std::lgamma(0.5 * k) - 0.5 * (k - 2) * std::log(2.0);
  for (int j = 1; j <= max_order; ++j) {
    double sum = 0.0;
    for (int l = 0; l <= (j - 1) / 2; ++l) {
      for (int mm = 0; mm <= j - 1 - 2 * l; ++mm) {
        const int lower = j - 1 - mm - 2 * l;
        if (lower > k - 1) continue;
        const double sign = ((j - 1 + mm + l) % 2 == 0) ? 1.0 : -1.0;
        const double coeff = binomial(k - 1, lower) * factorial(j - 1) /
                             (factorial(mm) * factorial(l) * std::pow(2.0, l));
        const int power = k - j + 2 * mm + 2 * l;
        sum += sign * coeff * std::exp(log_pref + power * log_r);
      }
    }
    m[j] = sum;
  }
  return GmfSeries(k, std::move(m));
}

std::vector<double> central_difference_weights(int derivative, int half_width) {
  if (derivative < 0 || half_width < 0 || 2 * half_width < derivative) {
    throw DomainError("central_difference_weights: stencil too narrow for derivative order");
  }
  const int n = 2 * half_width + 1;
  const int m = derivative;
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) x[i] = i - half_width;
  // c[i][k]: weight of point i for the k-th derivative at 0.
  std::vector<std::vector<double>> c(static_cast<std::size_t>(n),
                                     std::vector<double>(static_cast<std::size_t>(m) + 1, 0.0));
  double c1 = 1.0;
  double c4 = x[0];
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i];
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int kk = mn; kk >= 1; --kk) {
          c[i][kk] = c1 * (kk * c[i - 1][kk - 1] - c5 * c[i - 1][kk]) / c2;
        }
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int kk = mn; kk >= 1; --kk) c[j][kk] = (c4 * c[j][kk] - kk * c[j][kk - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = c[i][m];
  return w;
}

GmfSeries density_derivative_gmf(const Density& density, double u, int max_order, int k) {
  if (!density.pdf) throw ArgumentError("density_derivative_gmf: density has no pdf");
  if (max_order < 0) throw DomainError("density_derivative_gmf: max_order must be >= 0");
  auto eval = [&](double y) {
    if (y < density.support_lo || y > density.support_hi) {
      throw DomainError("density_derivative_gmf: evaluation at " + std::to_string(y) +
                        " lies outside the density's support");
    }
    const double v = density.pdf(y);
    if (!std::isfinite(v)) {
      throw DomainError("density_derivative_gmf: density is not finite at " + std::to_string(y));
    }
    return v;
  };

  std::vector<double> m(static_cast<std::size_t>(max_order) + 1);
  m[0] = density.tail ? density.tail(u) : std::numeric_limits<double>::quiet_NaN();
  for (int j = 1; j <= max_order; ++j) {
    const int d = j - 1;
    if (d == 0) {
      m[j] = eval(u);
      continue;
    }
    // Stencils of accuracy order >= 8; the step balances h^8 truncation
    // against eps / h^d cancellation.
    const int p = 4 + d / 2;
    const double h = std::pow(std::numeric_limits<double>::epsilon(), 1.0 / (d + 9));
    const std::vector<double> w = central_difference_weights(d, p);
    double acc = 0.0;
    for (int i = -p; i <= p; ++i) acc += w[static_cast<std::size_t>(i + p)] * eval(u + i * h);
    const double deriv = acc / std::pow(h, d);
    m[j] = (d % 2 == 0) ? deriv : -deriv;
  }
  return GmfSeries(k, std::move(m));
}

}  // namespace xkit
