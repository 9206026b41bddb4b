#include "xkit/eec.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "xkit/error.hpp"
#include "xkit/special.hpp"

namespace xkit {

namespace {

void check_order(int dim, int i, const GmfSeries& gmfs) {
  if (i < 0 || i > dim) {
    throw DomainError("LKC order " + std::to_string(i) + " outside 0.." + std::to_string(dim));
  }
  if (gmfs.max_order() < dim - i) {
    throw ArgumentError("GMF series truncated at order " + std::to_string(gmfs.max_order()) +
                        " but order " + std::to_string(dim - i) + " is needed");
  }
}

void check_symmetric_pd(const Eigen::MatrixXd& lambda, int dim) {
  if (lambda.rows() != dim || lambda.cols() != dim) {
    throw ArgumentError("spectral matrix must be " + std::to_string(dim) + "x" +
                        std::to_string(dim));
  }
  const double scale = lambda.cwiseAbs().maxCoeff();
  if (!lambda.allFinite() || (lambda - lambda.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ArgumentError("spectral matrix must be finite and symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(lambda);
  if (llt.info() != Eigen::Success) throw ArgumentError("spectral matrix must be positive definite");
}

// Scalar lambda2 when the covariance is isotropic.
std::optional<double> isotropic_lambda(const CovarianceModel& cov, int dim) {
  if (!cov.is_isotropic()) return std::nullopt;
  return cov.spectral_matrix(dim)(0, 0);
}

double scan_upper(const FieldModel& model) {
  if (const auto* c = std::get_if<ChiSquaredModel>(&model)) {
    return std::max(20.0, c->k + 20.0 * std::sqrt(2.0 * c->k));
  }
  return 20.0;
}

}  // namespace

double expected_lkc_general(const LkcVector& lkcs, const GmfSeries& gmfs, int i) {
  const int n = lkcs.dim();
  check_order(n, i, gmfs);
  double sum = 0.0;
  for (int j = 0; j <= n - i; ++j) {
    sum += flag_coefficient(i + j, j) * std::pow(2.0 * kPi, -0.5 * j) * lkcs[i + j] * gmfs[j];
  }
  return sum;
}

double expected_lkc_isotropic(const LkcVector& lkcs, const GmfSeries& gmfs, double lambda2, int i) {
  if (!(lambda2 > 0.0)) throw DomainError("lambda2 must be positive");
  const int n = lkcs.dim();
  check_order(n, i, gmfs);
  double sum = 0.0;
  for (int j = 0; j <= n - i; ++j) {
    sum += flag_coefficient(i + j, j) * std::pow(lambda2, 0.5 * (i + j)) *
           std::pow(2.0 * kPi, -0.5 * j) * lkcs[i + j] * gmfs[j];
  }
  return sum;
}

double expected_ec_gaussian_rectangle(const Rectangle& rect, double sigma2, double lambda2,
                                      double u) {
  if (!(sigma2 > 0.0) || !(lambda2 > 0.0)) {
    throw DomainError("variance and lambda2 must be positive");
  }
  const double sigma = std::sqrt(sigma2);
  const double z = u / sigma;
  const LkcVector faces = rectangle_lkcs(rect);
  double sum = 0.0;
  for (int k = 1; k <= rect.dim(); ++k) {
    sum += faces[k] * std::pow(lambda2, 0.5 * k) /
           (std::pow(2.0 * kPi, 0.5 * (k + 1)) * std::pow(sigma, k)) * hermite(k - 1, z);
  }
  return std::exp(-0.5 * z * z) * sum + normal_tail(z);
}

LkcVector stationary_rectangle_lkcs(const Rectangle& rect, const Eigen::MatrixXd& lambda) {
  const int n = rect.dim();
  check_symmetric_pd(lambda, n);
  std::vector<double> l(static_cast<std::size_t>(n) + 1, 0.0);
  for (unsigned subset = 0; subset < (1u << n); ++subset) {
    std::vector<Eigen::Index> axes;
    double volume = 1.0;
    for (int a = 0; a < n; ++a) {
      if (subset & (1u << a)) {
        axes.push_back(a);
        volume *= rect.side(a);
      }
    }
    double det = 1.0;
    if (!axes.empty()) {
      const auto k = static_cast<Eigen::Index>(axes.size());
      Eigen::MatrixXd sub(k, k);
      for (Eigen::Index r = 0; r < k; ++r) {
        for (Eigen::Index c = 0; c < k; ++c) sub(r, c) = lambda(axes[r], axes[c]);
      }
      det = sub.determinant();
    }
    l[axes.size()] += volume * std::sqrt(det);
  }
  return LkcVector(std::move(l));
}

double expected_ec_stationary_rectangle(const Rectangle& rect, const Eigen::MatrixXd& lambda,
                                        double u) {
  const LkcVector l = stationary_rectangle_lkcs(rect, lambda);
  return expected_lkc_general(l, gaussian_gmf(u, rect.dim()), 0);
}

Quadrature gauss_legendre(int n) {
  if (n < 1) throw DomainError("gauss_legendre: need at least one node");
  Quadrature q;
  q.nodes.resize(static_cast<std::size_t>(n));
  q.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = (n == 1) ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes[static_cast<std::size_t>(i)] = -x;
    q.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    q.weights[static_cast<std::size_t>(i)] = w;
    q.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  if (n % 2 == 1) q.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return q;
}

double top_lkc_integral(const Rectangle& rect, const SpectralFunction& lambda) {
  if (!lambda) throw ArgumentError("top_lkc_integral: no spectral function supplied");
  const int n = rect.dim();
  constexpr double kPointCap = 1 << 22;
  constexpr int kAxisCap = 1024;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int nodes = 4; nodes <= kAxisCap; nodes *= 2) {
    if (std::pow(static_cast<double>(nodes), n) > kPointCap) break;
    const Quadrature q = gauss_legendre(nodes);
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    std::vector<double> x(static_cast<std::size_t>(n));
    double total = 0.0;
    while (true) {
      double w = 1.0;
      for (int a = 0; a < n; ++a) {
        const double half = 0.5 * rect.side(a);
        x[a] = half * (1.0 + q.nodes[idx[a]]);
        w *= half * q.weights[idx[a]];
      }
      const Eigen::MatrixXd m = lambda(x);
      if (m.rows() != n || m.cols() != n) {
        throw ArgumentError("spectral function returned a matrix of the wrong size");
      }
      const double det = m.determinant();
      if (!(det >= 0.0)) throw DomainError("spectral matrix is not positive semidefinite");
      total += w * std::sqrt(det);
      int a = n - 1;
      while (a >= 0 && ++idx[a] == nodes) idx[a--] = 0;
      if (a < 0) break;
    }
    if (std::isfinite(prev) && std::fabs(total - prev) <= 1e-8 * std::fabs(total)) return total;
    prev = total;
  }
  throw NumericError("top_lkc_integral: quadrature did not reach relative change 1e-8");
}

double expected_lkc_high_level(double top_lkc, int dim, double u, int i) {
  if (dim < 1) throw DomainError("dimension must be >= 1");
  if (i < 0 || i > dim) throw DomainError("LKC order outside 0..N");
  const int j = dim - i;
  const GmfSeries m = gaussian_gmf(u, j);
  return flag_coefficient(dim, j) * std::pow(2.0 * kPi, -0.5 * j) * top_lkc * m[j];
}

double expected_lkc_high_level(const Rectangle& rect, const SpectralFunction& lambda, double u,
                               int i) {
  return expected_lkc_high_level(top_lkc_integral(rect, lambda), rect.dim(), u, i);
}

double expected_lkc(const FieldModel& model, const Rectangle& rect, double u, int i) {
  const int n = rect.dim();
  if (i < 0 || i > n) throw DomainError("LKC order outside 0.." + std::to_string(n));
  auto assemble = [&](const CovarianceModel& cov, const GmfSeries& gmfs) {
    cov.validate(n);
    if (const auto iso = isotropic_lambda(cov, n)) {
      return expected_lkc_isotropic(rectangle_lkcs(rect), gmfs, *iso, i);
    }
    return expected_lkc_general(stationary_rectangle_lkcs(rect, cov.spectral_matrix(n)), gmfs, i);
  };
  if (const auto* g = std::get_if<GaussianModel>(&model)) {
    if (!(g->cov.variance > 0.0)) throw DomainError("variance must be positive");
    return assemble(g->cov, gaussian_gmf(u / std::sqrt(g->cov.variance), n - i));
  }
  if (const auto* c = std::get_if<ChiSquaredModel>(&model)) {
    if (c->k < 1) throw DomainError("chi-square degrees of freedom must be >= 1");
    CovarianceModel unit = c->cov;
    unit.variance = 1.0;
    return assemble(unit, chi2_gmf(std::max(u, 0.0), c->k, n - i));
  }
  throw CapabilityError("no closed-form Gaussian Minkowski functionals for " + model_token(model) +
                        " hitting sets; expected LKCs are available for gaussian and chisq models");
}

double expected_ec(const FieldModel& model, const Rectangle& rect, double u) {
  return expected_lkc(model, rect, u, 0);
}

ECCurve expected_curve(const FieldModel& model, const Rectangle& rect,
                       std::span<const double> levels, int order) {
  ECCurve curve;
  curve.kind = ECCurve::Kind::expected;
  curve.levels.assign(levels.begin(), levels.end());
  curve.values.reserve(levels.size());
  for (double u : levels) curve.values.push_back(expected_lkc(model, rect, u, order));
  curve.validate();
  return curve;
}

EecPeak eec_peak(const FieldModel& model, const Rectangle& rect) {
  constexpr double kStep = 0.01;
  const double hi = scan_upper(model);
  const int steps = static_cast<int>(std::lround(hi / kStep));
  std::vector<double> v(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) v[t] = expected_ec(model, rect, t * kStep);

  // Last interior local maximum of the scanned values.
  int best = -1;
  int last_rise = -1;
  for (int t = 0; t < steps; ++t) {
    const double d = v[t + 1] - v[t];
    if (d > 0.0) {
      last_rise = t + 1;
    } else if (d < 0.0 && last_rise == t) {
      best = t;
    }
  }
  if (best < 0) return {0.0, v[0]};

  double a = (best - 1) * kStep;
  double b = (best + 1) * kStep;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = expected_ec(model, rect, c);
  double fd = expected_ec(model, rect, d);
  while (b - a > 1e-12) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = expected_ec(model, rect, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = expected_ec(model, rect, d);
    }
  }
  const double level = 0.5 * (a + b);
  return {level, expected_ec(model, rect, level)};
}

std::optional<double> ec_heuristic_error_bound(const FieldModel& model, double u) {
  const auto* g = std::get_if<GaussianModel>(&model);
  if (!g || !g->cov.is_isotropic()) return std::nullopt;
  const double lambda2 = g->cov.anisotropy ? (*g->cov.anisotropy)(0, 0) : g->cov.lambda2;
  const double sigma_c2 = 3.0 * lambda2 * lambda2 - 1.0;
  if (!(sigma_c2 > 0.0) || !(g->cov.variance > 0.0)) return std::nullopt;
  const double z = u / std::sqrt(g->cov.variance);
  return std::exp(-0.5 * z * z * (1.0 + 1.0 / sigma_c2));
}

ThresholdResult threshold(const FieldModel& model, const Rectangle& rect, double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw DomainError("alpha must lie in (0, 0.5), got " + std::to_string(alpha));
  }
  const EecPeak peak = eec_peak(model, rect);
  if (alpha > peak.value) {
    std::ostringstream msg;
    msg.precision(10);
    msg << "alpha=" << alpha << " exceeds the expected EC peak " << peak.value << " at u="
        << peak.level;
    throw NoSolutionError(msg.str());
  }
  auto f = [&](double u) { return expected_ec(model, rect, u) - alpha; };

  double lo = peak.level;
  double hi = lo + 1.0;
  for (int it = 0; f(hi) >= 0.0; ++it) {
    if (it > 60) throw NumericError("threshold: could not bracket the root");
    hi = lo + 2.0 * (hi - lo);
  }
  // f(lo) >= 0 > f(hi); bisect to the resolution of doubles.
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) >= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double flo = f(lo);
  const double fhi = f(hi);
  const double u = std::fabs(flo) <= std::fabs(fhi) ? lo : hi;
  const double err = std::min(std::fabs(flo), std::fabs(fhi));
  if (!(err <= 1e-10)) {
    throw NumericError("threshold: residual " + std::to_string(err) + " exceeds 1e-10");
  }
  ThresholdResult r;
  r.alpha = alpha;
  r.u_star = u;
  r.eec_at_u = expected_ec(model, rect, u);
  r.error_bound = ec_heuristic_error_bound(model, u);
  r.peak = peak;
  return r;
}

ExcursionProbability excursion_probability(const FieldModel& model, const Rectangle& rect,
                                           double u) {
  ExcursionProbability p;
  p.approx = expected_ec(model, rect, u);
  p.error_bound = ec_heuristic_error_bound(model, u);
  const EecPeak peak = eec_peak(model, rect);
  p.below_peak = u < peak.level;
  if (p.below_peak) {
    p.warnings.push_back("level " + std::to_string(u) + " lies below the expected EC peak at " +
                         std::to_string(peak.level) +
                         "; the tail-probability approximation does not apply");
  }
  return p;
}

}  // namespace xkit
