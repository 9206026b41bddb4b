#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "xkit/eec.hpp"
#include "xkit/error.hpp"
#include "xkit/geom.hpp"
#include "xkit/identify.hpp"
#include "xkit/special.hpp"

using namespace xkit;

namespace {

void check_rel(double got, double want, double tol) {
  INFO("got " << got << " want " << want);
  CHECK(std::fabs(got - want) <= tol * std::max(std::fabs(want), 1e-300));
}

FieldModel gaussian(double lambda2, double variance = 1.0) {
  return GaussianModel{CovarianceModel::isotropic(lambda2, variance)};
}

// Printed closed forms for the unit-variance isotropic square and cube of side T.
double square_formula(double t, double lambda2, double u) {
  const double e = std::exp(-0.5 * u * u);
  return e * (t * t * lambda2 / std::pow(2 * kPi, 1.5) * u + 2 * t * std::sqrt(lambda2) / (2 * kPi)) +
         normal_tail(u);
}

double cube_formula(double t, double lambda2, double u) {
  const double e = std::exp(-0.5 * u * u);
  return e * (std::pow(t * t * lambda2, 1.5) / (4 * kPi * kPi) * (u * u - 1) +
              3 * t * t * lambda2 / std::pow(2 * kPi, 1.5) * u + 3 * t * std::sqrt(lambda2) / (2 * kPi)) +
         normal_tail(u);
}

}  // namespace

TEST_CASE("expected EC reference values") {
  check_rel(expected_ec(gaussian(200.0), Rectangle::cube(2, 1.0), 0.0), 5.0015815807855306, 1e-13);
  check_rel(expected_ec(gaussian(880.0), Rectangle::cube(3, 1.0), 0.0), -646.58395200029861, 1e-13);
  check_rel(expected_ec_gaussian_rectangle(Rectangle::cube(3, 1.0), 1.0, 880.0, 0.0),
            -646.58395200029861, 1e-13);
}

TEST_CASE("general sum agrees with the Hermite closed form") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> uu(-6.0, 6.0), ll(0.5, 2000.0), tt(0.1, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double u = uu(rng), lambda2 = ll(rng);
    for (int n = 1; n <= 3; ++n) {
      std::vector<double> sides;
      for (int a = 0; a < n; ++a) sides.push_back(tt(rng));
      const Rectangle rect(sides);
      const double general =
          expected_lkc_isotropic(rectangle_lkcs(rect), gaussian_gmf(u, n), lambda2, 0);
      const double closed = expected_ec_gaussian_rectangle(rect, 1.0, lambda2, u);
      check_rel(general, closed, 1e-12);
    }
    const double t = tt(rng);
    check_rel(expected_ec(gaussian(lambda2), Rectangle::cube(2, t), u), square_formula(t, lambda2, u),
              1e-12);
    check_rel(expected_ec(gaussian(lambda2), Rectangle::cube(3, t), u), cube_formula(t, lambda2, u),
              1e-11);
  }
}

TEST_CASE("variance enters through the standardised level") {
  // The closed form takes the raw second spectral moment sigma^2 lambda2.
  const Rectangle rect({1.0, 0.7});
  for (double u : {-2.0, 0.5, 3.0}) {
    check_rel(expected_ec(gaussian(150.0, 4.0), rect, u),
              expected_ec_gaussian_rectangle(rect, 4.0, 4.0 * 150.0, u), 1e-12);
    check_rel(expected_ec(gaussian(150.0, 4.0), rect, u), expected_ec(gaussian(150.0), rect, u / 2.0),
              1e-12);
  }
}

TEST_CASE("trivial hitting set and order checks") {
  const LkcVector lkcs = rectangle_lkcs(Rectangle({2.0, 3.0, 0.5}));
  const GmfSeries whole(1, {1.0, 0.0, 0.0, 0.0});
  CHECK(expected_lkc_isotropic(lkcs, whole, 50.0, 0) == doctest::Approx(1.0));
  CHECK(expected_lkc_general(lkcs, whole, 0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(expected_lkc_isotropic(lkcs, gaussian_gmf(1.0, 1), 50.0, 0), ArgumentError);
  CHECK_THROWS_AS(expected_lkc_general(lkcs, gaussian_gmf(1.0, 2), 0), ArgumentError);
  CHECK_THROWS_AS(expected_lkc(gaussian(10.0), Rectangle::cube(2, 1.0), 0.0, 3), DomainError);
}

TEST_CASE("expected EC limits") {
  for (int n = 1; n <= 3; ++n) {
    for (double lambda2 : {1.0, 200.0, 880.0}) {
      const Rectangle rect = Rectangle::cube(n, 1.3);
      CHECK(expected_ec(gaussian(lambda2), rect, -40.0) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::fabs(expected_ec(gaussian(lambda2), rect, 40.0)) < 1e-300);
    }
  }
}

TEST_CASE("stationary rectangle LKCs") {
  const Rectangle rect({1.0, 2.0, 0.5});
  const Eigen::MatrixXd iso = 37.0 * Eigen::MatrixXd::Identity(3, 3);
  for (double u : {-1.0, 0.0, 2.5}) {
    check_rel(expected_ec_stationary_rectangle(rect, iso, u),
              expected_ec_gaussian_rectangle(rect, 1.0, 37.0, u), 1e-12);
  }

  Eigen::MatrixXd diag(2, 2);
  diag << 9.0, 0.0, 0.0, 25.0;
  const LkcVector l = stationary_rectangle_lkcs(Rectangle({2.0, 3.0}), diag);
  check_rel(l[0], 1.0, 0.0);
  check_rel(l[1], 2.0 * 3.0 + 3.0 * 5.0, 1e-15);
  check_rel(l[2], 2.0 * 3.0 * std::sqrt(9.0 * 25.0), 1e-15);
  const double u = 1.2;
  const double want = normal_tail(u) + 21.0 * std::exp(-u * u / 2) / (2 * kPi) +
                      90.0 * u * std::exp(-u * u / 2) / std::pow(2 * kPi, 1.5);
  check_rel(expected_ec_stationary_rectangle(Rectangle({2.0, 3.0}), diag, u), want, 1e-12);

  // Relabelling axes of both rectangle and matrix leaves the value unchanged.
  Eigen::MatrixXd lam(3, 3);
  lam << 30.0, 5.0, -4.0, 5.0, 20.0, 2.0, -4.0, 2.0, 12.0;
  const int perm[3] = {2, 0, 1};
  Eigen::MatrixXd plam(3, 3);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) plam(a, b) = lam(perm[a], perm[b]);
  }
  const Rectangle prect({rect.side(perm[0]), rect.side(perm[1]), rect.side(perm[2])});
  for (double v : {-0.5, 1.0, 3.0}) {
    check_rel(expected_ec_stationary_rectangle(prect, plam, v),
              expected_ec_stationary_rectangle(rect, lam, v), 1e-12);
  }
  // Anisotropic models route through the same face sums.
  const FieldModel aniso = GaussianModel{CovarianceModel::anisotropic(lam)};
  check_rel(expected_ec(aniso, rect, 0.7), expected_ec_stationary_rectangle(rect, lam, 0.7), 1e-12);

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(stationary_rectangle_lkcs(Rectangle({1.0, 1.0}), bad), ArgumentError);
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.2, 0.1, 1.0;
  CHECK_THROWS_AS(stationary_rectangle_lkcs(Rectangle({1.0, 1.0}), asym), ArgumentError);
}

TEST_CASE("general LKC sum with metric LKCs") {
  const Rectangle rect({1.5, 0.8, 1.1});
  const double lambda2 = 64.0;
  const LkcVector e = rectangle_lkcs(rect);
  std::vector<double> metric;
  for (int j = 0; j <= 3; ++j) metric.push_back(std::pow(lambda2, 0.5 * j) * e[j]);
  const LkcVector m(metric);
  for (double u : {-2.0, 0.3, 2.0, 4.0}) {
    for (int i = 0; i <= 3; ++i) {
      const GmfSeries g = gaussian_gmf(u, 3 - i);
      check_rel(expected_lkc_general(m, g, i), expected_lkc_isotropic(e, g, lambda2, i), 1e-12);
    }
    check_rel(expected_lkc_general(m, gaussian_gmf(u, 0), 3), m[3] * normal_tail(u), 1e-14);
  }
  // One dimension: an interval of metric length sqrt(lambda2) T.
  const double t = 2.5;
  for (double u : {-1.0, 0.0, 1.7}) {
    const LkcVector interval({1.0, std::sqrt(lambda2) * t});
    check_rel(expected_lkc_general(interval, gaussian_gmf(u, 1), 0),
              expected_ec_gaussian_rectangle(Rectangle({t}), 1.0, lambda2, u), 1e-12);
  }
}

TEST_CASE("high-level approximation") {
  const Rectangle sq = Rectangle::cube(2, 1.0);
  auto constant = [](double l) {
    return [l](std::span<const double> x) -> Eigen::MatrixXd {
      return l * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(x.size()),
                                           static_cast<Eigen::Index>(x.size()));
    };
  };
  check_rel(top_lkc_integral(sq, constant(200.0)), 200.0, 1e-12);
  check_rel(top_lkc_integral(Rectangle({1.0, 2.0, 0.5}), constant(4.0)), 8.0, 1e-12);
  // sqrt(det) = (1 + x_0)^2 on the unit square integrates to 7/3.
  auto ramp = [](std::span<const double> x) -> Eigen::MatrixXd {
    return (1.0 + x[0]) * (1.0 + x[0]) * Eigen::MatrixXd::Identity(2, 2);
  };
  check_rel(top_lkc_integral(sq, ramp), 7.0 / 3.0, 1e-10);
  // An integrand singular inside the domain never settles.
  auto singular = [](std::span<const double> x) -> Eigen::MatrixXd {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = 1.0 / ((x[0] - 0.5) * (x[0] - 0.5));
    return m;
  };
  CHECK_THROWS_AS(top_lkc_integral(Rectangle({1.0}), singular), NumericError);

  for (double u : {1.0, 4.0}) {
    check_rel(expected_lkc_high_level(sq, constant(200.0), u, 2), 200.0 * normal_tail(u), 1e-12);
  }
  const double r6 = expected_ec(gaussian(200.0), sq, 6.0) /
                    expected_lkc_high_level(sq, constant(200.0), 6.0, 0);
  const double r10 = expected_ec(gaussian(200.0), sq, 10.0) /
                     expected_lkc_high_level(sq, constant(200.0), 10.0, 0);
  CHECK(std::fabs(r6 - 1.0) < 0.15);
  CHECK(std::fabs(r10 - 1.0) < 0.05);
  CHECK(std::fabs(r10 - 1.0) < std::fabs(r6 - 1.0));
}

TEST_CASE("Gauss-Legendre rule") {
  const Quadrature q = gauss_legendre(5);
  double w = 0.0, x8 = 0.0;
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    w += q.weights[k];
    x8 += q.weights[k] * std::pow(q.nodes[k], 8);
  }
  check_rel(w, 2.0, 1e-14);
  check_rel(x8, 2.0 / 9.0, 1e-14);
  check_rel(q.nodes[4], std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0, 1e-14);
}

TEST_CASE("excursion probability and error bound") {
  const FieldModel m = gaussian(200.0);
  const Rectangle sq = Rectangle::cube(2, 1.0);
  const double u = 4.0;
  const double sigma_c2 = 3.0 * 200.0 * 200.0 - 1.0;
  CHECK(sigma_c2 == 119999.0);
  check_rel(*ec_heuristic_error_bound(m, u), std::exp(-u * u * (1.0 + 1.0 / 119999.0) / 2.0), 1e-15);
  CHECK_FALSE(ec_heuristic_error_bound(ChiSquaredModel{3, CovarianceModel::isotropic(10.0)}, u));

  double prev = INFINITY;
  double prev_ratio = INFINITY;
  double ratio_at_10 = 0.0;
  for (double v = 3.3; v <= 30.0; v += 0.1) {
    const ExcursionProbability p = excursion_probability(m, sq, v);
    if (p.approx < 0.1) {
      CHECK(p.approx > 0.0);
      CHECK(p.approx < prev);
      prev = p.approx;
    }
    const double ratio = *p.error_bound / p.approx;
    CHECK(ratio < prev_ratio);
    prev_ratio = ratio;
    if (std::fabs(v - 10.0) < 0.05) ratio_at_10 = ratio;
  }
  CHECK(prev_ratio < 0.4 * ratio_at_10);
  const ExcursionProbability low = excursion_probability(m, sq, 0.1);
  CHECK(low.below_peak);
  CHECK_FALSE(low.warnings.empty());
  CHECK(excursion_probability(m, sq, 4.0).warnings.empty());
}

TEST_CASE("threshold selection") {
  const FieldModel m = gaussian(200.0);
  const Rectangle sq = Rectangle::cube(2, 1.0);
  const ThresholdResult r = threshold(m, sq, 0.05);
  CHECK(std::fabs(r.u_star - 3.7271064408056485) < 1e-8);
  CHECK(std::fabs(r.eec_at_u - 0.05) <= 1e-10);
  CHECK(std::fabs(square_formula(1.0, 200.0, r.u_star) - 0.05) <= 1e-10);
  CHECK(r.u_star > r.peak.level);
  check_rel(*r.error_bound, 0.00096274777964049465, 1e-9);
  check_rel(r.peak.level, 0.82275463016430794, 1e-6);
  check_rel(r.peak.value, 10.862318719327641, 1e-12);

  for (double u0 : {3.1, 3.6, 4.2, 5.5}) {
    const double a = expected_ec(m, sq, u0);
    CHECK(std::fabs(threshold(m, sq, a).u_star - u0) < 1e-8);
  }
  double last = -INFINITY;
  for (double a : {0.4, 0.2, 0.05, 0.01, 1e-4}) {
    const double u = threshold(m, sq, a).u_star;
    CHECK(u > last);
    last = u;
  }
  CHECK_THROWS_AS(threshold(m, sq, 0.7), DomainError);
  CHECK_THROWS_AS(threshold(m, sq, 0.0), DomainError);
  // The chi-square curve is bracketed beyond its final peak.
  const FieldModel c = ChiSquaredModel{5, CovarianceModel::isotropic(20.0)};
  const ThresholdResult rc = threshold(c, Rectangle::cube(3, 1.0), 0.05);
  CHECK(std::fabs(rc.eec_at_u - 0.05) <= 1e-10);
  CHECK(rc.u_star > 10.0);
  CHECK_FALSE(rc.error_bound);
}

TEST_CASE("separation of parameters") {
  const Rectangle rect({1.2, 0.4, 2.0});
  const LkcVector l = rectangle_lkcs(rect);
  const double lambda2 = 40.0;
  for (double u : {-1.0, 0.5, 3.0}) {
    const GmfSeries g = gaussian_gmf(u, 3);
    for (int i = 0; i <= 3; ++i) {
      for (double c : {0.1, 2.0, 7.5}) {
        check_rel(expected_lkc_isotropic(l, g.scaled(c), lambda2, i),
                  c * expected_lkc_isotropic(l, g, lambda2, i), 1e-14);
      }
    }
  }
  // Isolate the j-th term with a one-hot GMF series; it scales as s^(i+j).
  for (int i = 0; i <= 3; ++i) {
    for (int j = 0; j <= 3 - i; ++j) {
      std::vector<double> one_hot(4, 0.0);
      one_hot[j] = 1.0;
      const GmfSeries g(1, one_hot);
      const double base = expected_lkc_isotropic(l, g, lambda2, i);
      for (double s : {0.5, 2.0, 3.0}) {
        check_rel(expected_lkc_isotropic(rectangle_lkcs(rect.scaled(s)), g, lambda2, i),
                  std::pow(s, i + j) * base, 1e-13);
      }
    }
  }
}

TEST_CASE("expected curves of higher orders") {
  const FieldModel m = gaussian(30.0);
  const Rectangle rect({1.0, 2.0});
  const std::vector<double> levels{-1.0, 0.0, 1.0};
  const ECCurve c = expected_curve(m, rect, levels, 1);
  CHECK(c.kind == ECCurve::Kind::expected);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    check_rel(c.values[k], expected_lkc(m, rect, levels[k], 1), 0.0);
  }
  // L_N of the excursion set is its expected area in the induced metric.
  check_rel(expected_lkc(m, rect, 0.7, 2), 30.0 * 2.0 * normal_tail(0.7), 1e-14);
  CHECK_THROWS_AS(expected_ec(TModel{4, CovarianceModel::isotropic(10.0)}, rect, 0.0), CapabilityError);
  CHECK_THROWS_AS(expected_ec(FModel{2, 3, CovarianceModel::isotropic(10.0)}, rect, 0.0),
                  CapabilityError);
}

TEST_CASE("chi-square expected EC has a bump, a dip and a peak") {
  const FieldModel m = ChiSquaredModel{5, CovarianceModel::isotropic(20.0)};
  const Rectangle cube = Rectangle::cube(3, 1.0);
  CHECK(expected_ec(m, cube, 0.0) == doctest::Approx(1.0));
  std::vector<double> roots;
  double prev = expected_ec(m, cube, 0.01);
  double lowest = prev;
  for (double u = 0.02; u <= 15.0 + 1e-9; u += 0.01) {
    const double v = expected_ec(m, cube, u);
    if ((v < 0) != (prev < 0)) roots.push_back(u);
    lowest = std::min(lowest, v);
    prev = v;
  }
  REQUIRE(roots.size() == 2);
  CHECK(roots[0] == doctest::Approx(1.14).epsilon(0.02));
  CHECK(roots[1] == doctest::Approx(4.81).epsilon(0.02));
  CHECK(lowest == doctest::Approx(-5.66).epsilon(0.01));
  const EecPeak peak = eec_peak(m, cube);
  CHECK(peak.level > roots[1]);
  CHECK(peak.value == doctest::Approx(7.06).epsilon(0.01));
}

TEST_CASE("chi-square expected EC matches simulated lattice EC") {
  const FieldModel m = ChiSquaredModel{3, CovarianceModel::isotropic(100.0)};
  const std::size_t n = 128;
  const double delta = 1.0 / (n - 1);
  std::vector<double> levels;
  for (int k = 0; k <= 60; ++k) levels.push_back(0.25 * k);
  MonteCarloOptions opts;
  opts.realisations = 100;
  opts.seed = 2024;
  const MonteCarloCurve mc = monte_carlo_ec(m, {n, n}, delta, levels, opts);
  const Rectangle sq = Rectangle::cube(2, 1.0);
  int within = 0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double se = std::max(mc.standard_error(k), 1.0 / opts.realisations);
    within += std::fabs(mc.mean[k] - expected_ec(m, sq, levels[k])) <= 3.0 * se;
  }
  INFO("within " << within << " of " << levels.size());
  CHECK(within >= static_cast<int>(0.95 * levels.size()));
}
