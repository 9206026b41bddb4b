#include <doctest.h>

#include <cmath>
#include <vector>

#include "xkit/eec.hpp"
#include "xkit/error.hpp"
#include "xkit/excursion.hpp"
#include "xkit/identify.hpp"

using namespace xkit;

namespace {

std::vector<double> level_grid(double lo, double hi, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
  return v;
}

ECCurve curve_of(std::vector<double> levels, std::vector<double> values) {
  ECCurve c;
  c.levels = std::move(levels);
  c.values = std::move(values);
  return c;
}

}  // namespace

TEST_CASE("candidate tokens") {
  for (const char* t : {"gaussian", "chisq:5", "gchisq:3", "t:4", "f:2:7"}) {
    CHECK(parse_candidate(t).token() == t);
  }
  CHECK(parse_candidate("chisq:5").family == CandidateFamily::chisq);
  CHECK(parse_candidate("f:2:7").b == 7);
  for (const char* bad : {"", "gauss", "chisq", "chisq:", "chisq:x", "chisq:0", "chisq:3:1", "t:1",
                          "f:2", "f:1:0", "gaussian:1", "Gaussian", "chisq:5 "}) {
    INFO(bad);
    CHECK_THROWS_AS(parse_candidate(bad), ArgumentError);
  }
  const auto list = parse_candidate_list("gaussian,chisq:5,gchisq:5");
  REQUIRE(list.size() == 3);
  CHECK(list[2].family == CandidateFamily::gaussianised_chisq);
  CHECK_THROWS_AS(parse_candidate_list(""), ArgumentError);
  CHECK_THROWS_AS(parse_candidate_list("gaussian,"), ArgumentError);
}

TEST_CASE("Gaussianised chi-square lambda factor") {
  // Reference values from an independent arbitrary-precision quadrature of
  // 4 E[Y h'(Y)^2], h = Phi^{-1} o F_k.
  const double want[] = {2.6607675776091241, 2.380416391298134, 2.267129506480017,
                         2.205723732775162};
  for (int k = 3; k <= 6; ++k) {
    CHECK(gaussianised_chi2_lambda_factor(k) == doctest::Approx(want[k - 3]).epsilon(1e-10));
  }
  // The factor approaches 2 (the plain chi-square ratio) as k grows.
  CHECK(gaussianised_chi2_lambda_factor(200) == doctest::Approx(2.0).epsilon(0.01));
  CHECK_THROWS_AS(gaussianised_chi2_lambda_factor(2), DomainError);
  CHECK_THROWS_AS(gaussianised_chi2_lambda_factor(1), DomainError);
}

TEST_CASE("lattice correction inverts the central-difference bias") {
  for (double lambda2 : {10.0, 200.0, 880.0}) {
    for (double delta : {1.0 / 255, 1.0 / 63, 0.02}) {
      const double est = -std::expm1(-2.0 * lambda2 * delta * delta) / (2.0 * delta * delta);
      CHECK(lattice_corrected_lambda(est, delta) == doctest::Approx(lambda2).epsilon(1e-12));
      CHECK(lattice_corrected_lambda(est, delta) >= est);
    }
  }
  CHECK_THROWS_AS(lattice_corrected_lambda(0.5 / (0.1 * 0.1), 0.1), EstimationError);
  CHECK_THROWS_AS(lattice_corrected_lambda(-1.0, 0.1), EstimationError);
}

TEST_CASE("matched candidates map data levels onto model levels") {
  const double mean = 2.0, var = 4.0, lambda2 = 50.0;
  const Candidate g = matched_candidate(parse_candidate("gaussian"), mean, var, lambda2);
  CHECK(g.model_level(5.0) == doctest::Approx(3.0));
  CHECK(covariance_of(g.model).variance == doctest::Approx(4.0));
  CHECK(covariance_of(g.model).lambda2 == doctest::Approx(50.0));

  const Candidate c = matched_candidate(parse_candidate("chisq:5"), mean, var, lambda2);
  CHECK(c.model_level(mean) == doctest::Approx(5.0));
  CHECK(c.model_level(mean + 2.0) == doctest::Approx(5.0 + std::sqrt(10.0)));
  CHECK(covariance_of(c.model).lambda2 == doctest::Approx(25.0));
  CHECK_FALSE(c.gaussianised);

  const Candidate gc = matched_candidate(parse_candidate("gchisq:5"), mean, var, lambda2);
  CHECK(gc.gaussianised);
  CHECK(gc.model_level(mean) == doctest::Approx(0.0));
  CHECK(gc.model_level(mean + 2.0) == doctest::Approx(1.0));
  CHECK(covariance_of(gc.model).lambda2 ==
        doctest::Approx(lambda2 / gaussianised_chi2_lambda_factor(5)));

  const Candidate s = supplied_candidate(parse_candidate("chisq:3"), CovarianceModel::isotropic(9.0, 5.0));
  CHECK(covariance_of(s.model).variance == 1.0);
  CHECK(s.model_level(1.5) == 1.5);
}

TEST_CASE("discrepancy and ranking") {
  CHECK(curve_discrepancy(std::vector<double>{1, 2, 3}, std::vector<double>{1, 0, 6}) ==
        doctest::Approx(13.0 / 3.0));
  CHECK_THROWS_AS(curve_discrepancy(std::vector<double>{1}, std::vector<double>{1, 2}), ArgumentError);

  const Rectangle sq = Rectangle::cube(2, 1.0);
  const std::vector<double> levels = level_grid(-4.0, 4.0, 81);
  const FieldModel truth = GaussianModel{CovarianceModel::isotropic(200.0)};
  std::vector<double> values;
  for (double u : levels) values.push_back(expected_ec(truth, sq, u));
  const ECCurve curve = curve_of(levels, values);

  const std::vector<Candidate> cands{
      matched_candidate(parse_candidate("chisq:5"), 0.0, 1.0, 200.0),
      matched_candidate(parse_candidate("gaussian"), 0.0, 1.0, 200.0),
      matched_candidate(parse_candidate("chisq:3"), 0.0, 1.0, 200.0)};
  const auto ranked = identify_model(curve, cands, sq);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].index == 1);
  CHECK(ranked[0].label == "gaussian");
  CHECK(ranked[0].discrepancy == 0.0);
  CHECK(ranked[1].discrepancy <= ranked[2].discrepancy);

  // A chi-square curve ranks its own family first.
  std::vector<double> chi_values;
  for (double u : levels) chi_values.push_back(expected_ec(cands[0].model, sq, cands[0].model_level(u)));
  const auto chi_ranked = identify_model(curve_of(levels, chi_values), cands, sq);
  CHECK(chi_ranked[0].index == 0);
  CHECK(chi_ranked[0].discrepancy == 0.0);

  // Equal discrepancies keep candidate order.
  const std::vector<Candidate> twins{cands[0], cands[0], cands[0]};
  const auto tied = identify_model(curve, twins, sq);
  CHECK(tied[0].index == 0);
  CHECK(tied[1].index == 1);
  CHECK(tied[2].index == 2);

  CHECK_THROWS_AS(identify_model(curve, {}, sq), ArgumentError);
  const Candidate t = matched_candidate(parse_candidate("t:4"), 0.0, 1.0, 200.0);
  CHECK_THROWS_AS(identify_model(curve, {t}, sq), CapabilityError);
}

TEST_CASE("Monte-Carlo curves do not depend on the worker count") {
  const FieldModel m = ChiSquaredModel{2, CovarianceModel::isotropic(60.0)};
  const std::vector<double> levels = level_grid(0.0, 8.0, 33);
  MonteCarloOptions a;
  a.realisations = 7;
  a.seed = 77;
  a.jobs = 1;
  MonteCarloOptions b = a;
  b.jobs = 3;
  const MonteCarloCurve x = monte_carlo_ec(m, {64, 48}, 1.0 / 63, levels, a);
  const MonteCarloCurve y = monte_carlo_ec(m, {64, 48}, 1.0 / 63, levels, b);
  CHECK(x.mean == y.mean);
  CHECK(x.sd == y.sd);
  CHECK(x.realisations == 7);
  a.realisations = 1;
  CHECK_THROWS_AS(monte_carlo_ec(m, {64, 48}, 1.0 / 63, levels, a), ArgumentError);
}

TEST_CASE("Gaussian expected EC matches simulated lattice EC in 2-D") {
  const FieldModel m = GaussianModel{CovarianceModel::isotropic(100.0)};
  const std::size_t n = 128;
  const std::vector<double> levels = level_grid(-4.0, 4.0, 41);
  MonteCarloOptions opts;
  opts.realisations = 60;
  opts.seed = 31;
  const MonteCarloCurve mc = monte_carlo_ec(m, {n, n}, 1.0 / (n - 1), levels, opts);
  int within = 0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double se = std::max(mc.standard_error(k), 1.0 / opts.realisations);
    within += std::fabs(mc.mean[k] - expected_ec(m, Rectangle::cube(2, 1.0), levels[k])) <= 3.0 * se;
  }
  CHECK(within >= 39);
}

TEST_CASE("Gaussianised chi-square data prefers its own candidate") {
  const int k = 5;
  const std::size_t n = 128;
  const double delta = 1.0 / (n - 1);
  const FieldModel data_model = ChiSquaredModel{k, CovarianceModel::isotropic(50.0)};
  const ModelSimulator sim(data_model, {n, n}, delta);
  const std::vector<double> levels = level_grid(-3.0, 3.0, 61);

  constexpr int kData = 10;
  std::vector<double> mean_curve(levels.size(), 0.0);
  double mean = 0.0, var = 0.0, lam = 0.0;
  for (int r = 0; r < kData; ++r) {
    const LatticeField f = gaussianise(sim.sample(9000 + r), Gaussianisation::exact_chi2(k));
    const ECCurve c = ec_curve(f, levels);
    for (std::size_t i = 0; i < levels.size(); ++i) mean_curve[i] += c.values[i] / kData;
    const SpectralEstimate est = estimate_spectral_moments(f);
    mean += est.mean / kData;
    var += est.variance / kData;
    lam += est.lambda2() / kData;
  }
  const double lambda2 = lattice_corrected_lambda(lam, delta);

  IdentifyOptions opts;
  opts.shape = {n, n};
  opts.spacing = delta;
  opts.simulation.realisations = 40;
  const std::vector<Candidate> cands{
      matched_candidate(parse_candidate("gaussian"), mean, var, lambda2),
      matched_candidate(parse_candidate("gchisq:5"), mean, var, lambda2)};
  const auto ranked = identify_model(curve_of(levels, mean_curve), cands, Rectangle::cube(2, 1.0), opts);
  CHECK(ranked[0].label == "gchisq:5");
  CHECK(ranked[0].discrepancy * 2.0 < ranked[1].discrepancy);

  // A second call is served from the cache and gives the same ranking.
  const auto again = identify_model(curve_of(levels, mean_curve), cands, Rectangle::cube(2, 1.0), opts);
  CHECK(again[0].discrepancy == ranked[0].discrepancy);
}
