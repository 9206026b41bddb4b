#pragma once

// Monte-Carlo EC curves and model identification by comparing an empirical
// EC curve with each candidate's expected curve.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xkit/eec.hpp"
#include "xkit/excursion.hpp"
#include "xkit/field.hpp"

namespace xkit {

struct MonteCarloOptions {
  std::size_t realisations = 20;
  /// Realisation r is simulated with seed + r.
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  /// Applied to each realisation before measuring its EC curve.
  std::optional<Gaussianisation> transform;
};

struct MonteCarloCurve {
  std::vector<double> levels;
  std::vector<double> mean;
  /// Sample standard deviation across realisations (n - 1 denominator).
  std::vector<double> sd;
  std::size_t realisations = 0;

  /// sd / sqrt(realisations) at level i.
  double standard_error(std::size_t i) const;
};

/// Mean and SD of empirical EC curves. Per-realisation curves are reduced
/// in realisation order, so results do not depend on `jobs`.
MonteCarloCurve monte_carlo_ec(const FieldModel& model, const Shape& shape, double spacing,
                               std::span<const double> levels, const MonteCarloOptions& options);

enum class CandidateFamily { gaussian, chisq, gaussianised_chisq, t, f };

/// A parsed candidate token: "gaussian", "chisq:k", "gchisq:k" (Gaussianised
/// chi-square), "t:k" or "f:n:m".
struct CandidateSpec {
  CandidateFamily family = CandidateFamily::gaussian;
  int a = 0;
  int b = 0;

  std::string token() const;
};

/// Throws ArgumentError for an unknown or malformed token.
CandidateSpec parse_candidate(std::string_view token);
std::vector<CandidateSpec> parse_candidate_list(std::string_view list);

/// A model with the affine map taking data levels to model levels,
/// model_level = level_offset + level_scale * data_level.
struct Candidate {
  std::string label;
  FieldModel model;
  double level_offset = 0.0;
  double level_scale = 1.0;
  /// Expected curve is the simulated mean EC of the Gaussianised model.
  bool gaussianised = false;

  double model_level(double data_level) const { return level_offset + level_scale * data_level; }
};

/// 4 E{Y h'(Y)^2} for Y ~ chi2_k and h = Phi^{-1} o F_k: the ratio of the
/// Gaussianised field's second spectral moment to the components'. Finite
/// only for k >= 3; smaller k throws DomainError.
double gaussianised_chi2_lambda_factor(int k);

/// Inverts the central-difference bias of a squared-exponential field on a
/// lattice: the estimator's mean is (1 - exp(-2 lambda delta^2)) / (2 delta^2).
/// Throws EstimationError when no lambda reproduces the estimate.
double lattice_corrected_lambda(double estimated, double spacing);

/// Candidate whose mean, variance and second spectral moment match the
/// supplied estimates (lambda2 normalized by the variance).
Candidate matched_candidate(const CandidateSpec& spec, double mean, double variance,
                            double lambda2);

/// Candidate taking data levels as model levels, with components (or the
/// Gaussian field) of covariance `cov`.
Candidate supplied_candidate(const CandidateSpec& spec, const CovarianceModel& cov);

struct IdentifyOptions {
  /// Grid used to simulate expected curves of Gaussianised candidates.
  Shape shape;
  double spacing = 0.0;
  MonteCarloOptions simulation{100, 0x5eed, 1, std::nullopt};
};

struct RankedCandidate {
  std::size_t index;
  std::string label;
  double discrepancy;
};

/// Mean squared difference between two curves on the same levels.
double curve_discrepancy(std::span<const double> empirical, std::span<const double> expected);

/// The candidate's expected EC at each data level. Closed forms serve
/// Gaussian and chi-square models; Gaussianised candidates are simulated
/// and cached per (model, grid, levels, schedule).
std::vector<double> candidate_expected_curve(const Candidate& candidate, const Rectangle& domain,
                                             std::span<const double> levels,
                                             const IdentifyOptions& options);

/// Candidates ordered by ascending discrepancy; ties keep input order.
/// Throws ArgumentError for an empty candidate list.
std::vector<RankedCandidate> identify_model(const ECCurve& curve,
                                            const std::vector<Candidate>& candidates,
                                            const Rectangle& domain,
                                            const IdentifyOptions& options = {});

}  // namespace xkit
