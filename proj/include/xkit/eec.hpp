#pragma once

// Expected Lipschitz-Killing curvatures and Euler characteristics of
// excursion sets, their high-level asymptotics, the tail-probability
// approximation and threshold selection.

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xkit/excursion.hpp"
#include "xkit/field.hpp"
#include "xkit/geom.hpp"

namespace xkit {

/// sum_{j=0}^{N-i} [i+j, j] lambda2^{(i+j)/2} (2 pi)^{-j/2} L_{i+j}(M) M_j(D)
/// for a unit-variance isotropic field with Euclidean LKCs of M.
double expected_lkc_isotropic(const LkcVector& lkcs, const GmfSeries& gmfs, double lambda2, int i);

/// sum_{j=0}^{N-i} [i+j, j] (2 pi)^{-j/2} L_{i+j}(M) M_j(D) with LKCs already
/// measured in the metric induced by the field.
double expected_lkc_general(const LkcVector& lkcs, const GmfSeries& gmfs, int i);

/// Expected EC of {f >= u} over a rectangle for an isotropic Gaussian field
/// with variance sigma2 and lambda2 = E{(df/dx_i)^2} (not normalized).
double expected_ec_gaussian_rectangle(const Rectangle& rect, double sigma2, double lambda2, double u);

/// LKCs of a rectangle in the metric of a stationary unit-variance field:
/// L_k = sum over k-faces J through the origin of |J| det(Lambda_J)^{1/2}.
/// Throws ArgumentError unless Lambda is symmetric positive definite.
LkcVector stationary_rectangle_lkcs(const Rectangle& rect, const Eigen::MatrixXd& lambda);

double expected_ec_stationary_rectangle(const Rectangle& rect, const Eigen::MatrixXd& lambda,
                                        double u);

/// Spectral moment matrix at a point of the rectangle.
using SpectralFunction = std::function<Eigen::MatrixXd(std::span<const double>)>;

/// L_N = integral over the rectangle of det(Lambda(x))^{1/2}, by
/// tensor-product Gauss-Legendre quadrature refined until the relative
/// change is <= 1e-8. Throws NumericError if that is not reached.
double top_lkc_integral(const Rectangle& rect, const SpectralFunction& lambda);

/// Leading high-level term [N, N-i] (2 pi)^{-(N-i)/2} L_N M_{N-i}([u, inf)).
double expected_lkc_high_level(double top_lkc, int dim, double u, int i);
double expected_lkc_high_level(const Rectangle& rect, const SpectralFunction& lambda, double u,
                               int i);

/// Gauss-Legendre nodes and weights on [-1, 1].
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_legendre(int n);

/// E{L_i(A_u)} for a field model over a rectangle. Gaussian models may be
/// anisotropic; chi-square models use the component covariance and treat
/// levels below 0 as 0. T and F models throw CapabilityError.
double expected_lkc(const FieldModel& model, const Rectangle& rect, double u, int i);
double expected_ec(const FieldModel& model, const Rectangle& rect, double u);

ECCurve expected_curve(const FieldModel& model, const Rectangle& rect,
                       std::span<const double> levels, int order = 0);

struct EecPeak {
  double level;
  double value;
};

/// The last stationary point of the expected EC on the scan range
/// [0, 20] (chi-square: [0, max(20, k + 20 sqrt(2k))]) at step 0.01,
/// refined by golden-section search. Falls back to the scan start when the
/// derivative never changes sign.
EecPeak eec_peak(const FieldModel& model, const Rectangle& rect);

struct ThresholdResult {
  double alpha;
  double u_star;
  double eec_at_u;
  std::optional<double> error_bound;
  EecPeak peak;
};

/// Solves expected EC(u) = alpha on the decreasing branch past the peak to
/// |EEC - alpha| <= 1e-10. alpha outside (0, 0.5) throws DomainError;
/// alpha above the peak value throws NoSolutionError.
ThresholdResult threshold(const FieldModel& model, const Rectangle& rect, double alpha);

/// exp(-u^2 (1 + 1/sigma_c^2) / 2) with sigma_c^2 = 3 lambda2^2 - 1, the
/// fourth covariance derivative at 0 minus one. Available for isotropic
/// Gaussian models (levels standardized by sigma) with sigma_c^2 > 0.
std::optional<double> ec_heuristic_error_bound(const FieldModel& model, double u);

struct ExcursionProbability {
  double approx;
  std::optional<double> error_bound;
  /// u lies below the EEC peak, where the approximation is not meaningful.
  bool below_peak;
  std::vector<std::string> warnings;
};

ExcursionProbability excursion_probability(const FieldModel& model, const Rectangle& rect,
                                           double u);

}  // namespace xkit
