#pragma once

// Lattice random fields: stationary Gaussian simulation by circulant
// embedding, Gaussian-related transforms, Gaussianisation and spectral
// moment estimation.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "xkit/geom.hpp"

namespace xkit {

using Shape = std::vector<std::size_t>;

/// Samples of a field on a regular grid with spacing delta, row-major
/// (last axis fastest). Immutable after construction.
class LatticeField {
 public:
  LatticeField(Shape shape, double spacing, std::vector<double> values);

  int dim() const { return static_cast<int>(shape_.size()); }
  const Shape& shape() const { return shape_; }
  double spacing() const { return spacing_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Physical side lengths (m_i - 1) * delta of the sampled rectangle.
  Rectangle domain() const;

 private:
  Shape shape_;
  double spacing_;
  std::vector<double> values_;
};

/// Squared-exponential covariance C(x) = variance * exp(-x' L x / 2) with
/// L = lambda2 * I, or the supplied anisotropy matrix. lambda2 (and L) are
/// spectral moments of the unit-variance field f / sigma, so
/// E{(df/dx_i)^2} = variance * L_ii.
struct CovarianceModel {
  double variance = 1.0;
  double lambda2 = 1.0;
  std::optional<Eigen::MatrixXd> anisotropy;

  static CovarianceModel isotropic(double lambda2, double variance = 1.0);
  static CovarianceModel anisotropic(Eigen::MatrixXd lambda, double variance = 1.0);

  /// Second-order spectral moment matrix of f / sigma in `dim` dimensions.
  Eigen::MatrixXd spectral_matrix(int dim) const;
  bool is_isotropic() const;
  /// Throws DomainError unless variance > 0 and the matrix is SPD.
  void validate(int dim) const;
  double evaluate(std::span<const double> lag) const;
};

struct GaussianModel {
  CovarianceModel cov;
};
/// Sum of squares of k iid unit-variance Gaussian components.
struct ChiSquaredModel {
  int k;
  CovarianceModel cov;
};
/// x_1 sqrt(k-1) / |(x_2..x_k)|: a T field with k-1 degrees of freedom.
struct TModel {
  int k;
  CovarianceModel cov;
};
/// (m sum_1^n x_i^2) / (n sum_{n+1}^{n+m} x_i^2).
struct FModel {
  int n;
  int m;
  CovarianceModel cov;
};

using FieldModel = std::variant<GaussianModel, ChiSquaredModel, TModel, FModel>;

/// Number of Gaussian components the model is built from.
int component_count(const FieldModel& model);
const CovarianceModel& covariance_of(const FieldModel& model);
/// Short token such as "gaussian", "chisq:5", "t:4", "f:3:7".
std::string model_token(const FieldModel& model);

/// Seed of Gaussian component i of a realisation seeded with `seed`:
/// splitmix64(seed + (i + 1) * 0x9E3779B97F4A7C15).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Circulant-embedding sampler for one covariance on one grid. Building it
/// computes the embedding spectrum once; each sample costs one FFT.
/// Samples may be drawn concurrently from several threads.
class GaussianSampler {
 public:
  GaussianSampler(const CovarianceModel& cov, Shape shape, double spacing);
  ~GaussianSampler();
  GaussianSampler(GaussianSampler&&) noexcept;
  GaussianSampler& operator=(GaussianSampler&&) noexcept;
  GaussianSampler(const GaussianSampler&) = delete;
  GaussianSampler& operator=(const GaussianSampler&) = delete;

  LatticeField sample(std::uint64_t seed) const;
  /// Real and imaginary parts of one embedding draw: two independent
  /// realisations for the price of one transform. first == sample(seed).
  std::pair<LatticeField, LatticeField> sample_pair(std::uint64_t seed) const;

  const Shape& embedding_shape() const;
  /// Most negative embedding eigenvalue relative to the largest, before
  /// clipping (zero when none were negative).
  double negative_mass() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Advisory messages for grids that do not resolve or cover the
/// correlation length (delta sqrt(lambda) > 0.5, extent < 6 / sqrt(lambda)).
std::vector<std::string> simulation_warnings(const CovarianceModel& cov, const Shape& shape,
                                             double spacing);

LatticeField simulate_gaussian(const CovarianceModel& cov, const Shape& shape, double spacing,
                               std::uint64_t seed);

/// Reusable simulator for a field model; components share one sampler.
class ModelSimulator {
 public:
  ModelSimulator(const FieldModel& model, Shape shape, double spacing);
  LatticeField sample(std::uint64_t seed) const;
  const FieldModel& model() const { return model_; }

 private:
  FieldModel model_;
  GaussianSampler sampler_;
};

/// Gaussian models use `seed` directly; component i of a Gaussian-related
/// model uses derive_seed(seed, i).
LatticeField simulate_model(const FieldModel& model, const Shape& shape, double spacing,
                            std::uint64_t seed);

struct Gaussianisation {
  enum class Kind { empirical, exact_chi2 };
  Kind kind = Kind::empirical;
  int k = 0;

  static Gaussianisation empirical() { return {}; }
  static Gaussianisation exact_chi2(int dof) { return {Kind::exact_chi2, dof}; }
};

/// Pointwise Phi^{-1}(F(f(x))). Empirical mode uses F = rank / (n + 1)
/// with rank = #{values <= f(x)}; exact mode uses the chi2_k CDF.
LatticeField gaussianise(const LatticeField& field, Gaussianisation mode);

/// Variance and normalized spectral moments estimated from one field.
/// lambda(i,j) = mean over interior sites of D_i f D_j f / variance, with
/// D_i f = (f(x + e_i) - f(x - e_i)) / (2 delta). Products are not
/// mean-centred, so a ramp a*x_1 gives lambda(0,0) * variance == a^2.
struct SpectralEstimate {
  double mean = 0.0;
  double variance = 0.0;
  Eigen::MatrixXd lambda;

  /// trace(lambda) / N, the isotropic summary.
  double lambda2() const;
};

SpectralEstimate estimate_spectral_moments(const LatticeField& field);

struct FieldSummary {
  double mean, variance, min, max;
};
FieldSummary summarize(const LatticeField& field);

}  // namespace xkit
