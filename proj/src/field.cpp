#include "xkit/field.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

#include "xkit/error.hpp"
#include "xkit/special.hpp"

namespace xkit {

namespace {

// FFTW's planner is not re-entrant; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Open-interval uniform from the top 53 bits; independent of the standard
// library's distribution implementations so streams are portable.
double uniform_open(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data) throw SimulationError("FFT buffer allocation failed");
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

fftw_plan make_plan(const Shape& embed, fftw_complex* buf) {
  std::vector<int> dims(embed.begin(), embed.end());
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_plan p = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buf, buf, FFTW_FORWARD,
                              FFTW_ESTIMATE);
  if (!p) throw SimulationError("FFTW could not create a plan");
  return p;
}

void destroy_plan(fftw_plan p) {
  if (!p) return;
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(p);
}

// Advances a row-major multi-index; returns false after the last one.
bool next_index(std::vector<std::size_t>& idx, const Shape& shape) {
  for (std::size_t a = shape.size(); a-- > 0;) {
    if (++idx[a] < shape[a]) return true;
    idx[a] = 0;
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------

LatticeField::LatticeField(Shape shape, double spacing, std::vector<double> values)
    : shape_(std::move(shape)), spacing_(spacing), values_(std::move(values)) {
  if (shape_.empty() || shape_.size() > 3) {
    throw ArgumentError("LatticeField: dimension must be 1, 2 or 3");
  }
  for (std::size_t m : shape_) {
    if (m < 1) throw ArgumentError("LatticeField: every axis needs at least one point");
  }
  if (!(spacing_ > 0.0) || !std::isfinite(spacing_)) {
    throw ArgumentError("LatticeField: spacing must be positive");
  }
  if (product(shape_) != values_.size()) {
    throw ArgumentError("LatticeField: shape and value count disagree");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw ArgumentError("LatticeField: non-finite sample");
  }
}

Rectangle LatticeField::domain() const {
  std::vector<double> sides;
  for (std::size_t m : shape_) {
    if (m < 2) throw DomainError("LatticeField::domain: every axis needs at least two points");
    sides.push_back(static_cast<double>(m - 1) * spacing_);
  }
  return Rectangle(std::move(sides));
}

// ---------------------------------------------------------------------------

CovarianceModel CovarianceModel::isotropic(double lambda2, double variance) {
  CovarianceModel c;
  c.variance = variance;
  c.lambda2 = lambda2;
  return c;
}

CovarianceModel CovarianceModel::anisotropic(Eigen::MatrixXd lambda, double variance) {
  CovarianceModel c;
  c.variance = variance;
  c.lambda2 = lambda.trace() / static_cast<double>(std::max<Eigen::Index>(lambda.rows(), 1));
  c.anisotropy = std::move(lambda);
  return c;
}

Eigen::MatrixXd CovarianceModel::spectral_matrix(int dim) const {
  if (anisotropy) {
    if (anisotropy->rows() != dim || anisotropy->cols() != dim) {
      throw ArgumentError("spectral matrix is " + std::to_string(anisotropy->rows()) + "x" +
                          std::to_string(anisotropy->cols()) + " but the domain has dimension " +
                          std::to_string(dim));
    }
    return *anisotropy;
  }
  return lambda2 * Eigen::MatrixXd::Identity(dim, dim);
}

bool CovarianceModel::is_isotropic() const {
  if (!anisotropy) return true;
  const Eigen::MatrixXd& a = *anisotropy;
  const double d = a(0, 0);
  const Eigen::MatrixXd iso = d * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  return (a - iso).cwiseAbs().maxCoeff() <= 1e-14 * std::fabs(d);
}

void CovarianceModel::validate(int dim) const {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw DomainError("covariance variance must be positive");
  }
  if (!anisotropy) {
    if (!(lambda2 > 0.0) || !std::isfinite(lambda2)) {
      throw DomainError("second spectral moment lambda2 must be positive");
    }
    return;
  }
  const Eigen::MatrixXd l = spectral_matrix(dim);
  if ((l - l.transpose()).cwiseAbs().maxCoeff() > 1e-12 * l.cwiseAbs().maxCoeff()) {
    throw DomainError("spectral moment matrix must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(l);
  if (llt.info() != Eigen::Success) {
    throw DomainError("spectral moment matrix must be positive definite");
  }
}

double CovarianceModel::evaluate(std::span<const double> lag) const {
  const int n = static_cast<int>(lag.size());
  double q = 0.0;
  if (anisotropy) {
    const Eigen::MatrixXd& a = *anisotropy;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) q += lag[i] * a(i, j) * lag[j];
  } else {
    for (double x : lag) q += x * x;
    q *= lambda2;
  }
  return variance * std::exp(-0.5 * q);
}

int component_count(const FieldModel& model) {
  return std::visit(
      [](const auto& m) -> int {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, GaussianModel>) return 1;
        else if constexpr (std::is_same_v<M, FModel>) return m.n + m.m;
        else return m.k;
      },
      model);
}

const CovarianceModel& covariance_of(const FieldModel& model) {
  return std::visit([](const auto& m) -> const CovarianceModel& { return m.cov; }, model);
}

std::string model_token(const FieldModel& model) {
  return std::visit(
      [](const auto& m) -> std::string {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, GaussianModel>) return "gaussian";
        else if constexpr (std::is_same_v<M, ChiSquaredModel>) return "chisq:" + std::to_string(m.k);
        else if constexpr (std::is_same_v<M, TModel>) return "t:" + std::to_string(m.k);
        else return "f:" + std::to_string(m.n) + ":" + std::to_string(m.m);
      },
      model);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

// ---------------------------------------------------------------------------

struct GaussianSampler::Impl {
  Shape shape;
  double spacing = 0.0;
  Shape embed;
  std::size_t total = 0;
  std::vector<double> amplitude;  // sqrt(eigenvalue / total)
  double negative_mass = 0.0;
  fftw_plan plan = nullptr;

  ~Impl() { destroy_plan(plan); }
};

GaussianSampler::GaussianSampler(const CovarianceModel& cov, Shape shape, double spacing)
    : impl_(std::make_unique<Impl>()) {
  if (shape.empty() || shape.size() > 3) throw ArgumentError("sampler: dimension must be 1..3");
  if (!(spacing > 0.0)) throw ArgumentError("sampler: spacing must be positive");
  for (std::size_t m : shape) {
    if (m < 1) throw ArgumentError("sampler: every axis needs at least one point");
  }
  const int dim = static_cast<int>(shape.size());
  cov.validate(dim);
  impl_->shape = shape;
  impl_->spacing = spacing;

  Shape embed(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a) {
    embed[a] = shape[a] <= 1 ? 1 : next_pow2(2 * (shape[a] - 1));
  }

  // Eigenvalues this small relative to the largest are rounding noise of
  // the transform and are clipped to zero.
  constexpr double kTolerance = 1e-9;
  std::vector<double> lag(shape.size());
  std::vector<std::size_t> idx(shape.size());
  for (;;) {
    const std::size_t total = product(embed);
    FftwBuffer buf(total);
    fftw_plan plan = make_plan(embed, buf.data);

    std::fill(idx.begin(), idx.end(), 0);
    std::size_t flat = 0;
    do {
      for (std::size_t a = 0; a < embed.size(); ++a) {
        // Signed minimum-image lag keeps cross terms of anisotropic models.
        const auto i = static_cast<double>(idx[a]);
        const auto e = static_cast<double>(embed[a]);
        lag[a] = (2 * idx[a] <= embed[a] ? i : i - e) * spacing;
      }
      buf.data[flat][0] = cov.evaluate(lag);
      buf.data[flat][1] = 0.0;
      ++flat;
    } while (next_index(idx, embed));
    fftw_execute(plan);

    double max_eig = 0.0;
    double min_eig = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      max_eig = std::max(max_eig, buf.data[i][0]);
      min_eig = std::min(min_eig, buf.data[i][0]);
    }
    if (min_eig >= -kTolerance * max_eig) {
      impl_->embed = embed;
      impl_->total = total;
      impl_->negative_mass = max_eig > 0.0 ? -min_eig / max_eig : 0.0;
      impl_->amplitude.resize(total);
      for (std::size_t i = 0; i < total; ++i) {
        impl_->amplitude[i] = std::sqrt(std::max(buf.data[i][0], 0.0) / static_cast<double>(total));
      }
      impl_->plan = plan;
      return;
    }
    destroy_plan(plan);

    bool grown = false;
    for (std::size_t a = 0; a < embed.size(); ++a) {
      if (shape[a] <= 1) continue;
      if (2 * embed[a] > 8 * shape[a]) {
        std::ostringstream msg;
        msg << "circulant embedding is not nonnegative definite at the padding cap: "
               "min/max eigenvalue ratio "
            << min_eig / max_eig << " with embedding";
        for (std::size_t e : embed) msg << ' ' << e;
        msg << "; enlarge the grid relative to the correlation length";
        throw SimulationError(msg.str());
      }
      embed[a] *= 2;
      grown = true;
    }
    if (!grown) throw SimulationError("circulant embedding failed on a single-point grid");
  }
}

GaussianSampler::~GaussianSampler() = default;
GaussianSampler::GaussianSampler(GaussianSampler&&) noexcept = default;
GaussianSampler& GaussianSampler::operator=(GaussianSampler&&) noexcept = default;

const Shape& GaussianSampler::embedding_shape() const { return impl_->embed; }
double GaussianSampler::negative_mass() const { return impl_->negative_mass; }

std::pair<LatticeField, LatticeField> GaussianSampler::sample_pair(std::uint64_t seed) const {
  const Impl& s = *impl_;
  FftwBuffer buf(s.total);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < s.total; ++i) {
    const double u1 = uniform_open(rng);
    const double u2 = uniform_open(rng);
    const double r = std::sqrt(-2.0 * std::log(u1)) * s.amplitude[i];
    buf.data[i][0] = r * std::cos(2.0 * kPi * u2);
    buf.data[i][1] = r * std::sin(2.0 * kPi * u2);
  }
  fftw_execute_dft(s.plan, buf.data, buf.data);

  const std::size_t n = product(s.shape);
  std::vector<double> re(n), im(n);
  std::vector<std::size_t> idx(s.shape.size(), 0);
  std::size_t flat = 0;
  do {
    std::size_t e = 0;
    for (std::size_t a = 0; a < s.shape.size(); ++a) e = e * s.embed[a] + idx[a];
    re[flat] = buf.data[e][0];
    im[flat] = buf.data[e][1];
    ++flat;
  } while (next_index(idx, s.shape));
  return {LatticeField(s.shape, s.spacing, std::move(re)),
          LatticeField(s.shape, s.spacing, std::move(im))};
}

LatticeField GaussianSampler::sample(std::uint64_t seed) const {
  return sample_pair(seed).first;
}

std::vector<std::string> simulation_warnings(const CovarianceModel& cov, const Shape& shape,
                                             double spacing) {
  std::vector<std::string> out;
  const Eigen::MatrixXd l = cov.spectral_matrix(static_cast<int>(shape.size()));
  for (std::size_t a = 0; a < shape.size(); ++a) {
    if (shape[a] < 2) continue;
    const double root = std::sqrt(l(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)));
    const double extent = static_cast<double>(shape[a] - 1) * spacing;
    if (spacing * root > 0.5) {
      out.push_back("axis " + std::to_string(a) + ": spacing * sqrt(lambda) = " +
                    std::to_string(spacing * root) + " > 0.5 under-resolves the field");
    }
    if (extent * root < 6.0) {
      out.push_back("axis " + std::to_string(a) + ": extent covers only " +
                    std::to_string(extent * root) + " < 6 correlation lengths");
    }
  }
  return out;
}

LatticeField simulate_gaussian(const CovarianceModel& cov, const Shape& shape, double spacing,
                               std::uint64_t seed) {
  return GaussianSampler(cov, shape, spacing).sample(seed);
}

// ---------------------------------------------------------------------------

namespace {

// Validates the model and forces unit variance on the Gaussian components
// of Gaussian-related models.
FieldModel normalized_model(FieldModel model) {
  std::visit(
      [](auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, ChiSquaredModel>) {
          if (m.k < 1) throw DomainError("chi-square model needs k >= 1");
        } else if constexpr (std::is_same_v<M, TModel>) {
          if (m.k < 2) throw DomainError("T model needs k >= 2 components");
        } else if constexpr (std::is_same_v<M, FModel>) {
          if (m.n < 1 || m.m < 1) throw DomainError("F model needs n, m >= 1");
        }
        if constexpr (!std::is_same_v<M, GaussianModel>) m.cov.variance = 1.0;
      },
      model);
  return model;
}

}  // namespace

ModelSimulator::ModelSimulator(const FieldModel& model, Shape shape, double spacing)
    : model_(normalized_model(model)),
      sampler_(covariance_of(model_), std::move(shape), spacing) {}

LatticeField ModelSimulator::sample(std::uint64_t seed) const {
  if (std::holds_alternative<GaussianModel>(model_)) return sampler_.sample(seed);

  const int k = component_count(model_);
  std::vector<LatticeField> g;
  g.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) g.push_back(sampler_.sample(derive_seed(seed, static_cast<std::uint64_t>(i))));
  const std::size_t n = g.front().size();
  std::vector<double> out(n);

  auto sum_sq = [&](int from, int to, std::size_t x) {
    double s = 0.0;
    for (int i = from; i < to; ++i) s += g[i][x] * g[i][x];
    return s;
  };

  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        for (std::size_t x = 0; x < n; ++x) {
          if constexpr (std::is_same_v<M, ChiSquaredModel>) {
            out[x] = sum_sq(0, m.k, x);
          } else if constexpr (std::is_same_v<M, TModel>) {
            const double den = sum_sq(1, m.k, x);
            if (den == 0.0) throw SimulationError("T field denominator vanished");
            out[x] = g[0][x] * std::sqrt(static_cast<double>(m.k - 1)) / std::sqrt(den);
          } else if constexpr (std::is_same_v<M, FModel>) {
            const double den = static_cast<double>(m.n) * sum_sq(m.n, m.n + m.m, x);
            if (den == 0.0) throw SimulationError("F field denominator vanished");
            out[x] = static_cast<double>(m.m) * sum_sq(0, m.n, x) / den;
          }
        }
      },
      model_);
  const LatticeField& first = g.front();
  return LatticeField(first.shape(), first.spacing(), std::move(out));
}

LatticeField simulate_model(const FieldModel& model, const Shape& shape, double spacing,
                            std::uint64_t seed) {
  return ModelSimulator(model, shape, spacing).sample(seed);
}

// ---------------------------------------------------------------------------

LatticeField gaussianise(const LatticeField& field, Gaussianisation mode) {
  const std::span<const double> v = field.values();
  const std::size_t n = v.size();
  std::vector<double> out(n);
  if (mode.kind == Gaussianisation::Kind::empirical) {
    if (n < 100) throw ArgumentError("empirical gaussianisation needs at least 100 samples");
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) {
      throw DomainError("empirical gaussianisation of a constant field is degenerate");
    }
    const double denom = static_cast<double>(n) + 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto rank = std::upper_bound(sorted.begin(), sorted.end(), v[i]) - sorted.begin();
      out[i] = normal_quantile(static_cast<double>(rank) / denom);
    }
  } else {
    if (mode.k < 1) throw DomainError("exact chi-square gaussianisation needs k >= 1");
    constexpr double kFloor = std::numeric_limits<double>::min();
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] < 0.0) throw DomainError("exact chi-square gaussianisation of a negative value");
      const double lower = chi2_cdf(v[i], mode.k);
      if (lower <= 0.5) {
        out[i] = normal_quantile(std::max(lower, kFloor));
      } else {
        out[i] = normal_upper_quantile(std::max(chi2_tail(v[i], mode.k), kFloor));
      }
    }
  }
  return LatticeField(field.shape(), field.spacing(), std::move(out));
}

double SpectralEstimate::lambda2() const {
  return lambda.trace() / static_cast<double>(lambda.rows());
}

SpectralEstimate estimate_spectral_moments(const LatticeField& field) {
  const Shape& shape = field.shape();
  const int dim = field.dim();
  for (std::size_t m : shape) {
    if (m < 3) throw EstimationError("spectral moment estimation needs >= 3 points per axis");
  }
  const std::span<const double> v = field.values();
  const std::size_t n = v.size();

  SpectralEstimate est;
  est.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - est.mean) * (x - est.mean);
  est.variance = ss / static_cast<double>(n - 1);
  if (!(est.variance > 0.0)) throw EstimationError("field is constant; variance is zero");

  std::vector<std::size_t> stride(shape.size(), 1);
  for (std::size_t a = shape.size() - 1; a-- > 0;) stride[a] = stride[a + 1] * shape[a + 1];

  // Interior sites only: one layer dropped on every side of every axis.
  Shape inner(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a) inner[a] = shape[a] - 2;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd d(dim);
  std::vector<std::size_t> idx(shape.size(), 0);
  std::size_t count = 0;
  const double inv2d = 1.0 / (2.0 * field.spacing());
  do {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < shape.size(); ++a) flat += (idx[a] + 1) * stride[a];
    for (int a = 0; a < dim; ++a) d[a] = (v[flat + stride[a]] - v[flat - stride[a]]) * inv2d;
    acc.noalias() += d * d.transpose();
    ++count;
  } while (next_index(idx, inner));

  est.lambda = acc / (static_cast<double>(count) * est.variance);
  return est;
}

FieldSummary summarize(const LatticeField& field) {
  const std::span<const double> v = field.values();
  FieldSummary s{};
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.variance = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

}  // namespace xkit
