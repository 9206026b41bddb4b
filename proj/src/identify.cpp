#include "xkit/identify.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "xkit/error.hpp"
#include "xkit/special.hpp"

namespace xkit {

namespace {

int parse_int(std::string_view s, std::string_view token) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw ArgumentError("malformed candidate token '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string key_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string cache_key(const Candidate& c, std::span<const double> levels,
                      const IdentifyOptions& o) {
  const CovarianceModel& cov = covariance_of(c.model);
  std::string key = model_token(c.model) + "|" + key_double(cov.variance) + "|" +
                    key_double(cov.lambda2);
  if (cov.anisotropy) {
    for (Eigen::Index i = 0; i < cov.anisotropy->size(); ++i) {
      key += "," + key_double(cov.anisotropy->data()[i]);
    }
  }
  key += "|";
  for (std::size_t m : o.shape) key += std::to_string(m) + "x";
  key += "|" + key_double(o.spacing) + "|" + std::to_string(o.simulation.realisations) + "|" +
         std::to_string(o.simulation.seed) + "|";
  for (double u : levels) key += key_double(u) + ",";
  return key;
}

std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, std::vector<double>>& curve_cache() {
  static std::map<std::string, std::vector<double>> cache;
  return cache;
}

}  // namespace

double MonteCarloCurve::standard_error(std::size_t i) const {
  return sd.at(i) / std::sqrt(static_cast<double>(realisations));
}

MonteCarloCurve monte_carlo_ec(const FieldModel& model, const Shape& shape, double spacing,
                               std::span<const double> levels, const MonteCarloOptions& options) {
  const std::size_t r_total = options.realisations;
  if (r_total < 2) throw ArgumentError("Monte-Carlo curves need at least two realisations");
  const ModelSimulator sim(model, shape, spacing);
  const std::size_t m = levels.size();
  std::vector<std::vector<double>> curves(r_total);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t r = next.fetch_add(1);
      if (r >= r_total) return;
      try {
        LatticeField f = sim.sample(options.seed + r);
        if (options.transform) f = gaussianise(f, *options.transform);
        curves[r] = ec_curve(f, levels).values;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = r_total;
        return;
      }
    }
  };
  const unsigned jobs = static_cast<unsigned>(
      std::clamp<std::size_t>(options.jobs == 0 ? 1 : options.jobs, 1, r_total));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  MonteCarloCurve out;
  out.levels.assign(levels.begin(), levels.end());
  out.mean.assign(m, 0.0);
  out.sd.assign(m, 0.0);
  out.realisations = r_total;
  for (std::size_t r = 0; r < r_total; ++r) {
    for (std::size_t i = 0; i < m; ++i) out.mean[i] += curves[r][i];
  }
  for (double& v : out.mean) v /= static_cast<double>(r_total);
  for (std::size_t r = 0; r < r_total; ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      const double d = curves[r][i] - out.mean[i];
      out.sd[i] += d * d;
    }
  }
  for (double& v : out.sd) v = std::sqrt(v / static_cast<double>(r_total - 1));
  return out;
}

std::string CandidateSpec::token() const {
  switch (family) {
    case CandidateFamily::gaussian:
      return "gaussian";
    case CandidateFamily::chisq:
      return "chisq:" + std::to_string(a);
    case CandidateFamily::gaussianised_chisq:
      return "gchisq:" + std::to_string(a);
    case CandidateFamily::t:
      return "t:" + std::to_string(a);
    case CandidateFamily::f:
      return "f:" + std::to_string(a) + ":" + std::to_string(b);
  }
  return "";
}

CandidateSpec parse_candidate(std::string_view token) {
  const auto parts = split(token, ':');
  const std::string_view name = parts[0];
  CandidateSpec spec;
  if (name == "gaussian" && parts.size() == 1) {
    spec.family = CandidateFamily::gaussian;
  } else if ((name == "chisq" || name == "gchisq" || name == "t") && parts.size() == 2) {
    spec.family = name == "chisq"    ? CandidateFamily::chisq
                  : name == "gchisq" ? CandidateFamily::gaussianised_chisq
                                     : CandidateFamily::t;
    spec.a = parse_int(parts[1], token);
    const int min_k = spec.family == CandidateFamily::t ? 2 : 1;
    if (spec.a < min_k) throw ArgumentError("degrees of freedom too small in '" + std::string(token) + "'");
  } else if (name == "f" && parts.size() == 3) {
    spec.family = CandidateFamily::f;
    spec.a = parse_int(parts[1], token);
    spec.b = parse_int(parts[2], token);
    if (spec.a < 1 || spec.b < 1) throw ArgumentError("degrees of freedom too small in '" + std::string(token) + "'");
  } else {
    throw ArgumentError("unknown candidate model '" + std::string(token) +
                        "' (expected gaussian, chisq:k, gchisq:k, t:k or f:n:m)");
  }
  return spec;
}

std::vector<CandidateSpec> parse_candidate_list(std::string_view list) {
  if (list.empty()) throw ArgumentError("candidate list is empty");
  std::vector<CandidateSpec> out;
  for (std::string_view part : split(list, ',')) out.push_back(parse_candidate(part));
  return out;
}

double gaussianised_chi2_lambda_factor(int k) {
  if (k < 3) {
    throw DomainError("the Gaussianised chi-square field with k=" + std::to_string(k) +
                      " has infinite derivative variance; need k >= 3");
  }
  // Integrate over t with y = t^2, which removes the y^{k/2-2} behaviour at
  // the origin. The integrand still vanishes only like 1/log(1/t) there, so
  // the first panel is split geometrically towards zero.
  const double t_max = std::sqrt(k + 40.0 * std::sqrt(2.0 * k) + 40.0);
  const Quadrature q = gauss_legendre(12);
  auto integrand = [k](double t) {
    const double y = t * t;
    const double cdf = chi2_cdf(y, k);
    const double tail = chi2_tail(y, k);
    if (!(cdf > 0.0) || !(tail > 0.0)) return 0.0;
    const double h = cdf <= 0.5 ? normal_quantile(cdf) : normal_upper_quantile(tail);
    const double p_y = chi2_pdf(y, k);
    const double ratio = p_y / normal_pdf(h);
    return y * p_y * ratio * ratio * 2.0 * t;
  };
  auto panel = [&](double a, double b) {
    double s = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
      s += 0.5 * (b - a) * q.weights[i] * integrand(a + 0.5 * (b - a) * (1.0 + q.nodes[i]));
    }
    return s;
  };
  constexpr int kPanels = 600;
  const double width = t_max / kPanels;
  double sum = 0.0;
  for (double hi = width; hi > 1e-30; hi *= 0.5) sum += panel(0.5 * hi, hi);
  for (int p = 1; p < kPanels; ++p) sum += panel(p * width, (p + 1) * width);
  return 4.0 * sum;
}

double lattice_corrected_lambda(double estimated, double spacing) {
  if (!(estimated > 0.0) || !(spacing > 0.0)) {
    throw EstimationError("lattice correction needs a positive estimate and spacing");
  }
  const double x = 2.0 * spacing * spacing * estimated;
  if (!(x < 1.0)) {
    throw EstimationError("estimated lambda2 " + std::to_string(estimated) +
                          " is too large for any squared-exponential field at spacing " +
                          std::to_string(spacing));
  }
  return -std::log1p(-x) / (2.0 * spacing * spacing);
}

Candidate matched_candidate(const CandidateSpec& spec, double mean, double variance,
                            double lambda2) {
  if (!(variance > 0.0) || !(lambda2 > 0.0)) {
    throw EstimationError("matched candidates need positive variance and lambda2");
  }
  const double sd = std::sqrt(variance);
  Candidate c;
  c.label = spec.token();
  switch (spec.family) {
    case CandidateFamily::gaussian:
      c.model = GaussianModel{CovarianceModel::isotropic(lambda2, variance)};
      c.level_offset = -mean;
      break;
    case CandidateFamily::chisq: {
      // A chi2_k field has variance 2k and normalized lambda2 twice that of
      // its components.
      const int k = spec.a;
      c.model = ChiSquaredModel{k, CovarianceModel::isotropic(0.5 * lambda2)};
      c.level_scale = std::sqrt(2.0 * k) / sd;
      c.level_offset = k - mean * c.level_scale;
      break;
    }
    case CandidateFamily::gaussianised_chisq: {
      const int k = spec.a;
      c.model = ChiSquaredModel{k, CovarianceModel::isotropic(lambda2 / gaussianised_chi2_lambda_factor(k))};
      c.level_scale = 1.0 / sd;
      c.level_offset = -mean / sd;
      c.gaussianised = true;
      break;
    }
    case CandidateFamily::t:
      c.model = TModel{spec.a, CovarianceModel::isotropic(lambda2)};
      break;
    case CandidateFamily::f:
      c.model = FModel{spec.a, spec.b, CovarianceModel::isotropic(lambda2)};
      break;
  }
  return c;
}

Candidate supplied_candidate(const CandidateSpec& spec, const CovarianceModel& cov) {
  Candidate c;
  c.label = spec.token();
  CovarianceModel unit = cov;
  unit.variance = 1.0;
  switch (spec.family) {
    case CandidateFamily::gaussian:
      c.model = GaussianModel{cov};
      break;
    case CandidateFamily::chisq:
      c.model = ChiSquaredModel{spec.a, unit};
      break;
    case CandidateFamily::gaussianised_chisq:
      c.model = ChiSquaredModel{spec.a, unit};
      c.gaussianised = true;
      break;
    case CandidateFamily::t:
      c.model = TModel{spec.a, unit};
      break;
    case CandidateFamily::f:
      c.model = FModel{spec.a, spec.b, unit};
      break;
  }
  return c;
}

double curve_discrepancy(std::span<const double> empirical, std::span<const double> expected) {
  if (empirical.size() != expected.size()) throw ArgumentError("curves differ in length");
  if (empirical.empty()) throw ArgumentError("curves are empty");
  double s = 0.0;
  for (std::size_t i = 0; i < empirical.size(); ++i) {
    const double d = empirical[i] - expected[i];
    s += d * d;
  }
  return s / static_cast<double>(empirical.size());
}

std::vector<double> candidate_expected_curve(const Candidate& candidate, const Rectangle& domain,
                                             std::span<const double> levels,
                                             const IdentifyOptions& options) {
  if (!(candidate.level_scale > 0.0)) throw ArgumentError("level scale must be positive");
  std::vector<double> model_levels;
  model_levels.reserve(levels.size());
  for (double u : levels) model_levels.push_back(candidate.model_level(u));

  if (!candidate.gaussianised) {
    std::vector<double> out;
    out.reserve(levels.size());
    for (double y : model_levels) out.push_back(expected_ec(candidate.model, domain, y));
    return out;
  }

  const auto* chi = std::get_if<ChiSquaredModel>(&candidate.model);
  if (!chi) throw CapabilityError("Gaussianised candidates are implemented for chi-square models");
  if (options.shape.empty() || !(options.spacing > 0.0)) {
    throw ArgumentError("Gaussianised candidates need a simulation grid");
  }
  const std::string key = cache_key(candidate, model_levels, options);
  {
    std::lock_guard lock(cache_mutex());
    const auto it = curve_cache().find(key);
    if (it != curve_cache().end()) return it->second;
  }
  MonteCarloOptions mc = options.simulation;
  mc.transform = Gaussianisation::exact_chi2(chi->k);
  std::vector<double> mean =
      monte_carlo_ec(candidate.model, options.shape, options.spacing, model_levels, mc).mean;
  std::lock_guard lock(cache_mutex());
  curve_cache().emplace(key, mean);
  return mean;
}

std::vector<RankedCandidate> identify_model(const ECCurve& curve,
                                            const std::vector<Candidate>& candidates,
                                            const Rectangle& domain,
                                            const IdentifyOptions& options) {
  if (candidates.empty()) throw ArgumentError("identify_model needs at least one candidate");
  curve.validate();
  std::vector<RankedCandidate> ranked;
  ranked.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto expected = candidate_expected_curve(candidates[i], domain, curve.levels, options);
    ranked.push_back({i, candidates[i].label, curve_discrepancy(curve.values, expected)});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.discrepancy < b.discrepancy;
  });
  return ranked;
}

}  // namespace xkit
