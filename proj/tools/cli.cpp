#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "xkit/eec.hpp"
#include "xkit/error.hpp"
#include "xkit/excursion.hpp"
#include "xkit/field.hpp"
#include "xkit/field_io.hpp"
#include "xkit/identify.hpp"

namespace xkit::cli {

namespace {

using Meta = std::vector<std::pair<std::string, std::string>>;

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

double parse_number(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ArgumentError("malformed number '" + s + "' in " + what);
  }
  return v;
}

std::vector<double> parse_numbers(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& p : split(s, ',')) out.push_back(parse_number(p, what));
  return out;
}

Shape parse_shape(const std::string& s) {
  Shape shape;
  for (const auto& p : split(s, ',')) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), v);
    if (p.empty() || ec != std::errc() || ptr != p.data() + p.size() || v == 0) {
      throw ArgumentError("malformed shape '" + s + "' (expected e.g. 256,256)");
    }
    shape.push_back(v);
  }
  if (shape.empty() || shape.size() > 3) throw ArgumentError("shape must have 1 to 3 axes");
  return shape;
}

// Config files hold key=value lines; '#' starts a comment. A file carrying a
// "# command=" line is a run record written by this tool: then only its
// "# key=value" lines are read and everything else is output.
struct Config {
  std::optional<std::string> command;
  Meta entries;
};

Config read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read config file " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(trim(line));
  bool record = false;
  for (const auto& l : lines) record = record || l.rfind("# command=", 0) == 0;

  Config cfg;
  for (const auto& l : lines) {
    std::string body;
    if (record) {
      if (l.rfind("# ", 0) != 0) continue;
      body = l.substr(2);
    } else {
      if (l.empty() || l[0] == '#') continue;
      body = l;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      if (record) continue;
      throw ArgumentError("config line '" + l + "' is not key=value");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ArgumentError("config line '" + l + "' has an empty key");
    if (key == "command") {
      cfg.command = value;
    } else {
      cfg.entries.emplace_back(key, value);
    }
  }
  return cfg;
}

void write_meta(std::ostream& out, const Meta& meta) {
  for (const auto& [k, v] : meta) out << "# " << k << '=' << v << '\n';
}

// Sends text to --out when given, else to the stream.
void emit(const std::string& path, std::ostream& out, const std::string& text) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f << text;
  f.flush();
  if (!f) throw FormatError("failed writing " + path);
}

// Options shared by the commands that evaluate a model over a rectangle.
struct ModelArgs {
  std::string model = "gaussian";
  double lambda2 = 1.0;
  double variance = 1.0;
  std::string spectral_matrix;

  void add(CLI::App* app) {
    app->add_option("--model", model, "gaussian | chisq:k | t:k | f:n:m")->capture_default_str();
    app->add_option("--lambda2", lambda2,
                    "second spectral moment of the (component) field, unit-variance normalized")
        ->capture_default_str();
    app->add_option("--variance", variance, "variance of a Gaussian model")->capture_default_str();
    app->add_option("--spectral-matrix", spectral_matrix,
                    "row-major N*N spectral moment matrix; overrides --lambda2");
  }

  CovarianceModel covariance(int dim) const {
    if (spectral_matrix.empty()) return CovarianceModel::isotropic(lambda2, variance);
    const auto v = parse_numbers(spectral_matrix, "--spectral-matrix");
    if (v.size() != static_cast<std::size_t>(dim * dim)) {
      throw ArgumentError("--spectral-matrix needs " + std::to_string(dim * dim) + " entries");
    }
    Eigen::MatrixXd m(dim, dim);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) m(r, c) = v[static_cast<std::size_t>(r * dim + c)];
    }
    return CovarianceModel::anisotropic(m, variance);
  }

  FieldModel build(int dim) const {
    const CandidateSpec spec = parse_candidate(model);
    CovarianceModel cov = covariance(dim);
    cov.validate(dim);
    CovarianceModel unit = cov;
    unit.variance = 1.0;
    switch (spec.family) {
      case CandidateFamily::gaussian:
        return GaussianModel{cov};
      case CandidateFamily::chisq:
        return ChiSquaredModel{spec.a, unit};
      case CandidateFamily::t:
        return TModel{spec.a, unit};
      case CandidateFamily::f:
        return FModel{spec.a, spec.b, unit};
      case CandidateFamily::gaussianised_chisq:
        break;
    }
    throw ArgumentError("invalid model '" + model + "' (expected gaussian, chisq:k, t:k or f:n:m)");
  }

  void describe(Meta& meta) const {
    meta.emplace_back("model", model);
    if (spectral_matrix.empty()) {
      meta.emplace_back("lambda2", num(lambda2));
    } else {
      meta.emplace_back("spectral-matrix", spectral_matrix);
    }
    meta.emplace_back("variance", num(variance));
  }
};

struct DomainArgs {
  int dim = 2;
  double cube = 1.0;
  std::string sides;
  CLI::Option* dim_opt = nullptr;

  void add(CLI::App* app) {
    dim_opt = app->add_option("--dim", dim, "dimension of the cube domain")->capture_default_str();
    app->add_option("--cube", cube, "side length of the cube domain")->capture_default_str();
    app->add_option("--sides", sides, "comma-separated rectangle sides; overrides --cube");
  }

  Rectangle build() const {
    if (sides.empty()) {
      if (dim < 1 || dim > 3) throw DomainError("--dim must be 1, 2 or 3");
      return Rectangle::cube(dim, cube);
    }
    const auto s = parse_numbers(sides, "--sides");
    if (dim_opt->count() > 0 && static_cast<int>(s.size()) != dim) {
      throw ArgumentError("--sides has " + std::to_string(s.size()) + " entries but --dim is " +
                          std::to_string(dim));
    }
    if (s.size() > 3) throw DomainError("domains of dimension > 3 are not supported");
    return Rectangle(s);
  }

  void describe(Meta& meta) const {
    if (sides.empty()) {
      meta.emplace_back("dim", std::to_string(dim));
      meta.emplace_back("cube", num(cube));
    } else {
      meta.emplace_back("sides", sides);
    }
  }
};

using Action = std::function<void(std::ostream& out, std::ostream& err)>;

Action add_simulate(CLI::App& app) {
  auto* sub = app.add_subcommand("simulate", "simulate a field and write it in binary form");
  struct Args {
    ModelArgs model;
    std::string shape;
    double spacing = 0.0;
    std::uint64_t seed = 0;
    std::string out;
  };
  auto a = std::make_shared<Args>();
  a->model.add(sub);
  sub->add_option("--shape", a->shape, "grid points per axis, e.g. 256,256")->required();
  sub->add_option("--spacing", a->spacing, "lattice spacing")->required();
  sub->add_option("--seed", a->seed, "random seed")->capture_default_str();
  sub->add_option("--out", a->out, "output field file")->required();
  return [sub, a](std::ostream& out, std::ostream& err) {
    if (!sub->parsed()) return;
    const Shape shape = parse_shape(a->shape);
    const FieldModel model = a->model.build(static_cast<int>(shape.size()));
    for (const auto& w : simulation_warnings(covariance_of(model), shape, a->spacing)) {
      err << "warning: " << w << '\n';
    }
    const LatticeField field = simulate_model(model, shape, a->spacing, a->seed);
    write_field(a->out, field);

    Meta meta{{"command", "simulate"}};
    a->model.describe(meta);
    meta.emplace_back("shape", a->shape);
    meta.emplace_back("spacing", num(a->spacing));
    meta.emplace_back("seed", std::to_string(a->seed));
    meta.emplace_back("out", a->out);
    std::ostringstream m;
    write_meta(m, meta);
    emit(a->out + ".meta", out, m.str());

    const FieldSummary s = summarize(field);
    out << "mean=" << num(s.mean) << " variance=" << num(s.variance) << " min=" << num(s.min)
        << " max=" << num(s.max) << '\n';
  };
}

Action add_ec_curve(CLI::App& app) {
  auto* sub = app.add_subcommand("ec-curve", "empirical Euler characteristic curve of a field");
  struct Args {
    std::string input;
    std::string levels;
    std::string out;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--input", a->input, "field file")->required();
  sub->add_option("--levels", a->levels, "level grid lo:hi:step")->required();
  sub->add_option("--out", a->out, "output CSV (default: standard output)");
  return [sub, a](std::ostream& out, std::ostream&) {
    if (!sub->parsed()) return;
    const auto levels = parse_levels(a->levels);
    const LatticeField field = read_field(a->input);
    ECCurve curve = ec_curve(field, levels);
    curve.meta = {{"command", "ec-curve"}, {"input", a->input}, {"levels", a->levels}};
    if (!a->out.empty()) curve.meta.emplace_back("out", a->out);
    std::ostringstream csv;
    write_curve_csv(csv, curve);
    emit(a->out, out, csv.str());
  };
}

Action add_eec(CLI::App& app) {
  auto* sub = app.add_subcommand("eec", "expected Euler characteristic (or LKC) curve");
  struct Args {
    ModelArgs model;
    DomainArgs domain;
    std::string levels;
    int order = 0;
    std::string out;
  };
  auto a = std::make_shared<Args>();
  a->model.add(sub);
  a->domain.add(sub);
  sub->add_option("--levels", a->levels, "level grid lo:hi:step")->required();
  sub->add_option("--order", a->order, "LKC order i; 0 is the Euler characteristic")
      ->capture_default_str();
  sub->add_option("--out", a->out, "output CSV (default: standard output)");
  return [sub, a](std::ostream& out, std::ostream&) {
    if (!sub->parsed()) return;
    const auto levels = parse_levels(a->levels);
    const Rectangle rect = a->domain.build();
    if (a->order < 0 || a->order > rect.dim()) {
      throw DomainError("--order must lie in 0.." + std::to_string(rect.dim()));
    }
    const FieldModel model = a->model.build(rect.dim());
    ECCurve curve = expected_curve(model, rect, levels, a->order);
    curve.meta = {{"command", "eec"}};
    a->model.describe(curve.meta);
    a->domain.describe(curve.meta);
    curve.meta.emplace_back("levels", a->levels);
    curve.meta.emplace_back("order", std::to_string(a->order));
    if (!a->out.empty()) curve.meta.emplace_back("out", a->out);
    std::ostringstream csv;
    write_curve_csv(csv, curve);
    emit(a->out, out, csv.str());
  };
}

Action add_threshold(CLI::App& app) {
  auto* sub = app.add_subcommand("threshold", "level whose expected EC equals alpha");
  struct Args {
    ModelArgs model;
    DomainArgs domain;
    double alpha = 0.05;
    std::string format = "text";
    std::string out;
  };
  auto a = std::make_shared<Args>();
  a->model.add(sub);
  a->domain.add(sub);
  sub->add_option("--alpha", a->alpha, "target tail probability in (0, 0.5)")->required();
  sub->add_option("--format", a->format, "text or json")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();
  sub->add_option("--out", a->out, "output file (default: standard output)");
  return [sub, a](std::ostream& out, std::ostream&) {
    if (!sub->parsed()) return;
    const Rectangle rect = a->domain.build();
    const FieldModel model = a->model.build(rect.dim());
    const ThresholdResult r = threshold(model, rect, a->alpha);

    Meta meta{{"command", "threshold"}};
    a->model.describe(meta);
    a->domain.describe(meta);
    meta.emplace_back("alpha", num(a->alpha));
    meta.emplace_back("format", a->format);
    if (!a->out.empty()) meta.emplace_back("out", a->out);

    std::ostringstream text;
    if (a->format == "json") {
      nlohmann::ordered_json j;
      j["alpha"] = r.alpha;
      j["u_star"] = r.u_star;
      j["eec_at_u"] = r.eec_at_u;
      j["error_bound"] = r.error_bound ? nlohmann::ordered_json(*r.error_bound) : nullptr;
      j["peak_level"] = r.peak.level;
      j["peak_value"] = r.peak.value;
      nlohmann::ordered_json params;
      for (const auto& [k, v] : meta) params[k] = v;
      j["parameters"] = params;
      text << j.dump(2) << '\n';
    } else {
      write_meta(text, meta);
      text << "alpha=" << num(r.alpha) << '\n'
           << "u_star=" << num(r.u_star) << '\n'
           << "eec_at_u=" << num(r.eec_at_u) << '\n'
           << "error_bound=" << (r.error_bound ? num(*r.error_bound) : "unavailable") << '\n'
           << "peak_level=" << num(r.peak.level) << '\n'
           << "peak_value=" << num(r.peak.value) << '\n';
    }
    emit(a->out, out, text.str());
  };
}

Action add_identify(CLI::App& app) {
  auto* sub = app.add_subcommand("identify", "rank candidate models against a field's EC curve");
  struct Args {
    std::string input;
    std::string candidates;
    std::string levels;
    bool estimate = false;
    bool raw_moments = false;
    double lambda2 = 1.0;
    double variance = 1.0;
    std::size_t realisations = 100;
    std::uint64_t seed = 0x5eed;
    unsigned jobs = 1;
    std::string out;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--input", a->input, "field file")->required();
  sub->add_option("--candidates", a->candidates,
                  "comma-separated models: gaussian, chisq:k, gchisq:k, t:k, f:n:m")
      ->required();
  sub->add_option("--levels", a->levels, "level grid lo:hi:step")->required();
  sub->add_flag("--estimate-moments", a->estimate,
                "match mean, variance and lambda2 of each candidate to the data");
  sub->add_flag("--raw-moments", a->raw_moments,
                "skip the lattice correction of the estimated lambda2");
  sub->add_option("--lambda2", a->lambda2, "supplied lambda2 when not estimating")
      ->capture_default_str();
  sub->add_option("--variance", a->variance, "supplied Gaussian variance when not estimating")
      ->capture_default_str();
  sub->add_option("--realisations", a->realisations,
                  "simulations behind each Gaussianised candidate curve")
      ->capture_default_str();
  sub->add_option("--seed", a->seed, "first seed of the simulation schedule")
      ->capture_default_str();
  sub->add_option("--jobs", a->jobs, "worker threads")->envname("XKIT_JOBS")->capture_default_str();
  sub->add_option("--out", a->out, "output table (default: standard output)");
  return [sub, a](std::ostream& out, std::ostream&) {
    if (!sub->parsed()) return;
    const auto specs = parse_candidate_list(a->candidates);
    const auto levels = parse_levels(a->levels);
    const LatticeField field = read_field(a->input);
    const ECCurve curve = ec_curve(field, levels);

    Meta meta{{"command", "identify"},
              {"input", a->input},
              {"candidates", a->candidates},
              {"levels", a->levels}};
    std::ostringstream info;
    std::vector<Candidate> candidates;
    if (a->estimate) {
      meta.emplace_back("estimate-moments", "true");
      if (a->raw_moments) meta.emplace_back("raw-moments", "true");
      const SpectralEstimate est = estimate_spectral_moments(field);
      double lambda2 = est.lambda2();
      if (!a->raw_moments) lambda2 = lattice_corrected_lambda(lambda2, field.spacing());
      info << "## estimated mean=" << num(est.mean) << " variance=" << num(est.variance)
           << " lambda2=" << num(lambda2) << '\n';
      for (const auto& s : specs) {
        candidates.push_back(matched_candidate(s, est.mean, est.variance, lambda2));
      }
    } else {
      meta.emplace_back("lambda2", num(a->lambda2));
      meta.emplace_back("variance", num(a->variance));
      const CovarianceModel cov = CovarianceModel::isotropic(a->lambda2, a->variance);
      cov.validate(field.dim());
      for (const auto& s : specs) candidates.push_back(supplied_candidate(s, cov));
    }
    meta.emplace_back("realisations", std::to_string(a->realisations));
    meta.emplace_back("seed", std::to_string(a->seed));
    if (!a->out.empty()) meta.emplace_back("out", a->out);

    IdentifyOptions options;
    options.shape = field.shape();
    options.spacing = field.spacing();
    options.simulation.realisations = a->realisations;
    options.simulation.seed = a->seed;
    options.simulation.jobs = a->jobs;
    const auto ranked = identify_model(curve, candidates, field.domain(), options);

    std::ostringstream table;
    write_meta(table, meta);
    table << info.str() << "rank,candidate,discrepancy\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      table << i + 1 << ',' << ranked[i].label << ',' << num(ranked[i].discrepancy) << '\n';
    }
    emit(a->out, out, table.str());
  };
}

// Index of the subcommand word, skipping the value of a separate --config.
std::optional<std::size_t> find_subcommand(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      ++i;
      continue;
    }
    if (!args[i].empty() && args[i][0] != '-') return i;
  }
  return std::nullopt;
}

// Joins "--opt -5:5:0.1" into "--opt=-5:5:0.1" so negative values are not
// taken for options.
std::vector<std::string> join_negative_values(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) == 0 && a.find('=') == std::string::npos && i + 1 < args.size()) {
      const std::string& next = args[i + 1];
      if (next.size() >= 2 && next[0] == '-' &&
          (std::isdigit(static_cast<unsigned char>(next[1])) || next[1] == '.')) {
        out.push_back(a + "=" + next);
        ++i;
        continue;
      }
    }
    out.push_back(a);
  }
  return out;
}

// Expands --config into --key=value arguments placed right after the
// subcommand, so explicit flags (parsed later, last wins) override them.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ArgumentError("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path) return rest;
  const Config cfg = read_config(*path);
  auto sub = find_subcommand(rest);
  if (!sub) {
    if (!cfg.command) throw ArgumentError("no subcommand given and the config names none");
    rest.insert(rest.begin(), *cfg.command);
    sub = 0;
  } else if (cfg.command && *cfg.command != rest[*sub]) {
    throw ArgumentError("config file records command '" + *cfg.command + "' but '" + rest[*sub] +
                        "' was requested");
  }
  std::vector<std::string> entries;
  for (const auto& [k, v] : cfg.entries) {
    if (v == "true") {
      entries.push_back("--" + k);
    } else {
      entries.push_back("--" + k + "=" + v);
    }
  }
  rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(*sub) + 1, entries.begin(), entries.end());
  return rest;
}

}  // namespace

std::vector<double> parse_levels(const std::string& spec) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3) throw ArgumentError("level grid '" + spec + "' is not lo:hi:step");
  const double lo = parse_number(parts[0], "level grid");
  const double hi = parse_number(parts[1], "level grid");
  const double step = parse_number(parts[2], "level grid");
  if (!(step > 0.0)) throw ArgumentError("level grid step must be positive");
  if (hi < lo) throw ArgumentError("level grid needs lo <= hi");
  const double count = std::floor((hi - lo) / step + 0.5) + 1.0;
  if (count > 1e7) throw ArgumentError("level grid has too many levels");
  std::vector<double> levels(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = lo + static_cast<double>(i) * step;
  return levels;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Excursion-set geometry of random fields: simulation, empirical and expected "
               "Euler characteristic curves, thresholds and model identification"};
  app.name("xkit");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all");
  app.add_option("--config", "key=value configuration file; command-line flags override it");

  std::vector<Action> actions{add_simulate(app), add_ec_curve(app), add_eec(app),
                              add_threshold(app), add_identify(app)};
  try {
    std::vector<std::string> argv = join_negative_values(expand_config(args));
    std::reverse(argv.begin(), argv.end());
    try {
      app.parse(argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kOk : kUsage;
    }
    for (const auto& act : actions) act(out, err);
    return kOk;
  } catch (const DomainError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ArgumentError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const EstimationError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const SimulationError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const CapabilityError& e) {
    err << "unsupported: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace xkit::cli
