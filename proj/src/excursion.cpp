#include "xkit/excursion.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>

#include "xkit/error.hpp"

namespace xkit {

namespace {

// A grid of dimension <= 3 viewed as 3-D with leading unit axes. Axis a of
// the original grid is axis a + (3 - N) here.
struct Box {
  int dim;
  std::array<std::size_t, 3> ext;
  std::array<std::size_t, 3> stride;

  explicit Box(const Shape& shape) : dim(static_cast<int>(shape.size())) {
    if (dim < 1) throw ArgumentError("grid needs at least one axis");
    if (dim > 3) {
      throw CapabilityError("cubical complexes are implemented for dimensions 1-3, got " +
                            std::to_string(dim));
    }
    ext = {1, 1, 1};
    for (int a = 0; a < dim; ++a) ext[3 - dim + a] = shape[a];
    stride = {ext[1] * ext[2], ext[2], 1};
  }

  int axis(int a) const { return 3 - dim + a; }

  // Per-axis anchor counts for faces spanning the original axes in `subset`.
  std::array<std::size_t, 3> anchors(unsigned subset) const {
    std::array<std::size_t, 3> n = ext;
    for (int a = 0; a < dim; ++a) {
      if (subset & (1u << a)) n[axis(a)] = ext[axis(a)] - 1;
    }
    return n;
  }

  template <typename Fn>
  void for_each(const std::array<std::size_t, 3>& n, Fn&& fn) const {
    for (std::size_t i = 0; i < n[0]; ++i) {
      for (std::size_t j = 0; j < n[1]; ++j) {
        const std::size_t base = i * stride[0] + j * stride[1];
        for (std::size_t k = 0; k < n[2]; ++k) fn(base + k);
      }
    }
  }
};

std::size_t product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t m : shape) n *= m;
  return n;
}

void check_levels(std::span<const double> levels) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (std::isnan(levels[i])) throw ArgumentError("levels must not be NaN");
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw ArgumentError("levels must be strictly increasing");
    }
  }
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("curve CSV line " + std::to_string(line) + ": bad number '" +
                      std::string(s) + "'");
  }
  return v;
}

}  // namespace

OccupancyMask::OccupancyMask(Shape shape) : shape_(std::move(shape)) {
  if (shape_.empty()) throw ArgumentError("mask needs at least one axis");
  for (std::size_t m : shape_) {
    if (m == 0) throw ArgumentError("mask axes must be non-empty");
  }
  rows_ = product(shape_) / shape_.back();
  words_per_row_ = (shape_.back() + 63) / 64;
  bits_.assign(rows_ * words_per_row_, 0);
}

std::size_t OccupancyMask::sites() const { return rows_ * shape_.back(); }

bool OccupancyMask::test(std::size_t site) const {
  const std::size_t r = site / shape_.back();
  const std::size_t c = site % shape_.back();
  return (row(r)[c / 64] >> (c % 64)) & 1u;
}

void OccupancyMask::set(std::size_t site, bool on) {
  const std::size_t r = site / shape_.back();
  const std::size_t c = site % shape_.back();
  const std::uint64_t bit = std::uint64_t{1} << (c % 64);
  if (on) {
    row(r)[c / 64] |= bit;
  } else {
    row(r)[c / 64] &= ~bit;
  }
}

std::size_t OccupancyMask::count() const {
  std::size_t n = 0;
  for (std::uint64_t w : bits_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

OccupancyMask excursion_mask(const LatticeField& field, double u) {
  OccupancyMask mask(field.shape());
  const std::size_t len = field.shape().back();
  const auto v = field.values();
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    std::uint64_t* out = mask.row(r);
    const double* in = v.data() + r * len;
    for (std::size_t c = 0; c < len; ++c) {
      if (in[c] >= u) out[c / 64] |= std::uint64_t{1} << (c % 64);
    }
  }
  return mask;
}

std::vector<std::int64_t> face_counts(const OccupancyMask& mask) {
  const Box box(mask.shape());
  const int n = box.dim;
  const std::size_t words = mask.words_per_row();
  const unsigned last_bit = 1u << (n - 1);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n) + 1, 0);
  std::vector<std::uint64_t> acc(words);

  for (unsigned subset = 0; subset < (1u << n); ++subset) {
    // Row offsets of the corners along the non-last axes of the face.
    std::vector<std::size_t> offsets{0};
    for (int a = 0; a < n - 1; ++a) {
      if (!(subset & (1u << a))) continue;
      const std::size_t step = box.stride[box.axis(a)] / box.ext[2];
      const std::size_t k = offsets.size();
      for (std::size_t t = 0; t < k; ++t) offsets.push_back(offsets[t] + step);
    }
    std::array<std::size_t, 3> rows_n = box.anchors(subset & ~last_bit);
    rows_n[2] = 1;
    std::int64_t total = 0;
    box.for_each(rows_n, [&](std::size_t site) {
      const std::size_t r = site / box.ext[2];
      const std::uint64_t* first = mask.row(r + offsets[0]);
      std::copy(first, first + words, acc.begin());
      for (std::size_t t = 1; t < offsets.size(); ++t) {
        const std::uint64_t* other = mask.row(r + offsets[t]);
        for (std::size_t w = 0; w < words; ++w) acc[w] &= other[w];
      }
      if (subset & last_bit) {
        // Pair each bit with its right neighbour; the zero padding past the
        // row end drops the final column.
        for (std::size_t w = 0; w < words; ++w) {
          const std::uint64_t carry = (w + 1 < words) ? (acc[w + 1] << 63) : 0;
          acc[w] &= (acc[w] >> 1) | carry;
        }
      }
      for (std::size_t w = 0; w < words; ++w) total += std::popcount(acc[w]);
    });
    counts[static_cast<std::size_t>(std::popcount(subset))] += total;
  }
  return counts;
}

std::int64_t euler_characteristic(const OccupancyMask& mask) {
  const auto counts = face_counts(mask);
  std::int64_t ec = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) ec += (k % 2 == 0) ? counts[k] : -counts[k];
  return ec;
}

void ECCurve::validate() const {
  if (levels.size() != values.size()) throw ArgumentError("curve levels and values differ in length");
  check_levels(levels);
}

std::string kind_name(ECCurve::Kind kind) {
  return kind == ECCurve::Kind::empirical ? "empirical" : "expected";
}

ECCurve ec_curve(const LatticeField& field, std::span<const double> levels) {
  check_levels(levels);
  const Box box(field.shape());
  const int n = box.dim;
  const std::size_t m = levels.size();
  // bins[i]: signed count of faces whose corner minimum has exactly i
  // levels at or below it.
  std::vector<std::int64_t> bins(m + 1, 0);
  const auto v = field.values();

  // mins[s][x]: minimum over the corners of the face spanning `s` anchored
  // at x, built from the face with one axis fewer.
  std::vector<std::vector<double>> mins(1u << n);
  mins[0].assign(v.begin(), v.end());
  for (unsigned subset = 0; subset < (1u << n); ++subset) {
    if (subset != 0) {
      const int a = std::bit_width(subset) - 1;
      const auto& prev = mins[subset & ~(1u << a)];
      const std::size_t step = box.stride[box.axis(a)];
      auto& cur = mins[subset];
      cur.assign(v.size(), 0.0);
      box.for_each(box.anchors(subset),
                   [&](std::size_t x) { cur[x] = std::min(prev[x], prev[x + step]); });
    }
    const std::int64_t sign = (std::popcount(subset) % 2 == 0) ? 1 : -1;
    const auto& cur = mins[subset];
    box.for_each(box.anchors(subset), [&](std::size_t x) {
      const auto idx = std::upper_bound(levels.begin(), levels.end(), cur[x]) - levels.begin();
      bins[static_cast<std::size_t>(idx)] += sign;
    });
  }

  ECCurve curve;
  curve.kind = ECCurve::Kind::empirical;
  curve.levels.assign(levels.begin(), levels.end());
  curve.values.assign(m, 0.0);
  std::int64_t running = 0;
  for (std::size_t i = m; i-- > 0;) {
    running += bins[i + 1];
    curve.values[i] = static_cast<double>(running);
  }
  return curve;
}

void write_curve_csv(std::ostream& out, const ECCurve& curve) {
  curve.validate();
  for (const auto& [key, value] : curve.meta) out << "# " << key << '=' << value << '\n';
  out << "u,ec,kind\n";
  const std::string kind = kind_name(curve.kind);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << format_double(curve.levels[i]) << ',' << format_double(curve.values[i]) << ','
        << kind << '\n';
  }
  if (!out) throw FormatError("failed writing curve CSV");
}

ECCurve read_curve_csv(std::istream& in) {
  ECCurve curve;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::optional<ECCurve::Kind> kind;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header) throw FormatError("curve CSV: metadata after header on line " + std::to_string(lineno));
      std::string body = line.substr(1);
      if (!body.empty() && body[0] == ' ') body.erase(0, 1);
      const auto eq = body.find('=');
      if (eq == std::string::npos) {
        throw FormatError("curve CSV: metadata line " + std::to_string(lineno) + " lacks '='");
      }
      curve.meta.emplace_back(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    if (!header) {
      if (line != "u,ec,kind") throw FormatError("curve CSV: expected header 'u,ec,kind'");
      header = true;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw FormatError("curve CSV line " + std::to_string(lineno) + ": expected three fields");
    }
    const std::string_view sv(line);
    curve.levels.push_back(parse_double(sv.substr(0, c1), lineno));
    curve.values.push_back(parse_double(sv.substr(c1 + 1, c2 - c1 - 1), lineno));
    const std::string_view k = sv.substr(c2 + 1);
    ECCurve::Kind row_kind;
    if (k == "empirical") {
      row_kind = ECCurve::Kind::empirical;
    } else if (k == "expected") {
      row_kind = ECCurve::Kind::expected;
    } else {
      throw FormatError("curve CSV line " + std::to_string(lineno) + ": unknown kind");
    }
    if (kind && *kind != row_kind) throw FormatError("curve CSV mixes curve kinds");
    kind = row_kind;
  }
  if (!header) throw FormatError("curve CSV: missing header");
  if (kind) curve.kind = *kind;
  try {
    curve.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("curve CSV: ") + e.what());
  }
  return curve;
}

BoundaryMeasures geometric_measures(const OccupancyMask& mask, double spacing) {
  const int n = mask.dim();
  if (n < 2 || n > 3) throw DomainError("geometric_measures needs a 2-D or 3-D mask");
  if (!(spacing > 0.0)) throw DomainError("geometric_measures: spacing must be positive");
  const Box box(mask.shape());
  const unsigned full = (1u << n) - 1;

  // cells[x]: the N-cell anchored at x is present.
  std::vector<unsigned char> cells(mask.sites(), 0);
  const auto cell_n = box.anchors(full);
  std::array<std::size_t, 8> corners{};
  for (unsigned t = 0; t <= full; ++t) {
    std::size_t off = 0;
    for (int a = 0; a < n; ++a) {
      if (t & (1u << a)) off += box.stride[box.axis(a)];
    }
    corners[t] = off;
  }
  std::int64_t ncells = 0;
  box.for_each(cell_n, [&](std::size_t x) {
    for (unsigned t = 0; t <= full; ++t) {
      if (!mask.test(x + corners[t])) return;
    }
    cells[x] = 1;
    ++ncells;
  });

  // Each present cell has 2N facets; a facet shared by two present cells is
  // interior.
  std::int64_t shared = 0;
  for (int a = 0; a < n; ++a) {
    auto pair_n = cell_n;
    if (pair_n[box.axis(a)] == 0) continue;
    pair_n[box.axis(a)] -= 1;
    const std::size_t step = box.stride[box.axis(a)];
    box.for_each(pair_n, [&](std::size_t x) { shared += (cells[x] && cells[x + step]) ? 1 : 0; });
  }
  const std::int64_t boundary = 2 * n * ncells - 2 * shared;

  BoundaryMeasures out;
  out.volume = std::pow(spacing, n) * static_cast<double>(ncells);
  out.half_boundary = 0.5 * std::pow(spacing, n - 1) * static_cast<double>(boundary);
  return out;
}

}  // namespace xkit
