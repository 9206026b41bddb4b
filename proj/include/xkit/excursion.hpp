#pragma once

// Excursion sets on lattices and their cubical-complex geometry.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xkit/field.hpp"

namespace xkit {

/// Bit-packed occupancy over a grid. Rows run along the last axis; each row
/// starts on a fresh 64-bit word and padding bits are always zero.
class OccupancyMask {
 public:
  explicit OccupancyMask(Shape shape);

  int dim() const { return static_cast<int>(shape_.size()); }
  const Shape& shape() const { return shape_; }
  std::size_t sites() const;
  std::size_t rows() const { return rows_; }
  std::size_t words_per_row() const { return words_per_row_; }

  bool test(std::size_t site) const;
  void set(std::size_t site, bool on = true);
  std::size_t count() const;

  const std::uint64_t* row(std::size_t r) const { return &bits_[r * words_per_row_]; }
  std::uint64_t* row(std::size_t r) { return &bits_[r * words_per_row_]; }

 private:
  Shape shape_;
  std::size_t rows_;
  std::size_t words_per_row_;
  std::vector<std::uint64_t> bits_;
};

/// Sites with value >= u.
OccupancyMask excursion_mask(const LatticeField& field, double u);

/// N_0..N_N of the closed cubical complex: a k-face is present iff all 2^k
/// of its corner sites are occupied. Throws CapabilityError for dim > 3.
std::vector<std::int64_t> face_counts(const OccupancyMask& mask);

/// sum_k (-1)^k N_k; a single occupied site gives 1.
std::int64_t euler_characteristic(const OccupancyMask& mask);

struct ECCurve {
  enum class Kind { empirical, expected };

  std::vector<double> levels;
  std::vector<double> values;
  Kind kind = Kind::empirical;
  /// Ordered key=value descriptors written as "# key=value" lines.
  std::vector<std::pair<std::string, std::string>> meta;

  std::size_t size() const { return levels.size(); }
  /// Throws ArgumentError unless lengths agree and levels strictly increase.
  void validate() const;
};

std::string kind_name(ECCurve::Kind kind);

/// Empirical EC at each level. Every cubical face enters once through the
/// minimum of its corner values, so the whole curve costs one pass over the
/// faces. Levels must be strictly increasing.
ECCurve ec_curve(const LatticeField& field, std::span<const double> levels);

/// CSV with header "u,ec,kind", preceded by "# key=value" metadata lines.
/// Numbers use 17 significant digits.
void write_curve_csv(std::ostream& out, const ECCurve& curve);
ECCurve read_curve_csv(std::istream& in);

/// L_N = delta^N (#N-cells) and L_{N-1} = delta^{N-1} (#(N-1)-faces on
/// exactly one N-cell) / 2 for dim 2 or 3. Other orders are unavailable.
struct BoundaryMeasures {
  std::optional<double> volume;
  std::optional<double> half_boundary;
};

BoundaryMeasures geometric_measures(const OccupancyMask& mask, double spacing);

}  // namespace xkit
