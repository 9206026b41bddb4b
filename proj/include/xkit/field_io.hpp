#pragma once

// Binary lattice-field format, little-endian:
//   "XKF1" | u32 dim | u32 size[dim] | f64 spacing | f64 values[prod(size)]
// Values are row-major, last axis fastest.

#include <filesystem>
#include <iosfwd>

#include "xkit/field.hpp"

namespace xkit {

void write_field(std::ostream& out, const LatticeField& field);
void write_field(const std::filesystem::path& path, const LatticeField& field);

/// Throws FormatError on a bad magic, truncated payload, trailing bytes or
/// non-finite samples.
LatticeField read_field(std::istream& in);
LatticeField read_field(const std::filesystem::path& path);

}  // namespace xkit
