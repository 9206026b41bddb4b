#include "xkit/field_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "xkit/error.hpp"

namespace xkit {

namespace {

constexpr std::array<char, 4> kMagic{'X', 'K', 'F', '1'};

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(UInt)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError(std::string("field file truncated while reading ") + what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double x) { put_le(out, std::bit_cast<std::uint64_t>(x)); }

double get_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in, what));
}

}  // namespace

void write_field(std::ostream& out, const LatticeField& field) {
  out.write(kMagic.data(), kMagic.size());
  put_le(out, static_cast<std::uint32_t>(field.dim()));
  for (std::size_t m : field.shape()) put_le(out, static_cast<std::uint32_t>(m));
  put_f64(out, field.spacing());
  for (double v : field.values()) put_f64(out, v);
  if (!out) throw FormatError("failed writing field data");
}

void write_field(const std::filesystem::path& path, const LatticeField& field) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_field(out, field);
  out.flush();
  if (!out) throw FormatError("failed writing " + path.string());
}

LatticeField read_field(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) throw FormatError("not a field file: bad magic bytes");
  const std::uint32_t dim = get_le<std::uint32_t>(in, "dimension");
  if (dim < 1 || dim > 3) throw FormatError("field file has unsupported dimension " + std::to_string(dim));
  Shape shape(dim);
  std::size_t n = 1;
  for (auto& m : shape) {
    m = get_le<std::uint32_t>(in, "axis size");
    if (m == 0) throw FormatError("field file has an empty axis");
    n *= m;
  }
  const double spacing = get_f64(in, "spacing");
  std::vector<double> values(n);
  for (auto& v : values) v = get_f64(in, "values");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("field file has trailing bytes");
  try {
    return LatticeField(std::move(shape), spacing, std::move(values));
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("invalid field file: ") + e.what());
  }
}

LatticeField read_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_field(in);
}

}  // namespace xkit
