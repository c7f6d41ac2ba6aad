#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "guq/error.hpp"

// Little-endian primitives shared by the dataset and checkpoint formats.
namespace guq::io {

inline void write_bytes_le(std::ostream& out, std::uint64_t bits, int n) {
  std::array<char, 8> buf{};
  for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
  out.write(buf.data(), n);
}

inline std::uint64_t read_bytes_le(std::istream& in, int n) {
  std::array<unsigned char, 8> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), n);
  if (!in) throw IoError("unexpected end of file");
  std::uint64_t bits = 0;
  for (int i = 0; i < n; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return bits;
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write_bytes_le(out, v, 1); }
inline void write_u32(std::ostream& out, std::uint32_t v) { write_bytes_le(out, v, 4); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_bytes_le(out, v, 8); }
inline void write_f64(std::ostream& out, double v) {
  write_bytes_le(out, std::bit_cast<std::uint64_t>(v), 8);
}
inline void write_f64s(std::ostream& out, std::span<const double> vs) {
  for (double v : vs) write_f64(out, v);
}

inline std::uint8_t read_u8(std::istream& in) {
  return static_cast<std::uint8_t>(read_bytes_le(in, 1));
}
inline std::uint32_t read_u32(std::istream& in) {
  return static_cast<std::uint32_t>(read_bytes_le(in, 4));
}
inline std::uint64_t read_u64(std::istream& in) { return read_bytes_le(in, 8); }
inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_bytes_le(in, 8)); }
inline void read_f64s(std::istream& in, std::span<double> vs) {
  for (double& v : vs) v = read_f64(in);
}

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic, const std::string& what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) {
    throw IoError(what + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

}  // namespace guq::io
