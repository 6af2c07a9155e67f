#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "wsimil/common/error.hpp"

namespace wsimil::io {

// Little-endian fixed-width encoding, independent of host byte order.

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

inline void write_f32(std::ostream& out, float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  write_le(out, bits);
}

/// Throws DataError("unexpected end ...") on short reads.
template <typename T>
T read_le(std::istream& in, const char* what) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw DataError(std::string("unexpected end of file while reading ") + what);
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

inline float read_f32(std::istream& in, const char* what) {
  const auto bits = read_le<std::uint32_t>(in, what);
  float value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what, std::uint32_t max_len = 1u << 20) {
  const auto len = read_le<std::uint32_t>(in, what);
  if (len > max_len) throw DataError(std::string("implausible string length in ") + what);
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len))
    throw DataError(std::string("unexpected end of file while reading ") + what);
  return s;
}

}  // namespace wsimil::io
