#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "svtas/error.hpp"

// Little-endian primitive encoding shared by the feature and checkpoint formats.
namespace svtas::binary {

template <typename U>
void put(std::ostream& os, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = char((value >> (8 * i)) & 0xff);
  os.write(bytes, sizeof(U));
}

inline void put_f32(std::ostream& os, double value) { put(os, std::bit_cast<std::uint32_t>(float(value))); }

template <typename U>
U get(std::istream& is, const char* what) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U)))
    throw DataError(std::string("truncated file while reading ") + what);
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= U(bytes[i]) << (8 * i);
  return value;
}

inline double get_f32(std::istream& is, const char* what) {
  return double(std::bit_cast<float>(get<std::uint32_t>(is, what)));
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const std::string& path) {
  char got[4];
  if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    throw DataError(path + ": bad magic, expected " + std::string(magic, 4));
}

}  // namespace svtas::binary
