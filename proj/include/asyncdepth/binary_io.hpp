#pragma once

// Little-endian scalar I/O shared by the ADST/ADDM/ADTF formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "asyncdepth/errors.hpp"

namespace asyncdepth::io {

template <typename T>
concept LittleEndianScalar = std::is_arithmetic_v<T> && (sizeof(T) == 4 || sizeof(T) == 8);

template <LittleEndianScalar T>
inline void write_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = std::bit_cast<U>(value);
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  }
  os.write(buf.data(), buf.size());
}

template <LittleEndianScalar T>
inline T read_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::array<unsigned char, sizeof(T)> buf{};
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw FormatError("unexpected end of file");
  }
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<U>(buf[i]) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

/// Bulk f32 payload. Uses a straight copy on little-endian hosts.
inline void write_f32_array(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) write_le(os, v);
  }
}

inline void read_f32_array(std::istream& is, std::span<float> out) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(out.data()),
                 static_cast<std::streamsize>(out.size_bytes()))) {
      throw FormatError("unexpected end of file in f32 payload");
    }
  } else {
    for (float& v : out) v = read_le<float>(is);
  }
}

inline void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw FormatError("bad magic, expected '" + std::string(magic) + "'");
  }
}

}  // namespace asyncdepth::io
