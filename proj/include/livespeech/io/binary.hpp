#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "livespeech/errors.hpp"

// Little-endian primitives shared by the codebook, grid and checkpoint
// formats.
namespace livespeech::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), 4); }

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_pod(os, v); }

inline void expect_magic(std::istream& is, std::string_view magic, std::string_view what) {
  char buf[4] = {};
  is.read(buf, 4);
  if (!is || std::string_view(buf, 4) != magic) {
    throw ValidationError(std::string(what) + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

template <class T>
T read_pod(std::istream& is, std::string_view field) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ValidationError("truncated file while reading " + std::string(field));
  return v;
}

inline std::uint32_t read_u32(std::istream& is, std::string_view field) { return read_pod<std::uint32_t>(is, field); }

}  // namespace livespeech::io
