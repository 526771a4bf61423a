#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace fd {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; a byte-swapping path is not implemented");

template <typename U>
void write_le(std::ostream& out, U value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  U value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(U));
  if (!in) throw std::runtime_error("unexpected end of file");
  return value;
}

inline void write_floats(std::ostream& out, const float* data, std::int64_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

inline void read_floats(std::istream& in, float* data, std::int64_t count) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4));
}

}  // namespace fd
