#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "emoshare/errors.hpp"

namespace emoshare::binio {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

template <typename T>
  requires std::is_trivially_copyable_v<T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
  requires std::is_trivially_copyable_v<T>
T get(std::istream& is, const std::string& what) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) throw IoError("truncated file while reading " + what);
  return value;
}

inline std::string get_bytes(std::istream& is, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("truncated file while reading " + what);
  return s;
}

}  // namespace emoshare::binio
