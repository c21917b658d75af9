#pragma once

#include <istream>
#include <ostream>
#include <string>

#include "icil/common/error.hpp"

namespace icil::bin {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("truncated file while reading " + what);
  return v;
}

inline void put_bytes(std::ostream& os, const std::string& s) {
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string take_bytes(std::istream& is, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("truncated file while reading " + what);
  return s;
}

template <typename T>
void put_span(std::ostream& os, const T* data, std::size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void take_span(std::istream& is, T* data, std::size_t n, const std::string& what) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw FormatError("truncated file while reading " + what);
}

}  // namespace icil::bin
