#pragma once

// Little-endian binary helpers shared by the dataset and index containers.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "qsr/common.hpp"

namespace qsr::io {

template <class T>
T load_le(const char* p) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  return std::bit_cast<T>(b);
}

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto b = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  out.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  char b[sizeof(T)];
  if (!in.read(b, sizeof(T)))
    throw FormatError("unexpected end of stream at byte offset " +
                      std::to_string(static_cast<long long>(in.tellg())));
  return load_le<T>(b);
}

inline void put_floats(std::ostream& out, const std::vector<float>& v) {
  for (float f : v) put_le(out, f);
}

inline std::vector<float> get_floats(std::istream& in, std::size_t n) {
  std::vector<float> v(n);
  for (auto& f : v) f = get_le<float>(in);
  return v;
}

/// Writes to `<path>.tmp` then renames over `path`.
inline void write_atomically(const std::filesystem::path& path,
                             const std::function<void(std::ostream&)>& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    body(out);
    out.flush();
    if (!out) throw IoError("write failed on '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

}  // namespace qsr::io
