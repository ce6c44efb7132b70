#pragma once

// Little-endian primitive IO shared by the shard and parameter file formats.

#include "saetrack/common.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace saetrack::detail {

template <typename T>
T byteswap_if_big(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

template <typename T>
void write_le(std::ostream& os, T v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void write_le_array(std::ostream& os, const T* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  } else {
    for (std::size_t i = 0; i < n; ++i) write_le(os, data[i]);
  }
}

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  template <typename T>
  T get() {
    T v;
    if (!is_.read(reinterpret_cast<char*>(&v), sizeof(T))) {
      throw CorruptionError(what_ + ": truncated file");
    }
    return byteswap_if_big(v);
  }

  template <typename T>
  void get_array(T* data, std::size_t n) {
    if (!is_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)))) {
      throw CorruptionError(what_ + ": truncated payload");
    }
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < n; ++i) data[i] = byteswap_if_big(data[i]);
    }
  }

  std::string get_bytes(std::size_t n) {
    std::string s(n, '\0');
    if (n > 0 && !is_.read(s.data(), static_cast<std::streamsize>(n))) {
      throw CorruptionError(what_ + ": truncated header");
    }
    return s;
  }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace saetrack::detail
