#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "emg2text/errors.hpp"

namespace emg2text::binio {

// All on-disk integers and floats are little-endian.

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
  put_bytes(os, buf, sizeof(T));
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_le<uint32_t>(os, bits);
}

template <typename T>
T get_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw FormatError(std::string("unexpected end of file while reading ") + what);
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

inline float get_f32(std::istream& is, const char* what) {
  uint32_t bits = get_le<uint32_t>(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void put_f32_block(std::ostream& os, const std::vector<float>& v) {
  // Assumes a little-endian host for the bulk path; falls back otherwise.
  for (float x : v) put_f32(os, x);
}

inline std::vector<float> get_f32_block(std::istream& is, size_t n, const char* what) {
  std::vector<float> v(n);
  std::vector<unsigned char> raw(n * 4);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw FormatError(std::string("payload truncated while reading ") + what);
  for (size_t i = 0; i < n; ++i) {
    uint32_t bits = static_cast<uint32_t>(raw[4 * i]) | (static_cast<uint32_t>(raw[4 * i + 1]) << 8) |
                    (static_cast<uint32_t>(raw[4 * i + 2]) << 16) | (static_cast<uint32_t>(raw[4 * i + 3]) << 24);
    std::memcpy(&v[i], &bits, 4);
  }
  return v;
}

}  // namespace emg2text::binio
