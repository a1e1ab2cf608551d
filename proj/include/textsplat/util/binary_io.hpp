#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

// Little-endian scalar encoding independent of host byte order.
namespace textsplat::util {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename U>
void write_le_uint(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U read_le_uint(std::istream& is, const char* what) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError(std::string("truncated input reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }
inline std::uint8_t read_u8(std::istream& is, const char* what) { return read_le_uint<std::uint8_t>(is, what); }
inline void write_u32(std::ostream& os, std::uint32_t v) { write_le_uint(os, v); }
inline std::uint32_t read_u32(std::istream& is, const char* what) { return read_le_uint<std::uint32_t>(is, what); }

inline void write_f32(std::ostream& os, float v) { write_le_uint(os, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(read_le_uint<std::uint32_t>(is, what));
}
inline void write_f64(std::ostream& os, double v) { write_le_uint(os, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(read_le_uint<std::uint64_t>(is, what));
}

inline void write_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }
inline void expect_magic(std::istream& is, const char (&magic)[5], const std::string& source) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw FormatError(source + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
  }
}

}  // namespace textsplat::util
