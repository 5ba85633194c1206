#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sct/errors.hpp"

namespace sct {

// Whole-file read; DataError when the file is missing or unreadable.
std::vector<std::uint8_t> read_file(const std::string& path);

// Write to <path>.tmp then rename, so failures never leave partial files.
void write_file_atomic(const std::string& path, const void* data, std::size_t n);

// Little-endian cursor over an in-memory file. Every accessor throws a
// FormatError carrying the current byte offset when the buffer runs out.
struct ByteReader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  explicit ByteReader(const std::vector<std::uint8_t>& b) : buf(b) {}

  void need(std::size_t n, const std::string& what) const {
    if (pos + n > buf.size())
      throw FormatError("truncated file: expected " + what, pos);
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32(const std::string& what) {
    std::uint32_t raw = u32(what);
    float v;
    static_assert(sizeof(v) == 4);
    __builtin_memcpy(&v, &raw, 4);
    return v;
  }
  void bytes(void* out, std::size_t n, const std::string& what) {
    need(n, what);
    __builtin_memcpy(out, buf.data() + pos, n);
    pos += n;
  }
  void expect_end(const std::string& what) const {
    if (pos != buf.size())
      throw FormatError("trailing bytes after " + what, pos);
  }
};

struct ByteWriter {
  std::vector<std::uint8_t> buf;

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(std::uint8_t(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t raw;
    __builtin_memcpy(&raw, &v, 4);
    u32(raw);
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf.insert(buf.end(), p, p + n);
  }
};

}  // namespace sct
