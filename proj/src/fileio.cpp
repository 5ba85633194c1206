#include "sct/fileio.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swaps");

namespace sct {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DataError("cannot open '" + path + "' for reading");
  auto size = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::vector<std::uint8_t> buf(size);
  if (size && !f.read(reinterpret_cast<char*>(buf.data()),
                      static_cast<std::streamsize>(size)))
    throw DataError("short read on '" + path + "'");
  return buf;
}

void write_file_atomic(const std::string& path, const void* data, std::size_t n) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + tmp + "' for writing");
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    f.flush();
    if (!f) {
      f.close();
      std::remove(tmp.c_str());
      throw DataError("write failed on '" + tmp + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw DataError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
  }
}

}  // namespace sct
