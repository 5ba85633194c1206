#include "sct/volume.hpp"

#include <cmath>
#include <cstring>

#include "sct/fileio.hpp"

namespace sct {

namespace {
constexpr char kMagic[4] = {'G', 'V', 'L', '1'};
constexpr std::uint32_t kDtypeF32 = 1;
}  // namespace

std::size_t gvol_file_size(const Volume& v) {
  return 4 + 4 + 4 * v.dims.size() + 4 + 12 + 4 * v.numel();
}

void gvol_write(const Volume& v, const std::string& path) {
  if (v.dims.size() != 2 && v.dims.size() != 3)
    throw ContractError("gvol_write: rank must be 2 or 3");
  if (v.voxels.size() != v.numel())
    throw ContractError("gvol_write: voxel count does not match dims");
  for (float x : v.voxels)
    if (!std::isfinite(x)) throw ContractError("gvol_write: non-finite voxel");

  ByteWriter w;
  w.buf.reserve(gvol_file_size(v));
  w.bytes(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(v.dims.size()));
  for (auto d : v.dims) w.u32(static_cast<std::uint32_t>(d));
  w.u32(kDtypeF32);
  for (float s : v.spacing) w.f32(s);
  w.bytes(v.voxels.data(), 4 * v.voxels.size());  // host is little-endian
  write_file_atomic(path, w.buf.data(), w.buf.size());
}

Volume gvol_read(const std::string& path) {
  auto buf = read_file(path);
  ByteReader r(buf);

  char magic[4];
  r.need(4, "magic");
  std::memcpy(magic, buf.data(), 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic (want GVL1)", 0);
  r.pos = 4;

  Volume v;
  std::uint32_t rank = r.u32("rank");
  if (rank != 2 && rank != 3)
    throw FormatError("rank must be 2 or 3, got " + std::to_string(rank), 4);
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::size_t at = r.pos;
    std::uint32_t d = r.u32("dim");
    if (d == 0) throw FormatError("zero extent in dim " + std::to_string(i), at);
    v.dims.push_back(d);
  }
  std::size_t dtype_at = r.pos;
  std::uint32_t dtype = r.u32("dtype");
  if (dtype != kDtypeF32)
    throw FormatError("unknown dtype code " + std::to_string(dtype), dtype_at);
  for (int i = 0; i < 3; ++i) {
    std::size_t at = r.pos;
    float s = r.f32("spacing");
    if (!std::isfinite(s) || s <= 0.0f)
      throw FormatError("invalid spacing", at);
    v.spacing[i] = s;
  }

  std::size_t n = v.numel();
  v.voxels.resize(n);
  std::size_t payload_at = r.pos;
  r.bytes(v.voxels.data(), 4 * n, "voxel payload");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(v.voxels[i]))
      throw FormatError("non-finite voxel " + std::to_string(i), payload_at + 4 * i);
  r.expect_end("voxel payload");
  return v;
}

}  // namespace sct
