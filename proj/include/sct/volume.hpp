#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace sct {

// HU-valued image volume, row-major with x fastest. 2D or 3D.
struct Volume {
  std::vector<std::size_t> dims;
  std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f};  // mm per axis
  std::vector<float> voxels;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
};

// GVOL container: "GVL1", u32 rank, u32 dims, u32 dtype (1 = f32),
// 3 x f32 spacing, raw little-endian f32 payload. Bit-exact round trip;
// malformed input raises FormatError with the offending byte offset.
void gvol_write(const Volume& v, const std::string& path);
Volume gvol_read(const std::string& path);

// Exact on-disk size for a volume with these dims.
std::size_t gvol_file_size(const Volume& v);

}  // namespace sct
