#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sct/tensor.hpp"

namespace sct {

using NamedTensors = std::vector<std::pair<std::string, TensorF>>;

// GCKPT1 container: magic "GCKPT1", u32 tensor count, then per tensor
// u32 name length, name bytes, u32 rank, u32 dims, little-endian f32
// payload. Loading audits every name and shape against `params` before
// touching any weight; mismatches raise CheckpointError naming the tensor.
void checkpoint_save(const NamedTensors& params, const std::string& path);
void checkpoint_load(const std::string& path, const NamedTensors& params);

// Exact on-disk size of a checkpoint for these tensors.
std::size_t checkpoint_file_size(const NamedTensors& params);

}  // namespace sct
