#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sct/tensor.hpp"

namespace sct {

// Slice pairs loaded from a directory of cbct_*.gvol / ct_*.gvol files
// (optional labels_*.gvol), resized to a common side and normalized to
// [-1,1]. DataError lists orphaned files when the pairing is incomplete.
struct PairedDataset {
  std::size_t side = 0;
  std::vector<std::string> ids;
  std::vector<std::vector<float>> cbct;  // normalized
  std::vector<std::vector<float>> ct;    // normalized
  std::vector<std::vector<std::uint8_t>> labels;  // empty when absent

  std::size_t size() const { return ids.size(); }
};

PairedDataset dataset_build(const std::string& dir, std::size_t target_side);

struct Batch {
  TensorF input;   // [B,1,side,side] normalized CBCT
  TensorF target;  // [B,1,side,side] normalized CT
};

// Seeded permutation of the pairs, grouped into full batches (remainder
// dropped). Same seed -> identical order.
std::vector<Batch> epoch_batches(const PairedDataset& ds, std::size_t batch,
                                 std::uint64_t shuffle_seed);

// Nearest-neighbour resize of a row-major grid (label-safe).
template <class T>
std::vector<T> resize_nearest(const std::vector<T>& src, std::size_t h,
                              std::size_t w, std::size_t oh, std::size_t ow);

}  // namespace sct
