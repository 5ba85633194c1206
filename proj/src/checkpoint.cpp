#include "sct/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <map>

#include "sct/fileio.hpp"

namespace sct {

namespace {
constexpr char kMagic[6] = {'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kMaxRank = 8;
}  // namespace

std::size_t checkpoint_file_size(const NamedTensors& params) {
  std::size_t total = 6 + 4;
  for (const auto& [name, t] : params)
    total += 4 + name.size() + 4 + 4 * t.rank() + 4 * t.numel();
  return total;
}

void checkpoint_save(const NamedTensors& params, const std::string& path) {
  ByteWriter w;
  w.buf.reserve(checkpoint_file_size(params));
  w.bytes(kMagic, 6);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.bytes(t.data().data(), 4 * t.numel());  // host is little-endian
  }
  write_file_atomic(path, w.buf.data(), w.buf.size());
}

void checkpoint_load(const std::string& path, const NamedTensors& params) {
  auto buf = read_file(path);
  ByteReader r(buf);

  r.need(6, "magic");
  if (std::memcmp(buf.data(), kMagic, 6) != 0)
    throw FormatError("bad magic (want GCKPT1)", 0);
  r.pos = 6;

  struct Entry {
    Shape shape;
    std::size_t payload_at;
  };
  std::map<std::string, Entry> entries;
  std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::size_t name_at = r.pos;
    std::uint32_t name_len = r.u32("name length");
    if (name_len == 0 || name_len > 4096)
      throw FormatError("implausible name length " + std::to_string(name_len),
                        name_at);
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "tensor name");
    std::size_t rank_at = r.pos;
    std::uint32_t rank = r.u32("rank");
    if (rank > kMaxRank)
      throw FormatError("implausible rank " + std::to_string(rank), rank_at);
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::size_t dim_at = r.pos;
      std::uint32_t ext = r.u32("dim");
      if (ext == 0) throw FormatError("zero extent in '" + name + "'", dim_at);
      shape.push_back(ext);
      numel *= ext;
    }
    if (entries.count(name))
      throw FormatError("duplicate tensor '" + name + "'", name_at);
    std::size_t payload_at = r.pos;
    r.need(4 * numel, "payload of '" + name + "'");
    for (std::size_t k = 0; k < numel; ++k) {
      float v;
      std::memcpy(&v, buf.data() + payload_at + 4 * k, 4);
      if (!std::isfinite(v))
        throw FormatError("non-finite weight in '" + name + "'",
                          payload_at + 4 * k);
    }
    r.pos = payload_at + 4 * numel;
    entries.emplace(name, Entry{std::move(shape), payload_at});
  }
  r.expect_end("tensor table");

  // full audit before any weight is touched
  for (const auto& [name, t] : params) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape != t.shape())
      throw CheckpointError("shape mismatch for '" + name + "': file has " +
                            shape_str(it->second.shape) + ", model wants " +
                            shape_str(t.shape()));
  }
  if (entries.size() != params.size()) {
    std::map<std::string, Entry> extra = entries;
    for (const auto& [name, t] : params) extra.erase(name);
    throw CheckpointError("checkpoint has unexpected tensor '" +
                          extra.begin()->first + "'");
  }

  for (const auto& [name, t] : params) {
    const Entry& e = entries.at(name);
    TensorF handle = t;  // tensors are shared handles; copy for mutable access
    std::memcpy(handle.data().data(), buf.data() + e.payload_at, 4 * t.numel());
  }
}

}  // namespace sct
