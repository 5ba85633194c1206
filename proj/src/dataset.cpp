#include "sct/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "sct/losses.hpp"
#include "sct/rng.hpp"
#include "sct/volume.hpp"

namespace fs = std::filesystem;

namespace sct {

template <class T>
std::vector<T> resize_nearest(const std::vector<T>& src, std::size_t h,
                              std::size_t w, std::size_t oh, std::size_t ow) {
  if (src.size() != h * w) throw ShapeError("resize_nearest: bad source size");
  if (h == oh && w == ow) return src;
  std::vector<T> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    std::size_t sy = y * h / oh;
    for (std::size_t x = 0; x < ow; ++x) out[y * ow + x] = src[sy * w + x * w / ow];
  }
  return out;
}

template std::vector<float> resize_nearest(const std::vector<float>&, std::size_t,
                                           std::size_t, std::size_t, std::size_t);
template std::vector<double> resize_nearest(const std::vector<double>&, std::size_t,
                                            std::size_t, std::size_t, std::size_t);
template std::vector<std::uint8_t> resize_nearest(const std::vector<std::uint8_t>&,
                                                  std::size_t, std::size_t,
                                                  std::size_t, std::size_t);

namespace {

// 2D slice in HU -> normalized floats at the target side
std::vector<float> load_slice(const std::string& path, std::size_t side) {
  Volume v = gvol_read(path);
  if (v.dims.size() != 2)
    throw DataError("'" + path + "' is not a 2D slice");
  auto px = resize_nearest(v.voxels, v.dims[0], v.dims[1], side, side);
  std::vector<float> out(px.size());
  for (std::size_t i = 0; i < px.size(); ++i)
    out[i] = static_cast<float>(hu_to_norm(px[i]));
  return out;
}

}  // namespace

PairedDataset dataset_build(const std::string& dir, std::size_t target_side) {
  if (target_side == 0) throw ConfigError("dataset: target side must be positive");
  if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");

  std::map<std::string, std::string> cbct_files, ct_files, label_files;
  for (const auto& ent : fs::directory_iterator(dir)) {
    if (!ent.is_regular_file()) continue;
    std::string name = ent.path().filename().string();
    if (name.size() < 6 || name.substr(name.size() - 5) != ".gvol") continue;
    std::string stem = name.substr(0, name.size() - 5);
    auto claim = [&](const char* prefix, auto& into) {
      std::string p(prefix);
      if (stem.rfind(p, 0) == 0) into[stem.substr(p.size())] = ent.path().string();
    };
    claim("cbct_", cbct_files);
    claim("ct_", ct_files);
    claim("labels_", label_files);
  }

  std::string orphans;
  for (const auto& [key, path] : cbct_files)
    if (!ct_files.count(key)) orphans += " " + path;
  for (const auto& [key, path] : ct_files)
    if (!cbct_files.count(key)) orphans += " " + path;
  if (!orphans.empty())
    throw DataError("unpaired volume files:" + orphans);

  PairedDataset ds;
  ds.side = target_side;
  for (const auto& [key, cbct_path] : cbct_files) {
    ds.ids.push_back(key);
    ds.cbct.push_back(load_slice(cbct_path, target_side));
    ds.ct.push_back(load_slice(ct_files.at(key), target_side));
    auto it = label_files.find(key);
    if (it == label_files.end()) {
      ds.labels.emplace_back();
      continue;
    }
    Volume lv = gvol_read(it->second);
    if (lv.dims.size() != 2)
      throw DataError("'" + it->second + "' is not a 2D label grid");
    auto lpx = resize_nearest(lv.voxels, lv.dims[0], lv.dims[1], target_side,
                              target_side);
    std::vector<std::uint8_t> lab(lpx.size());
    for (std::size_t i = 0; i < lpx.size(); ++i)
      lab[i] = static_cast<std::uint8_t>(std::lround(lpx[i]));
    ds.labels.push_back(std::move(lab));
  }
  return ds;
}

std::vector<Batch> epoch_batches(const PairedDataset& ds, std::size_t batch,
                                 std::uint64_t shuffle_seed) {
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Pcg32 rng(shuffle_seed, 77);
  rng.shuffle(order);

  std::vector<Batch> out;
  std::size_t plane = ds.side * ds.side;
  for (std::size_t start = 0; start + batch <= order.size(); start += batch) {
    std::vector<float> in(batch * plane), tg(batch * plane);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& c = ds.cbct[order[start + b]];
      const auto& t = ds.ct[order[start + b]];
      std::copy(c.begin(), c.end(), in.begin() + b * plane);
      std::copy(t.begin(), t.end(), tg.begin() + b * plane);
    }
    Shape s{batch, 1, ds.side, ds.side};
    out.push_back({TensorF::from_data(s, std::move(in), false),
                   TensorF::from_data(s, std::move(tg), false)});
  }
  return out;
}

}  // namespace sct
