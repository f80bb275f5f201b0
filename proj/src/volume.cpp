#include "cade/volume.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cade/error.hpp"

namespace cade {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

void DynamicSeries::validate() const {
  if (volumes.empty()) fail(ErrorKind::InvalidInput, "dynamic series has no volumes");
  const Shape3 s = volumes.front().shape;
  for (std::size_t t = 0; t < volumes.size(); ++t) {
    if (volumes[t].shape != s) {
      fail(ErrorKind::InvalidInput, "volume " + std::to_string(t) + " has a different shape");
    }
    if (volumes[t].data.size() != std::size_t(s[0]) * s[1] * s[2]) {
      fail(ErrorKind::InvalidInput, "volume " + std::to_string(t) + " has inconsistent storage");
    }
  }
  if (!time_index.empty() && time_index.size() != volumes.size()) {
    fail(ErrorKind::InvalidInput, "time_index length differs from the number of volumes");
  }
}

std::size_t VoxelRange::count() const {
  std::size_t n = 1;
  for (int a = 0; a < 3; ++a) n *= std::size_t(std::max(0, hi[a] - lo[a]));
  return n;
}

VoxelRange voxels_inside(const BoundingBox3D& box) {
  VoxelRange r;
  for (int a = 0; a < 3; ++a) {
    r.lo[a] = int(std::ceil(box.min()[a] - 0.5));
    r.hi[a] = int(std::ceil(box.max()[a] - 0.5));
  }
  return r;
}

fs::path sidecar_path(const fs::path& raw) {
  fs::path p = raw;
  p.replace_extension(".json");
  return p;
}

void write_tensor_file(const fs::path& raw, const std::vector<int>& shape, std::span<const float> data,
                       json meta) {
  std::size_t n = 1;
  for (int s : shape) n *= std::size_t(s);
  require(n == data.size(), "write_tensor_file: shape does not match data");
  require(sidecar_path(raw) != raw, "write_tensor_file: data file must not end in .json");
  {
    std::ofstream out(raw, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + raw.string());
    out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size() * sizeof(float)));
    if (!out) fail(ErrorKind::Io, "short write to " + raw.string());
  }
  meta["shape"] = shape;
  std::ofstream side(sidecar_path(raw));
  if (!side) fail(ErrorKind::Io, "cannot write " + sidecar_path(raw).string());
  side << meta.dump(2) << "\n";
}

TensorFile read_tensor_file(const fs::path& raw) {
  const fs::path side = sidecar_path(raw);
  if (!fs::exists(raw)) fail(ErrorKind::MissingFile, "missing tensor file " + raw.string());
  if (!fs::exists(side)) fail(ErrorKind::MissingFile, "missing sidecar " + side.string());
  TensorFile tf;
  {
    std::ifstream in(side);
    try {
      tf.meta = json::parse(in);
      tf.shape = tf.meta.at("shape").get<std::vector<int>>();
    } catch (const json::exception& e) {
      fail(ErrorKind::Io, "bad sidecar " + side.string() + ": " + e.what());
    }
  }
  std::size_t n = 1;
  for (int s : tf.shape) {
    if (s < 0) fail(ErrorKind::Io, "negative extent in " + side.string());
    n *= std::size_t(s);
  }
  if (fs::file_size(raw) != n * sizeof(float)) {
    fail(ErrorKind::Io, raw.string() + " size does not match its sidecar shape");
  }
  tf.data.resize(n);
  std::ifstream in(raw, std::ios::binary);
  in.read(reinterpret_cast<char*>(tf.data.data()), std::streamsize(n * sizeof(float)));
  if (!in) fail(ErrorKind::Io, "short read from " + raw.string());
  return tf;
}

void write_series(const fs::path& raw, const DynamicSeries& series) {
  series.validate();
  const Shape3 s = series.shape();
  const std::size_t vol = std::size_t(s[0]) * s[1] * s[2];
  std::vector<float> flat;
  flat.reserve(vol * series.volumes.size());
  for (const auto& v : series.volumes) flat.insert(flat.end(), v.data.begin(), v.data.end());
  std::vector<int> time_index = series.time_index;
  if (time_index.empty()) {
    for (int t = 0; t < series.timepoints(); ++t) time_index.push_back(t);
  }
  json meta = {{"spacing_mm", series.spacing_mm}, {"time_index", time_index}};
  write_tensor_file(raw, {series.timepoints(), s[0], s[1], s[2]}, flat, meta);
}

DynamicSeries read_series(const fs::path& raw) {
  TensorFile tf = read_tensor_file(raw);
  if (tf.shape.size() == 3) tf.shape.insert(tf.shape.begin(), 1);
  if (tf.shape.size() != 4) fail(ErrorKind::InvalidInput, raw.string() + ": series shape must be 3D or 4D");
  DynamicSeries series;
  const Shape3 s{tf.shape[1], tf.shape[2], tf.shape[3]};
  const std::size_t vol = std::size_t(s[0]) * s[1] * s[2];
  for (int t = 0; t < tf.shape[0]; ++t) {
    Volume v(s);
    std::memcpy(v.data.data(), tf.data.data() + vol * t, vol * sizeof(float));
    series.volumes.push_back(std::move(v));
  }
  try {
    if (tf.meta.contains("spacing_mm")) series.spacing_mm = tf.meta["spacing_mm"].get<Spacing>();
    if (tf.meta.contains("time_index")) series.time_index = tf.meta["time_index"].get<std::vector<int>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, "bad sidecar metadata for " + raw.string() + ": " + e.what());
  }
  series.validate();
  return series;
}

}  // namespace cade
