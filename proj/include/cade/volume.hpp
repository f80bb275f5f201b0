#pragma once

// Scalar volumes, dynamic series and the on-disk tensor format.
//
// A tensor file is raw little-endian float32 data in row-major order with a
// JSON sidecar next to it (same stem, extension .json) holding at least
// `shape`. Series sidecars add `spacing_mm` (z, y, x) and `time_index`.

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cade/anchors.hpp"
#include "cade/geometry.hpp"

namespace cade {

using Spacing = std::array<double, 3>;

struct Volume {
  Shape3 shape{};
  std::vector<float> data;

  Volume() = default;
  explicit Volume(Shape3 s, float fill = 0.0f)
      : shape(s), data(std::size_t(s[0]) * s[1] * s[2], fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t index(int z, int y, int x) const noexcept {
    return (std::size_t(z) * shape[1] + y) * shape[2] + x;
  }
  float& at(int z, int y, int x) noexcept { return data[index(z, y, x)]; }
  float at(int z, int y, int x) const noexcept { return data[index(z, y, x)]; }
  bool contains(int z, int y, int x) const noexcept {
    return z >= 0 && y >= 0 && x >= 0 && z < shape[0] && y < shape[1] && x < shape[2];
  }
};

/// T volumes of one acquisition, all with the same shape.
struct DynamicSeries {
  std::vector<Volume> volumes;
  Spacing spacing_mm{1.0, 1.0, 1.0};
  std::vector<int> time_index;

  int timepoints() const noexcept { return int(volumes.size()); }
  Shape3 shape() const { return volumes.empty() ? Shape3{} : volumes.front().shape; }
  /// Throws InvalidInput when empty or when volume shapes differ.
  void validate() const;
};

/// Voxel index range [lo, hi) per axis whose centers lie inside `box`.
struct VoxelRange {
  Shape3 lo{};
  Shape3 hi{};
  std::size_t count() const;
};
VoxelRange voxels_inside(const BoundingBox3D& box);

/// Sidecar path for a tensor file.
std::filesystem::path sidecar_path(const std::filesystem::path& raw);

/// Writes `data` and a sidecar containing `meta` plus `shape`.
void write_tensor_file(const std::filesystem::path& raw, const std::vector<int>& shape,
                       std::span<const float> data, nlohmann::json meta = nlohmann::json::object());

struct TensorFile {
  std::vector<int> shape;
  std::vector<float> data;
  nlohmann::json meta;
};

/// Missing data or sidecar raises MissingFile; size mismatch raises Io.
TensorFile read_tensor_file(const std::filesystem::path& raw);

void write_series(const std::filesystem::path& raw, const DynamicSeries& series);
/// Accepts shape [T, D, H, W] or [D, H, W] (a single volume).
DynamicSeries read_series(const std::filesystem::path& raw);

}  // namespace cade
