#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "cade/geometry.hpp"

namespace cade {

/// Pyramid levels used by the detector, in output order.
inline constexpr int kNumLevels = 5;
inline constexpr std::array<const char*, kNumLevels> kLevelNames{"P2", "P3", "P4", "P5", "P6"};

using Shape3 = std::array<int, 3>;  // (d, h, w)

struct AnchorConfig {
  /// In-plane side length (voxels) per level, P2..P6.
  std::array<double, kNumLevels> base_sizes{16, 32, 64, 128, 256};
  /// Isotropic multipliers applied to the base size.
  std::vector<double> scales{1.0, 1.2599210498948732, 1.5874010519681994};
  /// Per-axis (z, y, x) multipliers; the default varies the slice extent.
  std::vector<std::array<double, 3>> ratios{{0.5, 1, 1}, {1, 1, 1}, {2, 1, 1}};
  /// Per-axis (z, y, x) stride of each level in input voxels.
  std::array<std::array<double, 3>, kNumLevels> strides{
      {{4, 4, 4}, {8, 8, 8}, {16, 16, 16}, {32, 32, 32}, {64, 64, 64}}};

  int anchors_per_position() const { return int(scales.size() * ratios.size()); }
  void validate() const;
};

void to_json(nlohmann::json& j, const AnchorConfig& c);
/// Strict: unknown keys raise ConfigError with the key path under `prefix`.
AnchorConfig anchor_config_from_json(const nlohmann::json& j, const std::string& prefix = "anchors");

/// Anchors of one level. Order: voxel raster (z, y, x), then scale, then
/// ratio. Centers sit at (index + 0.5) * stride; boxes are not clipped.
std::vector<BoundingBox3D> generate_anchors(int level, const Shape3& feature_shape,
                                            const AnchorConfig& config);

/// Anchors of all levels concatenated P2..P6.
std::vector<BoundingBox3D> generate_all_anchors(const std::array<Shape3, kNumLevels>& shapes,
                                                const AnchorConfig& config);

struct AnchorAssignment {
  std::size_t anchor_index = 0;
  bool positive = false;
  int gt_index = -1;  // positives only
  BoxOffsets target{};  // positives only
};

inline constexpr double kDefaultMatchIou = 0.2;

/// Single-threshold assignment: each anchor takes its max-IoU ground truth
/// (ties to the lower index) and is positive iff that IoU >= pos_threshold.
/// For every ground truth the anchor with the highest nonzero IoU is forced
/// positive on it.
std::vector<AnchorAssignment> match_anchors(const std::vector<BoundingBox3D>& anchors,
                                            const std::vector<BoundingBox3D>& gts,
                                            double pos_threshold = kDefaultMatchIou);

}  // namespace cade
