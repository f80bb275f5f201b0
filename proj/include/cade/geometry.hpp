#pragma once

// Axis order is (z, y, x) = (slice, row, column) throughout the project.
// Boxes are half-open continuous regions in voxel units: voxel (i, j, k)
// occupies [i, i+1) x [j, j+1) x [k, k+1).

#include <array>
#include <span>
#include <string>
#include <vector>

namespace cade {

struct Point3 {
  double z = 0;
  double y = 0;
  double x = 0;

  double& operator[](int axis) { return axis == 0 ? z : (axis == 1 ? y : x); }
  double operator[](int axis) const { return axis == 0 ? z : (axis == 1 ? y : x); }
  friend bool operator==(const Point3&, const Point3&) = default;
  friend auto operator<=>(const Point3&, const Point3&) = default;
};

class BoundingBox3D {
 public:
  /// Throws InvalidInput unless min < max on every axis and all finite.
  BoundingBox3D(Point3 min_corner, Point3 max_corner);

  const Point3& min() const noexcept { return min_; }
  const Point3& max() const noexcept { return max_; }
  Point3 center() const noexcept;
  Point3 size() const noexcept;
  double volume() const noexcept;

  /// Translate by `offset` voxels.
  BoundingBox3D shifted(const Point3& offset) const;

  friend bool operator==(const BoundingBox3D&, const BoundingBox3D&) = default;

 private:
  Point3 min_;
  Point3 max_;
};

struct Detection {
  BoundingBox3D box;
  double score = 0;
  std::string breast_id;
};

/// Three center offsets normalized by anchor side, then three log side ratios.
using BoxOffsets = std::array<double, 6>;

/// Intersection over union; throws InvalidInput on zero-volume boxes.
double iou3d(const BoundingBox3D& a, const BoundingBox3D& b);

/// Intersection volume (no validation).
double intersection_volume(const BoundingBox3D& a, const BoundingBox3D& b) noexcept;

/// Strict detection order: score descending, then lexicographic min corner,
/// then max corner.
bool detection_precedes(const Detection& a, const Detection& b) noexcept;

/// Greedy score-descending suppression. Survivors are score-sorted and no
/// two of them have IoU above `iou_threshold`.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

/// Decoded log-ratios are clamped to +-kMaxLogRatio before exponentiation.
inline constexpr double kMaxLogRatio = 4.0;

BoxOffsets encode_box(const BoundingBox3D& anchor, const BoundingBox3D& gt);
BoundingBox3D decode_box(const BoundingBox3D& anchor, const BoxOffsets& offsets);

}  // namespace cade
