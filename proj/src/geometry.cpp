#include "cade/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "cade/error.hpp"

namespace cade {

BoundingBox3D::BoundingBox3D(Point3 min_corner, Point3 max_corner)
    : min_(min_corner), max_(max_corner) {
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(min_[a]) || !std::isfinite(max_[a])) {
      fail(ErrorKind::InvalidInput, "bounding box has non-finite corner");
    }
    if (!(min_[a] < max_[a])) {
      fail(ErrorKind::InvalidInput, "bounding box is degenerate on axis " + std::to_string(a));
    }
  }
}

Point3 BoundingBox3D::center() const noexcept {
  return {0.5 * (min_.z + max_.z), 0.5 * (min_.y + max_.y), 0.5 * (min_.x + max_.x)};
}

Point3 BoundingBox3D::size() const noexcept {
  return {max_.z - min_.z, max_.y - min_.y, max_.x - min_.x};
}

double BoundingBox3D::volume() const noexcept {
  const Point3 s = size();
  return s.z * s.y * s.x;
}

BoundingBox3D BoundingBox3D::shifted(const Point3& o) const {
  return {{min_.z + o.z, min_.y + o.y, min_.x + o.x}, {max_.z + o.z, max_.y + o.y, max_.x + o.x}};
}

double intersection_volume(const BoundingBox3D& a, const BoundingBox3D& b) noexcept {
  double v = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = std::max(a.min()[axis], b.min()[axis]);
    const double hi = std::min(a.max()[axis], b.max()[axis]);
    if (hi <= lo) return 0.0;
    v *= hi - lo;
  }
  return v;
}

double iou3d(const BoundingBox3D& a, const BoundingBox3D& b) {
  const double va = a.volume();
  const double vb = b.volume();
  if (!(va > 0) || !(vb > 0)) fail(ErrorKind::InvalidInput, "iou3d: zero-volume box");
  const double inter = intersection_volume(a, b);
  const double iou = inter / (va + vb - inter);
  return std::clamp(iou, 0.0, 1.0);
}

bool detection_precedes(const Detection& a, const Detection& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  if (a.box.min() != b.box.min()) return a.box.min() < b.box.min();
  return a.box.max() < b.box.max();
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::sort(dets.begin(), dets.end(), detection_precedes);
  std::vector<Detection> kept;
  kept.reserve(dets.size());
  for (auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou3d(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

BoxOffsets encode_box(const BoundingBox3D& anchor, const BoundingBox3D& gt) {
  const Point3 ac = anchor.center();
  const Point3 as = anchor.size();
  const Point3 gc = gt.center();
  const Point3 gs = gt.size();
  BoxOffsets out{};
  for (int a = 0; a < 3; ++a) {
    out[a] = (gc[a] - ac[a]) / as[a];
    out[3 + a] = std::log(gs[a] / as[a]);
  }
  return out;
}

BoundingBox3D decode_box(const BoundingBox3D& anchor, const BoxOffsets& offsets) {
  for (double v : offsets) {
    if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, "decode_box: non-finite offset");
  }
  const Point3 ac = anchor.center();
  const Point3 as = anchor.size();
  Point3 lo;
  Point3 hi;
  for (int a = 0; a < 3; ++a) {
    const double c = ac[a] + offsets[a] * as[a];
    const double s = as[a] * std::exp(std::clamp(offsets[3 + a], -kMaxLogRatio, kMaxLogRatio));
    lo[a] = c - 0.5 * s;
    hi[a] = c + 0.5 * s;
  }
  return {lo, hi};
}

}  // namespace cade
