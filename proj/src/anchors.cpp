#include "cade/anchors.hpp"

#include "cade/error.hpp"
#include "cade/json_reader.hpp"

namespace cade {

void AnchorConfig::validate() const {
  if (scales.empty()) throw ConfigError("anchors.scales", "must not be empty");
  if (ratios.empty()) throw ConfigError("anchors.ratios", "must not be empty");
  for (double b : base_sizes) {
    if (!(b > 0)) throw ConfigError("anchors.base_sizes", "must be positive");
  }
  for (double s : scales) {
    if (!(s > 0)) throw ConfigError("anchors.scales", "must be positive");
  }
  for (const auto& r : ratios) {
    for (double v : r) {
      if (!(v > 0)) throw ConfigError("anchors.ratios", "must be positive");
    }
  }
  for (const auto& s : strides) {
    for (double v : s) {
      if (!(v > 0)) throw ConfigError("anchors.strides", "must be positive");
    }
  }
}

void to_json(nlohmann::json& j, const AnchorConfig& c) {
  j = {{"base_sizes", c.base_sizes}, {"scales", c.scales}, {"ratios", c.ratios},
       {"strides", c.strides}};
}

AnchorConfig anchor_config_from_json(const nlohmann::json& j, const std::string& prefix) {
  AnchorConfig c;
  StrictObject obj(j, prefix);
  obj.read("base_sizes", c.base_sizes);
  obj.read("scales", c.scales);
  obj.read("ratios", c.ratios);
  obj.read("strides", c.strides);
  obj.finish();
  c.validate();
  return c;
}

std::vector<BoundingBox3D> generate_anchors(int level, const Shape3& shape,
                                            const AnchorConfig& config) {
  require(level >= 0 && level < kNumLevels, "generate_anchors: bad level");
  require(shape[0] > 0 && shape[1] > 0 && shape[2] > 0, "generate_anchors: empty feature map");
  const auto& stride = config.strides[level];
  const double base = config.base_sizes[level];

  std::vector<Point3> sides;
  for (double s : config.scales) {
    for (const auto& r : config.ratios) sides.push_back({base * s * r[0], base * s * r[1], base * s * r[2]});
  }

  std::vector<BoundingBox3D> out;
  out.reserve(std::size_t(shape[0]) * shape[1] * shape[2] * sides.size());
  for (int z = 0; z < shape[0]; ++z) {
    for (int y = 0; y < shape[1]; ++y) {
      for (int x = 0; x < shape[2]; ++x) {
        const Point3 c{(z + 0.5) * stride[0], (y + 0.5) * stride[1], (x + 0.5) * stride[2]};
        for (const auto& s : sides) {
          out.emplace_back(Point3{c.z - 0.5 * s.z, c.y - 0.5 * s.y, c.x - 0.5 * s.x},
                           Point3{c.z + 0.5 * s.z, c.y + 0.5 * s.y, c.x + 0.5 * s.x});
        }
      }
    }
  }
  return out;
}

std::vector<BoundingBox3D> generate_all_anchors(const std::array<Shape3, kNumLevels>& shapes,
                                                const AnchorConfig& config) {
  std::vector<BoundingBox3D> all;
  for (int l = 0; l < kNumLevels; ++l) {
    auto level = generate_anchors(l, shapes[l], config);
    all.insert(all.end(), level.begin(), level.end());
  }
  return all;
}

std::vector<AnchorAssignment> match_anchors(const std::vector<BoundingBox3D>& anchors,
                                            const std::vector<BoundingBox3D>& gts,
                                            double pos_threshold) {
  require(pos_threshold > 0 && pos_threshold < 1, "match_anchors: threshold must be in (0,1)");
  std::vector<AnchorAssignment> out(anchors.size());
  std::vector<double> best_for_gt(gts.size(), 0.0);
  std::vector<std::size_t> best_anchor_for_gt(gts.size(), 0);

  for (std::size_t i = 0; i < anchors.size(); ++i) {
    auto& as = out[i];
    as.anchor_index = i;
    double best = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (intersection_volume(anchors[i], gts[g]) <= 0) continue;
      const double iou = iou3d(anchors[i], gts[g]);
      if (iou > best) {
        best = iou;
        as.gt_index = int(g);
      }
      if (iou > best_for_gt[g]) {
        best_for_gt[g] = iou;
        best_anchor_for_gt[g] = i;
      }
    }
    as.positive = as.gt_index >= 0 && best >= pos_threshold;
    if (!as.positive) as.gt_index = -1;
  }

  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (best_for_gt[g] <= 0) continue;
    auto& as = out[best_anchor_for_gt[g]];
    as.positive = true;
    as.gt_index = int(g);
  }

  for (auto& as : out) {
    if (as.positive) as.target = encode_box(anchors[as.anchor_index], gts[std::size_t(as.gt_index)]);
  }
  return out;
}

}  // namespace cade
