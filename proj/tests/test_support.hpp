#pragma once

// Shared generators and brute-force oracles for the test suites. The
// oracles deliberately avoid calling the code under test.

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cade/geometry.hpp"

namespace cade::test {

inline BoundingBox3D random_box(std::mt19937_64& rng, double extent) {
  std::uniform_real_distribution<double> pos(0, extent);
  std::uniform_real_distribution<double> len(0.5, extent / 2);
  const Point3 lo{pos(rng), pos(rng), pos(rng)};
  return {lo, {lo.z + len(rng), lo.y + len(rng), lo.x + len(rng)}};
}

inline std::vector<Detection> random_detections(std::mt19937_64& rng, int n, double extent,
                                                bool coarse_scores) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Detection> out;
  for (int i = 0; i < n; ++i) {
    double s = u(rng);
    if (coarse_scores) s = std::round(s * 3) / 3;  // force ties
    out.push_back({random_box(rng, extent), s, "b"});
  }
  return out;
}

inline double oracle_iou(const BoundingBox3D& a, const BoundingBox3D& b) {
  double inter = 1;
  double va = 1;
  double vb = 1;
  for (int ax = 0; ax < 3; ++ax) {
    const double lo = std::max(a.min()[ax], b.min()[ax]);
    const double hi = std::min(a.max()[ax], b.max()[ax]);
    inter *= std::max(0.0, hi - lo);
    va *= a.max()[ax] - a.min()[ax];
    vb *= b.max()[ax] - b.min()[ax];
  }
  return inter / (va + vb - inter);
}

/// Repeatedly take the best remaining detection and discard everything
/// overlapping it above the threshold.
inline std::vector<Detection> brute_force_nms(std::vector<Detection> pool, double thr) {
  auto better = [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.min() != b.box.min()) return a.box.min() < b.box.min();
    return a.box.max() < b.box.max();
  };
  std::vector<Detection> out;
  while (!pool.empty()) {
    auto best = pool.begin();
    for (auto it = pool.begin(); it != pool.end(); ++it) {
      if (better(*it, *best)) best = it;
    }
    const Detection chosen = *best;
    pool.erase(best);
    std::vector<Detection> rest;
    for (const auto& d : pool) {
      if (oracle_iou(chosen.box, d.box) <= thr) rest.push_back(d);
    }
    pool = std::move(rest);
    out.push_back(chosen);
  }
  return out;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("cade_test_" + tag + "_" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cade::test
