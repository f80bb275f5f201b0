#include <doctest.h>

#include <algorithm>
#include <random>

#include "cade/anchors.hpp"
#include "cade/error.hpp"
#include "oracles.hpp"

using namespace cade;
using namespace cade::test;

TEST_CASE("single cell yields nine anchors centred on the cell") {
  AnchorConfig cfg;
  const auto anchors = generate_anchors(0, {1, 1, 1}, cfg);
  REQUIRE(anchors.size() == 9);
  for (const auto& a : anchors) {
    CHECK(a.center().z == doctest::Approx(0.5 * cfg.strides[0][0]));
    CHECK(a.center().y == doctest::Approx(0.5 * cfg.strides[0][1]));
    CHECK(a.center().x == doctest::Approx(0.5 * cfg.strides[0][2]));
  }
  // scale-major, ratio-minor ordering
  CHECK(anchors[0].size().z == doctest::Approx(8.0));
  CHECK(anchors[1].size().z == doctest::Approx(16.0));
  CHECK(anchors[2].size().z == doctest::Approx(32.0));
  CHECK(anchors[3].size().y == doctest::Approx(16.0 * cfg.scales[1]));
}

TEST_CASE("anchor counts follow 9*d*h*w") {
  AnchorConfig cfg;
  CHECK(generate_anchors(0, {15, 48, 48}, cfg).size() == 311040u);
  CHECK(generate_anchors(4, {1, 3, 3}, cfg).size() == 81u);
  CHECK_THROWS_AS(generate_anchors(0, {0, 3, 3}, cfg), Error);
}

TEST_CASE("unit scale and ratio reproduce the base size") {
  AnchorConfig cfg;
  cfg.scales = {1.0};
  cfg.ratios = {{1, 1, 1}};
  const auto anchors = generate_anchors(2, {2, 1, 1}, cfg);
  REQUIRE(anchors.size() == 2);
  for (const auto& a : anchors) {
    CHECK(a.size().z == 64.0);
    CHECK(a.size().y == 64.0);
    CHECK(a.size().x == 64.0);
  }
  CHECK(anchors[1].center().z == doctest::Approx(1.5 * 16));
}

TEST_CASE("anchor generation is deterministic") {
  AnchorConfig cfg;
  CHECK(generate_anchors(1, {3, 4, 5}, cfg) == generate_anchors(1, {3, 4, 5}, cfg));
}

TEST_CASE("match_anchors simple cases") {
  AnchorConfig cfg;
  const auto anchors = generate_anchors(0, {2, 2, 2}, cfg);
  const auto none = match_anchors(anchors, {});
  CHECK(std::none_of(none.begin(), none.end(), [](const auto& a) { return a.positive; }));

  const auto m = match_anchors(anchors, {anchors[13]});
  CHECK(m[13].positive);
  CHECK(m[13].gt_index == 0);
  for (double v : m[13].target) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("match_anchors equals the IoU-matrix oracle and forces a match per lesion") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<BoundingBox3D> anchors, gts;
    for (int i = 0; i < 20; ++i) anchors.push_back(test::random_box(rng, 20));
    for (int g = 0; g < 2; ++g) gts.push_back(test::random_box(rng, 20));
    const auto got = match_anchors(anchors, gts, 0.2);
    const auto want = oracle_labels(anchors, gts, 0.2);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      CHECK(got[i].positive == want[i].first);
      if (got[i].positive) CHECK(got[i].gt_index == want[i].second);
    }
    for (std::size_t g = 0; g < gts.size(); ++g) {
      bool overlaps = false, matched = false;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        overlaps |= test::oracle_iou(anchors[i], gts[g]) > 0;
        matched |= got[i].positive && got[i].gt_index == int(g);
      }
      if (overlaps) CHECK(matched);
    }
    // permutation equivariance in the ground-truth list
    const auto swapped = match_anchors(anchors, {gts[1], gts[0]}, 0.2);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      CHECK(swapped[i].positive == got[i].positive);
      if (got[i].positive) CHECK(swapped[i].gt_index == 1 - got[i].gt_index);
    }
  }
}

TEST_CASE("positives above threshold carry the codec target") {
  AnchorConfig cfg;
  const auto anchors = generate_anchors(0, {3, 3, 3}, cfg);
  const BoundingBox3D gt{{3, 3, 3}, {11, 13, 12}};
  const auto m = match_anchors(anchors, {gt}, 0.2);
  for (const auto& a : m) {
    if (!a.positive) continue;
    CHECK(a.target == encode_box(anchors[a.anchor_index], gt));
  }
}

TEST_CASE("anchor config json is strict") {
  nlohmann::json j = AnchorConfig{};
  CHECK(anchor_config_from_json(j).base_sizes == AnchorConfig{}.base_sizes);
  j["bogus"] = 1;
  CHECK_THROWS_AS(anchor_config_from_json(j), ConfigError);
}
