#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cade/error.hpp"
#include "cade/geometry.hpp"
#include "cade/records.hpp"
#include "test_support.hpp"

using namespace cade;

TEST_CASE("iou3d hand cases") {
  const BoundingBox3D a{{0, 0, 0}, {1, 1, 1}};
  CHECK(iou3d(a, a) == 1.0);
  CHECK(iou3d(a, BoundingBox3D{{5, 5, 5}, {6, 6, 6}}) == 0.0);
  const BoundingBox3D b{{0, 0, 0}, {2, 2, 2}};
  const BoundingBox3D c{{1, 1, 1}, {3, 3, 3}};
  CHECK(iou3d(b, c) == doctest::Approx(1.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("iou3d agrees with Monte-Carlo voxel counting") {
  // Sample points uniformly in the union's bounding region.
  const BoundingBox3D b{{0, 0, 0}, {2, 2, 2}};
  const BoundingBox3D c{{1, 1, 1}, {3, 3, 3}};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 3);
  auto inside = [](const BoundingBox3D& box, const Point3& p) {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < box.min()[a] || p[a] >= box.max()[a]) return false;
    }
    return true;
  };
  int in_both = 0, in_any = 0;
  for (int i = 0; i < 400000; ++i) {
    const Point3 p{u(rng), u(rng), u(rng)};
    const bool ib = inside(b, p), ic = inside(c, p);
    in_both += ib && ic;
    in_any += ib || ic;
  }
  CHECK(double(in_both) / in_any == doctest::Approx(iou3d(b, c)).epsilon(0.05));
}

TEST_CASE("degenerate and non-finite boxes are rejected") {
  CHECK_THROWS_AS(BoundingBox3D({0, 0, 0}, {1, 0, 1}), Error);
  CHECK_THROWS_AS(BoundingBox3D({0, 0, 0}, {1, NAN, 1}), Error);
  CHECK_THROWS_AS(BoundingBox3D({2, 0, 0}, {1, 1, 1}), Error);
}

TEST_CASE("iou3d properties on random pairs") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto a = test::random_box(rng, 20);
    const auto b = test::random_box(rng, 20);
    const double ab = iou3d(a, b);
    CHECK(ab == iou3d(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(iou3d(a, a) == 1.0);
    if (!(a == b)) CHECK(ab < 1.0);
  }
}

TEST_CASE("nms basic cases") {
  const BoundingBox3D box{{0, 0, 0}, {4, 4, 4}};
  auto kept = nms({{box, 0.8, "b"}, {box, 0.9, "b"}}, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);

  kept = nms({{box, 0.8, "b"}, {BoundingBox3D{{10, 10, 10}, {12, 12, 12}}, 0.9, "b"}}, 0.5);
  CHECK(kept.size() == 2);
  CHECK(kept[0].score == 0.9);
  CHECK(nms({}, 0.5).empty());
}

TEST_CASE("nms equals brute-force reference and ignores input order") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + int(rng() % 10);
    auto dets = test::random_detections(rng, n, 12, /*coarse_scores=*/trial % 2 == 0);
    const auto want = test::brute_force_nms(dets, 0.3);
    auto got = nms(dets, 0.3);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].box == want[i].box);
      CHECK(got[i].score == want[i].score);
    }
    std::shuffle(dets.begin(), dets.end(), rng);
    auto again = nms(dets, 0.3);
    REQUIRE(again.size() == got.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(again[i].box == got[i].box);
    for (std::size_t i = 0; i < got.size(); ++i) {
      for (std::size_t j = i + 1; j < got.size(); ++j) CHECK(iou3d(got[i].box, got[j].box) <= 0.3);
    }
  }
}

TEST_CASE("box codec identities") {
  const BoundingBox3D anchor{{2, 4, 6}, {6, 12, 14}};
  const auto zero = encode_box(anchor, anchor);
  for (double v : zero) CHECK(v == 0.0);
  CHECK(decode_box(anchor, BoxOffsets{}) == anchor);

  const Point3 c = anchor.center();
  const Point3 s = anchor.size();
  const BoundingBox3D doubled{{c.z - s.z, c.y - s.y, c.x - s.x}, {c.z + s.z, c.y + s.y, c.x + s.x}};
  const auto off = encode_box(anchor, doubled);
  for (int a = 0; a < 3; ++a) {
    CHECK(off[a] == doctest::Approx(0.0));
    CHECK(off[3 + a] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(decode_box(anchor, BoxOffsets{0, NAN, 0, 0, 0, 0}), Error);
}

TEST_CASE("codec round trip on random pairs and log-ratio clamp") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 1000; ++i) {
    const auto anchor = test::random_box(rng, 50);
    const auto gt = test::random_box(rng, 50);
    const auto back = decode_box(anchor, encode_box(anchor, gt));
    for (int a = 0; a < 3; ++a) {
      const double scale = std::max(1.0, std::abs(gt.max()[a]));
      CHECK(std::abs(back.min()[a] - gt.min()[a]) <= 1e-5 * scale);
      CHECK(std::abs(back.max()[a] - gt.max()[a]) <= 1e-5 * scale);
    }
  }
  const BoundingBox3D unit{{0, 0, 0}, {1, 1, 1}};
  const auto huge = decode_box(unit, BoxOffsets{0, 0, 0, 10, 10, 10});
  CHECK(huge.size().z == doctest::Approx(std::exp(kMaxLogRatio)));
}

TEST_CASE("json lines round trip for detections and annotations") {
  const auto dir = test::temp_dir("geometry_io");
  std::vector<Detection> dets{{BoundingBox3D{{1, 2, 3}, {4, 5, 6}}, 0.25, "s1:L"}};
  write_detections(dir / "d.jsonl", dets);
  const auto back = read_detections(dir / "d.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].box == dets[0].box);
  CHECK(back[0].score == 0.25);
  CHECK(back[0].breast_id == "s1:L");

  AnnotationSet set;
  set.add_breast("s1:L");
  set.add_breast("s1:R");
  set.lesions.push_back({BoundingBox3D{{0, 0, 0}, {2, 2, 2}}, LesionCategory::BenignFollowup, "s1:L"});
  write_annotations(dir / "a.jsonl", set);
  const auto read = read_annotations(dir / "a.jsonl");
  CHECK(read.breasts.size() == 2);
  REQUIRE(read.lesions.size() == 1);
  CHECK(read.lesions[0].category == LesionCategory::BenignFollowup);
  CHECK(read.breasts[0].study_id == "s1");
  CHECK_THROWS_AS(read_detections(dir / "missing.jsonl"), Error);
}
