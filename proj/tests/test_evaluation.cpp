#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "cade/error.hpp"
#include "cade/evaluation.hpp"
#include "oracles.hpp"

using namespace cade;
using namespace cade::test;

namespace {

FrocCurve curve_of(const std::vector<FrocPoint>& pts) {
  FrocCurve c;
  c.points = pts;
  return c;
}

}  // namespace

TEST_CASE("trivial matching cases") {
  AnnotationSet truth;
  truth.add_breast("a:R", "a");
  truth.add_breast("a:L", "a");
  truth.lesions.push_back({cube(0, 0, 0, 4), LesionCategory::Malignant, "a:R"});
  {
    const auto m = match_detections({{cube(0, 0, 0, 4), 0.9, "a:R"}}, truth);
    CHECK(m.hit(0));
    CHECK(m.disposition[0] == Disposition::TruePositive);
    CHECK(m.normal_breasts == 1);
  }
  {
    const auto m = match_detections({{cube(0, 0, 0, 4), 0.9, "a:L"}}, truth);
    CHECK_FALSE(m.hit(0));
    CHECK(m.disposition[0] == Disposition::FalsePositive);
  }
  {
    // A miss on a lesion-bearing breast is ignored.
    const auto m = match_detections({{cube(20, 20, 20, 4), 0.9, "a:R"}}, truth);
    CHECK(m.disposition[0] == Disposition::Ignored);
  }
  CHECK_THROWS_AS(match_detections({{cube(0, 0, 0, 4), 0.9, "zz:R"}}, truth), Error);
}

TEST_CASE("three detections, two lesions, one normal breast") {
  AnnotationSet truth;
  truth.add_breast("s:R", "s");
  truth.add_breast("s:L", "s");
  truth.lesions.push_back({cube(0, 0, 0, 4), LesionCategory::Malignant, "s:R"});
  truth.lesions.push_back({cube(0, 0, 3, 4), LesionCategory::BenignBiopsied, "s:R"});
  // d0 overlaps both lesions (better with lesion 1), d1 overlaps lesion 1.
  const std::vector<Detection> dets{{cube(0, 0, 2.5, 4), 0.9, "s:R"},
                                    {cube(0, 0, 3.2, 4), 0.8, "s:R"},
                                    {cube(5, 5, 5, 2), 0.7, "s:L"}};
  const auto m = match_detections(dets, truth);
  const auto o = oracle_match(dets, truth, 0.2);
  CHECK(m.lesion_detection == o.lesion_det);
  CHECK(m.lesion_detection[1] == 0);
  CHECK(m.lesion_detection[0] == -1);
  CHECK(m.disposition[1] == Disposition::Ignored);
  CHECK(m.disposition[2] == Disposition::FalsePositive);
}

TEST_CASE("matching equals the greedy oracle on random runs") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto run = random_run(rng, 5, trial % 2 == 0);
    const auto m = match_detections(run.detections, run.truth);
    const auto o = oracle_match(run.detections, run.truth, 0.2);
    CHECK(m.lesion_detection == o.lesion_det);
    for (std::size_t d = 0; d < run.detections.size(); ++d) CHECK(int(m.disposition[d]) == o.kind[d]);
  }
}

TEST_CASE("intersection over truth criterion") {
  const auto gt = cube(0, 0, 0, 4);
  const BoundingBox3D big{{0, 0, 0}, {4, 4, 40}};
  CHECK(overlap(big, gt, OverlapCriterion::IntersectionOverTruth) == doctest::Approx(1.0));
  CHECK(overlap(big, gt, OverlapCriterion::IoU) == doctest::Approx(0.1));
}

TEST_CASE("froc equals threshold-by-threshold recomputation") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto run = random_run(rng, 6, trial % 3 == 0);
    for (Metric metric : {Metric::DetectionRate, Metric::Sensitivity, Metric::BenignDetectionRate}) {
      const auto c = froc(run.detections, run.truth, metric);
      int normal = 0;
      for (const auto& b : run.truth.breasts) {
        normal += std::none_of(run.truth.lesions.begin(), run.truth.lesions.end(),
                               [&](const auto& l) { return l.breast_id == b.breast_id; });
      }
      int total = 0;
      for (const auto& l : run.truth.lesions) total += metric_includes(metric, l.category);
      REQUIRE(c.points.size() >= 1);
      CHECK(c.points[0].fp_rate == 0.0);
      CHECK(c.points[0].value == 0.0);
      for (std::size_t p = 1; p < c.points.size(); ++p) {
        std::vector<Detection> kept;
        for (const auto& d : run.detections) {
          if (d.score >= c.points[p].threshold) kept.push_back(d);
        }
        const auto o = oracle_match(kept, run.truth, 0.2);
        int fp = 0, hits = 0;
        for (int k : o.kind) fp += k == 1;
        for (std::size_t l = 0; l < run.truth.lesions.size(); ++l) {
          hits += o.lesion_det[l] >= 0 && metric_includes(metric, run.truth.lesions[l].category);
        }
        CHECK(c.points[p].fp_rate == double(fp) / normal);
        CHECK(c.points[p].value == double(hits) / total);
        // Monotone.
        CHECK(c.points[p].fp_rate >= c.points[p - 1].fp_rate);
        CHECK(c.points[p].value >= c.points[p - 1].value);
      }
    }
  }
}

TEST_CASE("perfect and silent detectors") {
  AnnotationSet truth;
  std::vector<Detection> perfect;
  for (int s = 0; s < 4; ++s) {
    const std::string sid = "s" + std::to_string(s);
    truth.add_breast(sid + ":R", sid);
    truth.add_breast(sid + ":L", sid);
    truth.lesions.push_back({cube(s, 0, 0, 3), LesionCategory::Malignant, sid + ":R"});
    perfect.push_back({cube(s, 0, 0, 3), 1.0, sid + ":R"});
  }
  const auto c = froc(perfect, truth, Metric::Sensitivity);
  CHECK(c.value_at(0.0) == 1.0);
  CHECK(cpm(c) == 1.0);
  const auto e = froc({}, truth, Metric::Sensitivity);
  CHECK(e.value_at(100.0) == 0.0);
  CHECK(cpm(e) == 0.0);
  CHECK_THROWS_AS(froc(perfect, truth, Metric::BenignDetectionRate), Error);
  AnnotationSet no_normal;
  no_normal.add_breast("x:R", "x");
  no_normal.lesions.push_back({cube(0, 0, 0, 3), LesionCategory::Malignant, "x:R"});
  CHECK_THROWS_AS(froc({}, no_normal, Metric::Sensitivity), Error);
}

TEST_CASE("cpm step interpolation") {
  for (double c : {0.0, 0.3, 0.77, 1.0}) {
    CHECK(cpm(curve_of({{0, c, 1}, {8, c, 0}})) == c);
  }
  CHECK(cpm(curve_of({{0, 0, 1}, {7.99, 0, 0.5}, {8, 1.0, 0}})) == 1.0 / 7.0);
  CHECK(cpm(curve_of({{0, 0, 1}, {0.125, 0.5, 0.5}, {1, 1, 0}})) == (0.5 * 3 + 1.0 * 4) / 7.0);
  CHECK(cpm(curve_of({})) == 0.0);
}

TEST_CASE("cpm is bounded by the curve maximum") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto run = random_run(rng, 6, false);
    const auto c = froc(run.detections, run.truth, Metric::DetectionRate);
    double mx = 0;
    for (const auto& p : c.points) mx = std::max(mx, p.value);
    const double v = cpm(c);
    CHECK(v >= 0.0);
    CHECK(v <= mx);
  }
}

TEST_CASE("detection rate is the lesion-weighted mean of sensitivity and benign rate") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto run = random_run(rng, 8, trial % 2 == 0);
    const auto all = froc(run.detections, run.truth, Metric::DetectionRate);
    const auto mal = froc(run.detections, run.truth, Metric::Sensitivity);
    const auto ben = froc(run.detections, run.truth, Metric::BenignDetectionRate);
    REQUIRE(all.points.size() == mal.points.size());
    REQUIRE(all.points.size() == ben.points.size());
    CHECK(all.lesions == mal.lesions + ben.lesions);
    for (std::size_t p = 0; p < all.points.size(); ++p) {
      // Counts are recovered exactly from the rates.
      const long hm = std::lround(mal.points[p].value * mal.lesions);
      const long hb = std::lround(ben.points[p].value * ben.lesions);
      CHECK(mal.points[p].value == double(hm) / mal.lesions);
      CHECK(ben.points[p].value == double(hb) / ben.lesions);
      const double weighted = double(hm + hb) / double(mal.lesions + ben.lesions);
      CHECK(all.points[p].value == weighted);
      CHECK(all.points[p].value >= std::min(mal.points[p].value, ben.points[p].value));
      CHECK(all.points[p].value <= std::max(mal.points[p].value, ben.points[p].value));
    }
  }
}

TEST_CASE("metrics are invariant under monotone score rescaling") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto run = random_run(rng, 6, trial % 2 == 0);
    const auto before = froc(run.detections, run.truth, Metric::DetectionRate);
    for (auto& d : run.detections) d.score = 0.1 + 0.5 * d.score * d.score;
    const auto after = froc(run.detections, run.truth, Metric::DetectionRate);
    REQUIRE(before.points.size() == after.points.size());
    for (std::size_t p = 0; p < before.points.size(); ++p) {
      CHECK(before.points[p].fp_rate == after.points[p].fp_rate);
      CHECK(before.points[p].value == after.points[p].value);
    }
  }
}

TEST_CASE("bootstrap of identical runs gives p = 1 and strict dominance gives p = 0") {
  std::mt19937_64 rng(11);
  const auto run = random_run(rng, 10, false);
  const auto same = bootstrap_compare(run, run, Metric::DetectionRate, 1000, 3);
  CHECK(same.p == 1.0);
  CHECK(same.cpm_a == same.cpm_b);

  RunRecord a, b;
  a.truth = b.truth = run.truth;
  for (const auto& l : run.truth.lesions) a.detections.push_back({l.box, 0.9, l.breast_id});
  const auto dom = bootstrap_compare(a, b, Metric::DetectionRate, 1000, 3);
  CHECK(dom.p == 0.0);
  CHECK(dom.cpm_a == 1.0);
  CHECK(dom.cpm_b == 0.0);

  RunRecord other = b;
  other.truth.add_breast("new:R", "new");
  CHECK_THROWS_AS(bootstrap_compare(a, other, Metric::DetectionRate, 10, 3), Error);
}

TEST_CASE("seeded bootstrap matches an independent resampling loop") {
  std::mt19937_64 rng(12);
  const auto a = random_run(rng, 12, false);
  RunRecord b = a;
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& d : b.detections) d.score = u(rng);
  for (Metric metric : {Metric::DetectionRate, Metric::Sensitivity}) {
    const int n = 200;
    const auto cmp = bootstrap_compare(a, b, metric, n, 77);
    const CaseTable table(a);
    int nonpositive = 0;
    for (int i = 0; i < n; ++i) {
      const auto idx = bootstrap_indices(table, metric, 77, i);
      const auto ra = materialize(a, table.studies(), idx);
      const auto rb = materialize(b, table.studies(), idx);
      const double da = cpm(froc(ra.detections, ra.truth, metric));
      const double db = cpm(froc(rb.detections, rb.truth, metric));
      nonpositive += da - db <= 0.0;
    }
    CHECK(cmp.p == double(nonpositive) / n);
    CHECK(cmp.cpm_a == cpm(froc(a.detections, a.truth, metric)));
  }
  // Indices are a pure function of (seed, i).
  const CaseTable table(a);
  CHECK(bootstrap_indices(table, Metric::DetectionRate, 5, 3) == bootstrap_indices(table, Metric::DetectionRate, 5, 3));
  CHECK(bootstrap_indices(table, Metric::DetectionRate, 5, 3) != bootstrap_indices(table, Metric::DetectionRate, 5, 4));
}

TEST_CASE("confidence intervals") {
  // Identical cases: every resample equals the full data.
  RunRecord same;
  for (int s = 0; s < 10; ++s) {
    const std::string sid = "s" + std::to_string(s);
    same.truth.add_breast(sid + ":R", sid);
    same.truth.add_breast(sid + ":L", sid);
    same.truth.lesions.push_back({cube(0, 0, 0, 4), LesionCategory::Malignant, sid + ":R"});
    same.detections.push_back({cube(0, 0, 0, 4), 0.8, sid + ":R"});
    same.detections.push_back({cube(9, 9, 9, 4), 0.5, sid + ":L"});
  }
  const auto [lo, hi] = confidence_interval(same, Metric::Sensitivity, 1.0, 200, 0.95, 1);
  CHECK(lo == hi);
  CHECK(lo == 1.0);

  // Coverage on repeated synthetic draws from a known population.
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0, 1);
  int covered = 0;
  const int draws = 100;
  for (int draw = 0; draw < draws; ++draw) {
    RunRecord r;
    for (int s = 0; s < 60; ++s) {
      const std::string sid = "s" + std::to_string(s);
      r.truth.add_breast(sid + ":R", sid);
      r.truth.add_breast(sid + ":L", sid);
      r.truth.lesions.push_back({cube(0, 0, 0, 4), LesionCategory::Malignant, sid + ":R"});
      if (u(rng) < 0.7) r.detections.push_back({cube(0, 0, 0, 4), 0.5 + 0.5 * u(rng), sid + ":R"});
      r.detections.push_back({cube(9, 9, 9, 4), u(rng), sid + ":L"});
    }
    const auto full = froc(r.detections, r.truth, Metric::Sensitivity).value_at(8.0);
    const auto [l, h] = confidence_interval(r, Metric::Sensitivity, 8.0, 200, 0.95, std::uint64_t(draw));
    CHECK(l <= full);
    CHECK(full <= h);
    covered += l <= 0.7 && 0.7 <= h;
  }
  CHECK(covered >= 90);
}

TEST_CASE("curve export and run loading") {
  std::mt19937_64 rng(14);
  const auto run = random_run(rng, 5, false);
  const auto dir = test::temp_dir("eval");
  write_detections(dir / "detections.jsonl", run.detections);
  write_annotations(dir / "annotations.jsonl", run.truth);
  const auto back = load_run(dir);
  CHECK(back.detections.size() == run.detections.size());
  CHECK(back.truth.breasts.size() == run.truth.breasts.size());
  const auto c1 = froc(run.detections, run.truth, Metric::DetectionRate);
  const auto c2 = froc(back.detections, back.truth, Metric::DetectionRate);
  CHECK(cpm(c1) == cpm(c2));

  const auto j = to_json(c1);
  CHECK(j["metric"] == "detection_rate");
  CHECK(j["points"].size() == c1.points.size());
  CHECK(j["points"][0]["threshold"].is_null());
  CHECK(j["operating_points"].size() == 7);

  const auto band = confidence_band(run, c1, 50, 0.95, 2);
  write_curve_csv(dir / "curve.csv", c1, band);
  std::ifstream in(dir / "curve.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "fp,value,ci_low,ci_high");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == int(c1.points.size()));
  for (std::size_t p = 0; p < band.size(); ++p) {
    CHECK(band[p].first <= c1.value_at(c1.points[p].fp_rate));
    CHECK(band[p].second >= c1.value_at(c1.points[p].fp_rate));
  }
  CHECK_THROWS_AS(load_run(dir / "nope"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("metric names round-trip") {
  for (Metric m : {Metric::DetectionRate, Metric::Sensitivity, Metric::BenignDetectionRate}) {
    CHECK(metric_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(metric_from_string("auc"), Error);
}
