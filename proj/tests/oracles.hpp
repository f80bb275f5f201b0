#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance binary. None of them call the code they are compared with.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cade/anchors.hpp"
#include "cade/detector.hpp"
#include "cade/evaluation.hpp"
#include "cade/losses.hpp"
#include "test_support.hpp"

namespace cade::test {

// Labels straight from a full IoU matrix: argmax per anchor, threshold,
// then force each ground truth's best anchor.
inline std::vector<std::pair<bool, int>> oracle_labels(const std::vector<BoundingBox3D>& anchors,
                                                const std::vector<BoundingBox3D>& gts, double thr) {
  std::vector<std::vector<double>> m(anchors.size(), std::vector<double>(gts.size()));
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (std::size_t g = 0; g < gts.size(); ++g) m[i][g] = oracle_iou(anchors[i], gts[g]);
  }
  std::vector<std::pair<bool, int>> out(anchors.size(), {false, -1});
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    int arg = -1;
    double best = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (m[i][g] > best) {
        best = m[i][g];
        arg = int(g);
      }
    }
    if (arg >= 0 && best >= thr) out[i] = {true, arg};
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    std::size_t arg = 0;
    double best = 0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      if (m[i][g] > best) {
        best = m[i][g];
        arg = i;
      }
    }
    if (best > 0) out[arg] = {true, int(g)};
  }
  return out;
}

// Output with A=2 and level volumes 6, 4, 5, 8, 2 voxels: 50 anchors per sample.
inline DetectorOutput<double> small_output(int batch, std::mt19937_64& rng) {
  const Shape3 shapes[kNumLevels] = {{1, 2, 3}, {1, 2, 2}, {1, 1, 5}, {2, 2, 2}, {1, 1, 2}};
  std::normal_distribution<double> nd(0, 1.5);
  DetectorOutput<double> out;
  for (int l = 0; l < kNumLevels; ++l) {
    const auto& s = shapes[l];
    out.class_logits[l] = Tensor<double>({batch, 2, s[0], s[1], s[2]});
    out.box_deltas[l] = Tensor<double>({batch, 12, s[0], s[1], s[2]});
    for (auto& v : out.class_logits[l].storage()) v = nd(rng);
    for (auto& v : out.box_deltas[l].storage()) v = nd(rng);
  }
  return out;
}

inline std::vector<std::vector<AnchorAssignment>> random_assignments(int batch, std::size_t per_sample,
                                                              double pos_rate, std::mt19937_64& rng) {
  std::bernoulli_distribution pos(pos_rate);
  std::normal_distribution<double> nd(0, 1);
  std::vector<std::vector<AnchorAssignment>> all(batch);
  for (auto& as : all) {
    for (std::size_t i = 0; i < per_sample; ++i) {
      AnchorAssignment a;
      a.anchor_index = i;
      a.positive = pos(rng);
      if (a.positive) {
        a.gt_index = 0;
        for (auto& t : a.target) t = nd(rng);
      }
      as.push_back(a);
    }
  }
  return all;
}

// Scalar oracle: walk every anchor with explicit (level, voxel, a) loops and
// evaluate the textbook formulas.
inline double oracle_total(const DetectorOutput<double>& out, const std::vector<std::vector<AnchorAssignment>>& as,
                    const LossConfig& c) {
  double focal = 0, reg = 0;
  std::size_t npos = 0;
  for (std::size_t n = 0; n < as.size(); ++n) {
    std::size_t idx = 0;
    for (int l = 0; l < kNumLevels; ++l) {
      const auto& sh = out.class_logits[l].shape();
      const int A = sh[1], D = sh[2], H = sh[3], W = sh[4];
      for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            for (int a = 0; a < A; ++a, ++idx) {
              const auto at = [&](const Tensor<double>& t, int ch) {
                return t[(((n * t.dim(1) + ch) * D + z) * H + y) * W + x];
              };
              const double p = 1 / (1 + std::exp(-at(out.class_logits[l], a)));
              const bool posv = as[n][idx].positive;
              const double pt = posv ? p : 1 - p;
              const double w = posv ? c.alpha : 1 - c.alpha;
              focal += -w * std::pow(1 - pt, c.gamma) * std::log(pt);
              if (!posv) continue;
              ++npos;
              for (int j = 0; j < 6; ++j) {
                const double d = std::abs(at(out.box_deltas[l], a * 6 + j) - as[n][idx].target[j]);
                reg += d < 1 ? 0.5 * d * d : d - 0.5;
              }
            }
    }
  }
  return (focal + reg) / std::max<std::size_t>(1, npos);
}

// Exhaustive Otsu oracle: for every split, between-class variance
// w0 * w1 * (m0 - m1)^2 computed from scratch over bin indices.
inline double oracle_otsu(const std::vector<float>& v) {
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  const double w = (hi - lo) / 256;
  std::vector<int> bin(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) bin[i] = std::min(255, int((v[i] - lo) / w));
  double best = -1;
  int best_k = 0;
  for (int k = 0; k < 255; ++k) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int b : bin) {
      if (b <= k) {
        n0 += 1;
        s0 += b;
      } else {
        n1 += 1;
        s1 += b;
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const double n = n0 + n1;
    const double var = (n0 / n) * (n1 / n) * (s0 / n0 - s1 / n1) * (s0 / n0 - s1 / n1);
    if (var > best * (1 + 1e-12)) {
      best = var;
      best_k = k;
    }
  }
  return lo + (best_k + 1) * w;
}

inline BoundingBox3D cube(double z, double y, double x, double s) { return {{z, y, x}, {z + s, y + s, x + s}}; }

// Independent greedy matcher over an explicit overlap matrix.
struct OracleMatch {
  std::vector<int> lesion_det;
  std::vector<int> kind;  // 0 tp, 1 fp, 2 ignored
};

inline OracleMatch oracle_match(const std::vector<Detection>& dets, const AnnotationSet& truth, double thr) {
  OracleMatch m;
  m.lesion_det.assign(truth.lesions.size(), -1);
  m.kind.assign(dets.size(), 2);
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score != dets[b].score ? dets[a].score > dets[b].score : a < b;
  });
  for (std::size_t d : order) {
    bool lesion_breast = false;
    int best = -1;
    double best_iou = 0;
    for (std::size_t l = 0; l < truth.lesions.size(); ++l) {
      if (truth.lesions[l].breast_id != dets[d].breast_id) continue;
      lesion_breast = true;
      if (m.lesion_det[l] >= 0) continue;
      const double iou = oracle_iou(dets[d].box, truth.lesions[l].box);
      if (iou >= thr && (best < 0 || iou > best_iou)) {
        best = int(l);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      m.lesion_det[best] = int(d);
      m.kind[d] = 0;
    } else if (!lesion_breast) {
      m.kind[d] = 1;
    }
  }
  return m;
}

// Random run: `studies` studies with two breasts, lesions near which
// detections are scattered, plus random false positives.
inline RunRecord random_run(std::mt19937_64& rng, int studies, bool coarse_scores) {
  std::uniform_real_distribution<double> u(0, 1);
  RunRecord r;
  for (int s = 0; s < studies; ++s) {
    const std::string sid = "s" + std::to_string(s);
    for (const char* side : {"R", "L"}) {
      const std::string bid = sid + ":" + side;
      r.truth.add_breast(bid, sid);
      const int lesions = u(rng) < 0.5 ? 0 : 1 + int(u(rng) < 0.3);
      for (int l = 0; l < lesions; ++l) {
        const auto box = cube(10 * l, 10 * l + u(rng) * 3, 5, 4 + u(rng) * 4);
        r.truth.lesions.push_back({box, LesionCategory(int(u(rng) * 3) % 3), bid});
        const int hits = int(u(rng) * 3);
        for (int h = 0; h < hits; ++h) {
          double sc = u(rng);
          if (coarse_scores) sc = std::round(sc * 4) / 4;
          r.detections.push_back({box.shifted({u(rng) * 2 - 1, u(rng) * 2 - 1, u(rng) * 2 - 1}), sc, bid});
        }
      }
      const int fps = int(u(rng) * 3);
      for (int f = 0; f < fps; ++f) {
        double sc = u(rng);
        if (coarse_scores) sc = std::round(sc * 4) / 4;
        r.detections.push_back({cube(u(rng) * 20, u(rng) * 20, u(rng) * 20, 3), sc, bid});
      }
    }
  }
  // Guarantee both denominators.
  r.truth.add_breast("extra:R", "extra");
  r.truth.add_breast("extra:L", "extra");
  r.truth.lesions.push_back({cube(0, 0, 0, 5), LesionCategory::Malignant, "extra:L"});
  r.truth.lesions.push_back({cube(20, 0, 0, 5), LesionCategory::BenignFollowup, "extra:L"});
  return r;
}

// Resampled run built from scratch: copy k of study s gets fresh ids.
inline RunRecord materialize(const RunRecord& run, const std::vector<std::string>& studies, const std::vector<int>& idx) {
  RunRecord out;
  std::map<std::string, int> copies;
  for (int i : idx) {
    const std::string& sid = studies[i];
    const std::string tag = "#" + std::to_string(copies[sid]++);
    for (const auto& b : run.truth.breasts) {
      if (b.study_id == sid) out.truth.breasts.push_back({b.breast_id + tag, sid + tag});
    }
    for (const auto& l : run.truth.lesions) {
      if (study_of(l.breast_id) == sid) {
        out.truth.lesions.push_back({l.box, l.category, l.breast_id + tag});
      }
    }
    for (const auto& d : run.detections) {
      if (study_of(d.breast_id) == sid) out.detections.push_back({d.box, d.score, d.breast_id + tag});
    }
  }
  return out;
}

}  // namespace cade::test
