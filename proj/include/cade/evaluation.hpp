#pragma once

// Lesion-level evaluation: detection to ground-truth matching, FROC curves
// against false positives per normal breast, CPM and study-level bootstrap
// statistics.
//
// False positives are counted only on breasts without any annotation.
// Unmatched detections on lesion-bearing breasts are ignored.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cade/geometry.hpp"
#include "cade/records.hpp"

namespace cade {

enum class Metric { DetectionRate, Sensitivity, BenignDetectionRate };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);
/// Whether a lesion of category `c` counts towards `m`.
bool metric_includes(Metric m, LesionCategory c);

enum class OverlapCriterion { IoU, IntersectionOverTruth };

struct MatchConfig {
  double threshold = 0.2;  // hit when overlap >= threshold
  OverlapCriterion criterion = OverlapCriterion::IoU;
};

double overlap(const BoundingBox3D& det, const BoundingBox3D& truth, OverlapCriterion c);

enum class Disposition { TruePositive, FalsePositive, Ignored };

struct MatchResult {
  std::vector<int> lesion_detection;     // per lesion: matched detection or -1
  std::vector<int> detection_lesion;     // per detection: matched lesion or -1
  std::vector<Disposition> disposition;  // per detection
  int normal_breasts = 0;

  bool hit(std::size_t lesion) const { return lesion_detection[lesion] >= 0; }
};

/// Greedy matching: detections in descending score order (ties by input
/// order) each take the best-overlapping unmatched lesion on their breast
/// with overlap >= threshold. Unknown breast ids raise InvalidInput.
MatchResult match_detections(const std::vector<Detection>& dets, const AnnotationSet& truth,
                             const MatchConfig& config = {});

struct FrocPoint {
  double fp_rate = 0;    // false positives per normal breast
  double value = 0;      // fraction of the metric's lesions hit
  double threshold = 0;  // detections with score >= threshold are kept
};

struct FrocCurve {
  Metric metric = Metric::DetectionRate;
  std::vector<FrocPoint> points;  // starts at (0, 0); one point per distinct score
  int lesions = 0;                // lesions counted by the metric
  int normal_breasts = 0;
  int hits = 0;                   // lesions hit at the lowest threshold

  /// Step interpolation: largest value among points with fp_rate <= f.
  double value_at(double fp_rate) const;
};

/// Zero normal breasts or no lesion in the metric's subset raise InvalidInput.
FrocCurve froc(const std::vector<Detection>& dets, const AnnotationSet& truth, Metric metric,
               const MatchConfig& config = {});

inline constexpr std::array<double, 7> kCpmRates{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

/// Mean of the step-interpolated curve at kCpmRates.
double cpm(const FrocCurve& curve);

nlohmann::json to_json(const FrocCurve& curve);
/// CSV with columns fp,value,ci_low,ci_high; `band` may be empty.
void write_curve_csv(const std::filesystem::path& path, const FrocCurve& curve,
                     const std::vector<std::pair<double, double>>& band = {});

/// Detections and ground truth of one evaluated run.
struct RunRecord {
  AnnotationSet truth;
  std::vector<Detection> detections;
};

/// Reads `<dir>/detections.jsonl` and `<dir>/annotations.jsonl`.
RunRecord load_run(const std::filesystem::path& dir);

/// Per-study summary of a matched run, the unit of bootstrap resampling.
class CaseTable {
 public:
  CaseTable(const RunRecord& run, const MatchConfig& config = {});

  const std::vector<std::string>& studies() const { return studies_; }
  std::size_t size() const { return studies_.size(); }

  /// Whether a resample with these study multiplicities has a normal breast
  /// and at least one lesion counted by `metric`.
  bool usable(const std::vector<int>& weights, Metric metric) const;
  /// FROC of the resampled run (each study repeated weights[i] times).
  FrocCurve curve(const std::vector<int>& weights, Metric metric) const;
  double cpm(const std::vector<int>& weights, Metric metric) const;
  /// Same studies with the same breasts and lesions.
  bool same_cases(const CaseTable& other) const;

 private:
  struct Event {
    double score;
    int study;
    int category;  // -1 for a false positive
  };
  std::vector<std::string> studies_;
  std::vector<Event> events_;  // descending score
  std::vector<int> normal_;
  std::vector<std::array<int, kNumCategories>> lesions_;
};

/// Study indices of resample `i` (with replacement), derived from `seed`.
/// Resamples the table cannot score for `metric` are redrawn from the same
/// stream.
std::vector<int> bootstrap_indices(const CaseTable& table, Metric metric, std::uint64_t seed, int i);

struct Comparison {
  double cpm_a = 0;
  double cpm_b = 0;
  double p = 1;  // fraction of resamples with CPM_A - CPM_B <= 0
  int samples = 0;
};

/// Runs must cover the same studies. Raises InvalidInput otherwise.
Comparison bootstrap_compare(const RunRecord& a, const RunRecord& b, Metric metric, int samples,
                             std::uint64_t seed, const MatchConfig& config = {});

/// Percentile bootstrap interval of the metric at `fp_rate`, widened if
/// needed so that it contains the full-data value.
std::pair<double, double> confidence_interval(const RunRecord& run, Metric metric, double fp_rate, int samples,
                                              double level, std::uint64_t seed, const MatchConfig& config = {});

/// Intervals at every point of `curve`, sharing one set of resamples.
std::vector<std::pair<double, double>> confidence_band(const RunRecord& run, const FrocCurve& curve, int samples,
                                                       double level, std::uint64_t seed,
                                                       const MatchConfig& config = {});

}  // namespace cade
