#include "cade/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include "cade/error.hpp"
#include "cade/random.hpp"

namespace cade {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Metric m) {
  switch (m) {
    case Metric::DetectionRate: return "detection_rate";
    case Metric::Sensitivity: return "sensitivity";
    case Metric::BenignDetectionRate: return "benign_detection_rate";
  }
  return "detection_rate";
}

Metric metric_from_string(const std::string& s) {
  if (s == "detection_rate") return Metric::DetectionRate;
  if (s == "sensitivity") return Metric::Sensitivity;
  if (s == "benign_detection_rate") return Metric::BenignDetectionRate;
  fail(ErrorKind::InvalidInput, "unknown metric '" + s + "'");
}

bool metric_includes(Metric m, LesionCategory c) {
  switch (m) {
    case Metric::DetectionRate: return true;
    case Metric::Sensitivity: return c == LesionCategory::Malignant;
    case Metric::BenignDetectionRate: return is_benign(c);
  }
  return false;
}

double overlap(const BoundingBox3D& det, const BoundingBox3D& truth, OverlapCriterion c) {
  if (c == OverlapCriterion::IoU) return iou3d(det, truth);
  return intersection_volume(det, truth) / truth.volume();
}

namespace {

std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& dets, const AnnotationSet& truth, const MatchConfig& cfg) {
  std::unordered_map<std::string, std::size_t> breast_index;
  for (std::size_t b = 0; b < truth.breasts.size(); ++b) breast_index.emplace(truth.breasts[b].breast_id, b);
  std::vector<std::vector<int>> lesions_of(truth.breasts.size());
  for (std::size_t i = 0; i < truth.lesions.size(); ++i) {
    const auto it = breast_index.find(truth.lesions[i].breast_id);
    if (it == breast_index.end()) fail(ErrorKind::InvalidInput, "lesion on undeclared breast " + truth.lesions[i].breast_id);
    lesions_of[it->second].push_back(int(i));
  }

  MatchResult r;
  r.lesion_detection.assign(truth.lesions.size(), -1);
  r.detection_lesion.assign(dets.size(), -1);
  r.disposition.assign(dets.size(), Disposition::Ignored);
  for (const auto& l : lesions_of) r.normal_breasts += l.empty();

  for (std::size_t d : score_order(dets)) {
    const auto it = breast_index.find(dets[d].breast_id);
    if (it == breast_index.end()) fail(ErrorKind::InvalidInput, "detection on unknown breast " + dets[d].breast_id);
    const auto& candidates = lesions_of[it->second];
    if (candidates.empty()) {
      r.disposition[d] = Disposition::FalsePositive;
      continue;
    }
    int best = -1;
    double best_overlap = -1;
    for (int l : candidates) {
      if (r.lesion_detection[l] >= 0) continue;
      const double o = overlap(dets[d].box, truth.lesions[l].box, cfg.criterion);
      if (o >= cfg.threshold && o > best_overlap) {
        best = l;
        best_overlap = o;
      }
    }
    if (best >= 0) {
      r.lesion_detection[best] = int(d);
      r.detection_lesion[d] = best;
      r.disposition[d] = Disposition::TruePositive;
    }
  }
  return r;
}

double FrocCurve::value_at(double fp_rate) const {
  double v = 0;
  for (const auto& p : points) {
    if (p.fp_rate <= fp_rate) v = std::max(v, p.value);
  }
  return v;
}

FrocCurve froc(const std::vector<Detection>& dets, const AnnotationSet& truth, Metric metric, const MatchConfig& cfg) {
  const MatchResult m = match_detections(dets, truth, cfg);
  FrocCurve c;
  c.metric = metric;
  c.normal_breasts = m.normal_breasts;
  for (const auto& l : truth.lesions) c.lesions += metric_includes(metric, l.category);
  if (c.normal_breasts == 0) fail(ErrorKind::InvalidInput, "FROC needs at least one normal breast");
  if (c.lesions == 0) fail(ErrorKind::InvalidInput, "no lesion counts towards " + to_string(metric));

  c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  const auto order = score_order(dets);
  int fp = 0, hits = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = dets[order[i]].score;
    for (; i < order.size() && dets[order[i]].score == s; ++i) {
      const std::size_t d = order[i];
      if (m.disposition[d] == Disposition::FalsePositive) ++fp;
      if (m.disposition[d] == Disposition::TruePositive &&
          metric_includes(metric, truth.lesions[m.detection_lesion[d]].category)) {
        ++hits;
      }
    }
    c.points.push_back({double(fp) / c.normal_breasts, double(hits) / c.lesions, s});
  }
  c.hits = hits;
  return c;
}

double cpm(const FrocCurve& curve) {
  // Extended precision keeps the mean of a constant curve exact.
  long double sum = 0;
  for (double f : kCpmRates) sum += curve.value_at(f);
  return double(sum / static_cast<long double>(kCpmRates.size()));
}

json to_json(const FrocCurve& curve) {
  json points = json::array();
  for (const auto& p : curve.points) {
    points.push_back({{"fp", p.fp_rate},
                      {"value", p.value},
                      {"threshold", std::isfinite(p.threshold) ? json(p.threshold) : json(nullptr)}});
  }
  json ops = json::array();
  for (double f : kCpmRates) ops.push_back({{"fp", f}, {"value", curve.value_at(f)}});
  return {{"metric", to_string(curve.metric)},
          {"lesions", curve.lesions},
          {"hits", curve.hits},
          {"normal_breasts", curve.normal_breasts},
          {"cpm", cpm(curve)},
          {"operating_points", ops},
          {"points", points}};
}

void write_curve_csv(const fs::path& path, const FrocCurve& curve, const std::vector<std::pair<double, double>>& band) {
  if (!band.empty() && band.size() != curve.points.size()) {
    fail(ErrorKind::InvalidInput, "confidence band does not match the curve");
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  out << "fp,value,ci_low,ci_high\n";
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    out << curve.points[i].fp_rate << ',' << curve.points[i].value << ',';
    if (!band.empty()) out << band[i].first << ',' << band[i].second;
    else out << ',';
    out << '\n';
  }
}

RunRecord load_run(const fs::path& dir) {
  RunRecord r;
  r.truth = read_annotations(dir / "annotations.jsonl");
  r.detections = read_detections(dir / "detections.jsonl");
  return r;
}

// ------------------------------------------------------------ bootstrap

CaseTable::CaseTable(const RunRecord& run, const MatchConfig& cfg) {
  std::unordered_map<std::string, int> study_index;
  std::unordered_map<std::string, int> breast_study;
  for (const auto& b : run.truth.breasts) {
    auto [it, fresh] = study_index.emplace(b.study_id, int(studies_.size()));
    if (fresh) studies_.push_back(b.study_id);
    breast_study[b.breast_id] = it->second;
  }
  normal_.assign(studies_.size(), 0);
  lesions_.assign(studies_.size(), {});
  const MatchResult m = match_detections(run.detections, run.truth, cfg);
  std::unordered_map<std::string, int> per_breast;
  for (const auto& l : run.truth.lesions) {
    ++per_breast[l.breast_id];
    ++lesions_[breast_study.at(l.breast_id)][int(l.category)];
  }
  for (const auto& b : run.truth.breasts) {
    if (!per_breast.count(b.breast_id)) ++normal_[breast_study.at(b.breast_id)];
  }
  for (std::size_t d : score_order(run.detections)) {
    const Detection& det = run.detections[d];
    if (m.disposition[d] == Disposition::Ignored) continue;
    const int cat = m.disposition[d] == Disposition::FalsePositive
                        ? -1
                        : int(run.truth.lesions[m.detection_lesion[d]].category);
    events_.push_back({det.score, breast_study.at(det.breast_id), cat});
  }
}

bool CaseTable::usable(const std::vector<int>& w, Metric metric) const {
  long normal = 0, lesions = 0;
  for (std::size_t s = 0; s < studies_.size(); ++s) {
    normal += long(w[s]) * normal_[s];
    for (int c = 0; c < kNumCategories; ++c) {
      if (metric_includes(metric, LesionCategory(c))) lesions += long(w[s]) * lesions_[s][c];
    }
  }
  return normal > 0 && lesions > 0;
}

FrocCurve CaseTable::curve(const std::vector<int>& w, Metric metric) const {
  if (w.size() != studies_.size()) fail(ErrorKind::InvalidInput, "resample weights do not match the case table");
  FrocCurve c;
  c.metric = metric;
  for (std::size_t s = 0; s < studies_.size(); ++s) {
    c.normal_breasts += w[s] * normal_[s];
    for (int k = 0; k < kNumCategories; ++k) {
      if (metric_includes(metric, LesionCategory(k))) c.lesions += w[s] * lesions_[s][k];
    }
  }
  if (c.normal_breasts == 0 || c.lesions == 0) fail(ErrorKind::InvalidInput, "resample has no normal breast or lesion");
  c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  long fp = 0, hits = 0;
  for (std::size_t i = 0; i < events_.size();) {
    const double score = events_[i].score;
    bool any = false;
    for (; i < events_.size() && events_[i].score == score; ++i) {
      const Event& e = events_[i];
      if (w[e.study] == 0) continue;
      any = true;
      if (e.category < 0) fp += w[e.study];
      else if (metric_includes(metric, LesionCategory(e.category))) hits += w[e.study];
    }
    if (any) c.points.push_back({double(fp) / c.normal_breasts, double(hits) / c.lesions, score});
  }
  c.hits = int(hits);
  return c;
}

double CaseTable::cpm(const std::vector<int>& w, Metric metric) const { return cade::cpm(curve(w, metric)); }

bool CaseTable::same_cases(const CaseTable& o) const {
  return studies_ == o.studies_ && normal_ == o.normal_ && lesions_ == o.lesions_;
}

std::vector<int> bootstrap_indices(const CaseTable& table, Metric metric, std::uint64_t seed, int i) {
  const int n = int(table.size());
  if (n == 0) fail(ErrorKind::InvalidInput, "bootstrap over an empty case set");
  std::mt19937_64 rng(derive_seed(seed, std::uint64_t(i)));
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> idx(n), w(n);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::fill(w.begin(), w.end(), 0);
    for (int& v : idx) {
      v = pick(rng);
      ++w[v];
    }
    if (table.usable(w, metric)) return idx;
  }
  fail(ErrorKind::InvalidInput, "could not draw a usable bootstrap resample");
}

namespace {

std::vector<int> weights_of(const std::vector<int>& idx, std::size_t n) {
  std::vector<int> w(n, 0);
  for (int i : idx) ++w[i];
  return w;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(h));
  const std::size_t hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

void check_samples(int samples, double level) {
  if (samples < 1) fail(ErrorKind::InvalidInput, "bootstrap needs at least one sample");
  if (!(level > 0 && level < 1)) fail(ErrorKind::InvalidInput, "confidence level must be in (0,1)");
}

}  // namespace

Comparison bootstrap_compare(const RunRecord& a, const RunRecord& b, Metric metric, int samples, std::uint64_t seed,
                             const MatchConfig& cfg) {
  check_samples(samples, 0.5);
  const CaseTable ta(a, cfg), tb(b, cfg);
  if (!ta.same_cases(tb)) fail(ErrorKind::InvalidInput, "runs do not cover the same cases");
  const std::vector<int> ones(ta.size(), 1);
  Comparison r;
  r.cpm_a = ta.cpm(ones, metric);
  r.cpm_b = tb.cpm(ones, metric);
  r.samples = samples;
  int nonpositive = 0;
  for (int i = 0; i < samples; ++i) {
    const auto w = weights_of(bootstrap_indices(ta, metric, seed, i), ta.size());
    nonpositive += ta.cpm(w, metric) - tb.cpm(w, metric) <= 0.0;
  }
  r.p = double(nonpositive) / samples;
  return r;
}

std::vector<std::pair<double, double>> confidence_band(const RunRecord& run, const FrocCurve& curve, int samples,
                                                       double level, std::uint64_t seed, const MatchConfig& cfg) {
  check_samples(samples, level);
  const CaseTable table(run, cfg);
  std::vector<std::vector<double>> values(curve.points.size());
  for (int i = 0; i < samples; ++i) {
    const auto w = weights_of(bootstrap_indices(table, curve.metric, seed, i), table.size());
    const FrocCurve c = table.curve(w, curve.metric);
    for (std::size_t p = 0; p < curve.points.size(); ++p) values[p].push_back(c.value_at(curve.points[p].fp_rate));
  }
  const double alpha = (1 - level) / 2;
  std::vector<std::pair<double, double>> band;
  for (std::size_t p = 0; p < curve.points.size(); ++p) {
    const double point = curve.value_at(curve.points[p].fp_rate);
    band.emplace_back(std::min(point, percentile(values[p], alpha)), std::max(point, percentile(values[p], 1 - alpha)));
  }
  return band;
}

std::pair<double, double> confidence_interval(const RunRecord& run, Metric metric, double fp_rate, int samples,
                                              double level, std::uint64_t seed, const MatchConfig& cfg) {
  FrocCurve probe = froc(run.detections, run.truth, metric, cfg);
  const double value = probe.value_at(fp_rate);
  probe.points = {{fp_rate, value, 0.0}};
  return confidence_band(run, probe, samples, level, seed, cfg).front();
}

}  // namespace cade
