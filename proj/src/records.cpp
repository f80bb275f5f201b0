#include "cade/records.hpp"

#include <algorithm>
#include <fstream>

#include "cade/error.hpp"

namespace cade {

using nlohmann::json;

std::string to_string(LesionCategory c) {
  switch (c) {
    case LesionCategory::Malignant: return "malignant";
    case LesionCategory::BenignBiopsied: return "benign_biopsied";
    case LesionCategory::BenignFollowup: return "benign_followup";
  }
  return "?";
}

LesionCategory category_from_string(const std::string& s) {
  if (s == "malignant") return LesionCategory::Malignant;
  if (s == "benign_biopsied") return LesionCategory::BenignBiopsied;
  if (s == "benign_followup") return LesionCategory::BenignFollowup;
  fail(ErrorKind::InvalidInput, "unknown lesion category '" + s + "'");
}

std::string to_string(BreastSide side) { return side == BreastSide::Left ? "L" : "R"; }

std::string make_breast_id(const std::string& study_id, BreastSide side) {
  return study_id + ":" + to_string(side);
}

std::string study_of(const std::string& breast_id) {
  const auto pos = breast_id.rfind(':');
  return pos == std::string::npos ? breast_id : breast_id.substr(0, pos);
}

void AnnotationSet::add_breast(const std::string& breast_id, const std::string& study_id) {
  if (has_breast(breast_id)) return;
  breasts.push_back({breast_id, study_id.empty() ? study_of(breast_id) : study_id});
}

bool AnnotationSet::has_breast(const std::string& breast_id) const {
  return std::any_of(breasts.begin(), breasts.end(),
                     [&](const Breast& b) { return b.breast_id == breast_id; });
}

json box_to_json(const BoundingBox3D& box) {
  return {{"min", {box.min().z, box.min().y, box.min().x}},
          {"max", {box.max().z, box.max().y, box.max().x}}};
}

BoundingBox3D box_from_json(const json& min, const json& max) {
  if (!min.is_array() || min.size() != 3 || !max.is_array() || max.size() != 3) {
    fail(ErrorKind::InvalidInput, "box corners must be 3-element arrays");
  }
  return {{min[0].get<double>(), min[1].get<double>(), min[2].get<double>()},
          {max[0].get<double>(), max[1].get<double>(), max[2].get<double>()}};
}

json to_json(const Detection& d) {
  json j = box_to_json(d.box);
  j["breast_id"] = d.breast_id;
  j["score"] = d.score;
  return j;
}

Detection detection_from_json(const json& j) {
  Detection d{box_from_json(j.at("min"), j.at("max")), j.at("score").get<double>(),
              j.at("breast_id").get<std::string>()};
  if (!(d.score >= 0.0 && d.score <= 1.0)) {
    fail(ErrorKind::InvalidInput, "detection score outside [0,1]");
  }
  return d;
}

json to_json(const LesionAnnotation& a) {
  json j = box_to_json(a.box);
  j["breast_id"] = a.breast_id;
  j["category"] = to_string(a.category);
  return j;
}

namespace {

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      fail(ErrorKind::InvalidInput, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& lines) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& j : lines) out << j.dump() << '\n';
}

}  // namespace

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  std::vector<json> lines;
  lines.reserve(dets.size());
  for (const auto& d : dets) lines.push_back(to_json(d));
  write_lines(path, lines);
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::vector<Detection> out;
  for_each_line(path, [&](const json& j) { out.push_back(detection_from_json(j)); });
  return out;
}

void write_annotations(const std::filesystem::path& path, const AnnotationSet& set) {
  std::vector<json> lines;
  for (const auto& b : set.breasts) {
    const bool has_lesion = std::any_of(set.lesions.begin(), set.lesions.end(),
                                        [&](const auto& l) { return l.breast_id == b.breast_id; });
    if (!has_lesion) lines.push_back({{"breast_id", b.breast_id}, {"study_id", b.study_id}});
  }
  for (const auto& l : set.lesions) {
    json j = to_json(l);
    for (const auto& b : set.breasts) {
      if (b.breast_id == l.breast_id) j["study_id"] = b.study_id;
    }
    lines.push_back(std::move(j));
  }
  write_lines(path, lines);
}

AnnotationSet read_annotations(const std::filesystem::path& path) {
  AnnotationSet set;
  for_each_line(path, [&](const json& j) {
    const auto breast_id = j.at("breast_id").get<std::string>();
    set.add_breast(breast_id, j.value("study_id", std::string{}));
    if (j.contains("min")) {
      set.lesions.push_back({box_from_json(j.at("min"), j.at("max")),
                             category_from_string(j.at("category").get<std::string>()),
                             breast_id});
    }
  });
  return set;
}

}  // namespace cade
