#pragma once

// Lesion annotations, breast identities and their JSON-lines encoding.
//
// Each line is one JSON object with `breast_id`. Annotation lines carry
// `min`, `max` (z, y, x) and `category`; a line with only `breast_id`
// declares a breast without lesions. Detection lines carry `min`, `max`
// and `score`. The optional `study_id` key defaults to the breast id up to
// its last ':' (ids produced by this project look like `s0007:L`).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cade/geometry.hpp"

namespace cade {

enum class LesionCategory { Malignant, BenignBiopsied, BenignFollowup };

inline constexpr int kNumCategories = 3;

std::string to_string(LesionCategory c);
LesionCategory category_from_string(const std::string& s);
inline bool is_benign(LesionCategory c) { return c != LesionCategory::Malignant; }

enum class BreastSide { Left, Right };

std::string to_string(BreastSide side);
std::string make_breast_id(const std::string& study_id, BreastSide side);
std::string study_of(const std::string& breast_id);

struct LesionAnnotation {
  BoundingBox3D box;
  LesionCategory category = LesionCategory::Malignant;
  std::string breast_id;
};

/// All breasts of an evaluation universe and the lesions on them.
struct AnnotationSet {
  struct Breast {
    std::string breast_id;
    std::string study_id;
  };
  std::vector<Breast> breasts;
  std::vector<LesionAnnotation> lesions;

  /// Adds the breast if not yet present.
  void add_breast(const std::string& breast_id, const std::string& study_id = {});
  bool has_breast(const std::string& breast_id) const;
};

nlohmann::json box_to_json(const BoundingBox3D& box);
BoundingBox3D box_from_json(const nlohmann::json& min, const nlohmann::json& max);

nlohmann::json to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LesionAnnotation& a);

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);
std::vector<Detection> read_detections(const std::filesystem::path& path);

void write_annotations(const std::filesystem::path& path, const AnnotationSet& set);
AnnotationSet read_annotations(const std::filesystem::path& path);

}  // namespace cade
