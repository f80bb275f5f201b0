#pragma once

// Study records and the corpus index (`corpus.json`).

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cade/geometry.hpp"
#include "cade/records.hpp"

namespace cade {

struct BreastRecord {
  std::string breast_id;
  BreastSide side = BreastSide::Left;
  std::vector<LesionAnnotation> lesions;  // original volume coordinates
  std::string tensor;                     // path relative to the corpus root
  Point3 crop_origin;
};

/// One acquisition. Both breasts are always present, right first.
struct StudyRecord {
  std::string patient_id;
  std::string study_id;
  std::string date;  // YYYY-MM-DD
  std::array<BreastRecord, 2> breasts;

  std::size_t lesion_count() const;
};

nlohmann::json to_json(const StudyRecord& s);
StudyRecord study_from_json(const nlohmann::json& j);

struct Corpus {
  std::filesystem::path root;
  nlohmann::json generator;  // free-form provenance (config, seed)
  std::vector<StudyRecord> studies;

  /// Breasts and lesions of the given studies as an evaluation universe.
  AnnotationSet annotations() const;
};

void write_corpus_index(const Corpus& corpus);
/// Reads `<root>/corpus.json`; missing file raises MissingFile.
Corpus read_corpus(const std::filesystem::path& root);

AnnotationSet annotations_of(const std::vector<StudyRecord>& studies);

/// Parses YYYY-MM-DD; anything else raises InvalidInput.
std::chrono::sys_days parse_iso_date(const std::string& s);
std::string format_iso_date(std::chrono::sys_days days);

}  // namespace cade
