#include "cade/study.hpp"

#include <cstdio>
#include <fstream>

#include "cade/error.hpp"

namespace cade {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t StudyRecord::lesion_count() const {
  return breasts[0].lesions.size() + breasts[1].lesions.size();
}

json to_json(const StudyRecord& s) {
  json breasts = json::array();
  for (const auto& b : s.breasts) {
    json lesions = json::array();
    for (const auto& l : b.lesions) {
      json lj = box_to_json(l.box);
      lj["category"] = to_string(l.category);
      lesions.push_back(lj);
    }
    breasts.push_back({{"breast_id", b.breast_id},
                       {"side", to_string(b.side)},
                       {"lesions", lesions},
                       {"tensor", b.tensor},
                       {"crop_origin", {b.crop_origin.z, b.crop_origin.y, b.crop_origin.x}}});
  }
  return {{"patient_id", s.patient_id}, {"study_id", s.study_id}, {"date", s.date}, {"breasts", breasts}};
}

StudyRecord study_from_json(const json& j) {
  StudyRecord s;
  try {
    s.patient_id = j.at("patient_id").get<std::string>();
    s.study_id = j.at("study_id").get<std::string>();
    s.date = j.at("date").get<std::string>();
    const auto& bs = j.at("breasts");
    if (!bs.is_array() || bs.size() != 2) fail(ErrorKind::InvalidInput, "study " + s.study_id + " needs two breasts");
    for (int i = 0; i < 2; ++i) {
      const auto& bj = bs[i];
      BreastRecord& b = s.breasts[i];
      b.breast_id = bj.at("breast_id").get<std::string>();
      b.side = bj.at("side").get<std::string>() == "L" ? BreastSide::Left : BreastSide::Right;
      b.tensor = bj.value("tensor", "");
      const auto o = bj.value("crop_origin", std::array<double, 3>{0, 0, 0});
      b.crop_origin = {o[0], o[1], o[2]};
      for (const auto& lj : bj.at("lesions")) {
        b.lesions.push_back({box_from_json(lj.at("min"), lj.at("max")),
                             category_from_string(lj.at("category").get<std::string>()), b.breast_id});
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("bad study record: ") + e.what());
  }
  return s;
}

AnnotationSet annotations_of(const std::vector<StudyRecord>& studies) {
  AnnotationSet set;
  for (const auto& s : studies) {
    for (const auto& b : s.breasts) {
      set.add_breast(b.breast_id, s.study_id);
      set.lesions.insert(set.lesions.end(), b.lesions.begin(), b.lesions.end());
    }
  }
  return set;
}

std::chrono::sys_days parse_iso_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    fail(ErrorKind::InvalidInput, "bad date '" + s + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) fail(ErrorKind::InvalidInput, "bad date '" + s + "'");
  return std::chrono::sys_days{ymd};
}

std::string format_iso_date(std::chrono::sys_days days) {
  const std::chrono::year_month_day ymd{days};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

AnnotationSet Corpus::annotations() const { return annotations_of(studies); }

void write_corpus_index(const Corpus& corpus) {
  json studies = json::array();
  for (const auto& s : corpus.studies) studies.push_back(to_json(s));
  const json j = {{"version", 1}, {"generator", corpus.generator}, {"studies", studies}};
  const fs::path tmp = corpus.root / "corpus.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out << j.dump(1) << "\n";
  }
  fs::rename(tmp, corpus.root / "corpus.json");
}

Corpus read_corpus(const fs::path& root) {
  const fs::path index = root / "corpus.json";
  if (!fs::exists(index)) fail(ErrorKind::MissingFile, "missing corpus index " + index.string());
  std::ifstream in(index);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, "bad corpus index " + index.string() + ": " + e.what());
  }
  Corpus c;
  c.root = root;
  c.generator = j.value("generator", json::object());
  for (const auto& sj : j.at("studies")) c.studies.push_back(study_from_json(sj));
  return c;
}

}  // namespace cade
