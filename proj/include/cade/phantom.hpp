#pragma once

// Synthetic ultrafast DCE series of two breasts. Anatomy: half-ellipsoid
// breasts (fat with parenchyma and thin vessels) on a chest-wall slab, a
// descending aorta behind it, and ellipsoid lesions. Enhancement after the
// onset index t0 follows A * (1 - exp(-(t - t0 + 1) / tau)), which is zero
// before t0 and nondecreasing afterwards.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "cade/preprocessing.hpp"
#include "cade/random.hpp"
#include "cade/study.hpp"
#include "cade/volume.hpp"

namespace cade {

struct Kinetics {
  double amplitude = 0;
  double tau = 1;
  int onset_delay = 0;  // onset = aorta arrival + delay
};

struct RadiusDistribution {
  double mean_mm = 10;
  double sd_mm = 5;
};

struct PhantomConfig {
  std::array<int, 4> shape{16, 16, 96, 192};  // (T, D, H, W)
  Spacing spacing_mm{4.0, 2.0, 2.0};
  /// Truncated normals for the effective (volume-equivalent) radius.
  RadiusDistribution malignant_radius{13.6, 7.5};
  RadiusDistribution benign_radius{12.0, 7.5};
  RadiusDistribution followup_radius{8.3, 3.5};
  double min_radius_mm = 4.0;
  double max_radius_mm = 20.0;
  std::array<double, 3> category_weights{365, 148, 59};
  double lesion_free_fraction = 0.35;  // studies without any lesion
  int max_lesions = 2;
  int vessel_count = 3;
  double noise_sigma = 2.0;
  int motion_amplitude = 0;  // voxels, per axis, for t >= 1
  int arrival_index = 2;     // first raw index at which the aorta enhances
  Kinetics malignant{150, 1.5, 0};
  Kinetics benign{100, 2.5, 1};
  Kinetics followup{45, 4.0, 1};
  double repeat_patient_fraction = 0.2;  // studies that are a prior patient's follow-up
  std::string first_date = "2013-01-01";
  int date_span_days = 730;

  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomConfig& c);
PhantomConfig phantom_config_from_json(const nlohmann::json& j, const std::string& prefix = "phantom");

struct PhantomLesion {
  BoundingBox3D box;  // tight voxel support, original coordinates
  LesionCategory category = LesionCategory::Malignant;
  BreastSide side = BreastSide::Right;
  int onset_index = 0;  // raw time index of first enhancement
  std::size_t voxels = 0;
};

struct PhantomTruth {
  std::vector<PhantomLesion> lesions;
  BoundingBox3D aorta_roi{{0, 0, 0}, {1, 1, 1}};
  /// Onset in subtracted-series indexing (raw arrival - 1).
  int aorta_onset = 0;
  std::vector<Shift3> motion;  // per raw time index; motion[0] is zero
  Volume breast_mask;          // 1 inside either breast
};

/// Optional fixed lesion layout instead of random sampling.
struct LesionRequest {
  BreastSide side = BreastSide::Right;
  LesionCategory category = LesionCategory::Malignant;
};

struct PhantomSample {
  DynamicSeries series;  // noisy, with motion
  DynamicSeries clean;   // noise-free, motion-free
  PhantomTruth truth;
};

/// Deterministic in (config, seed). Lesion placement failure after bounded
/// retries raises a Generation error.
PhantomSample generate_phantom(const PhantomConfig& config, std::uint64_t seed,
                               const std::optional<std::vector<LesionRequest>>& lesions = std::nullopt);

struct CorpusOptions {
  PreprocessConfig preprocess;
  int workers = 1;  // capped by CADE_NUM_WORKERS when set
  bool keep_series = true;
  /// When set, each study uses this lesion layout (cycled by study index).
  std::vector<std::vector<LesionRequest>> layouts;
};

/// Generates `n` studies under `root` (which must not exist or be empty),
/// preprocesses them into breast tensors and writes `corpus.json` plus
/// `annotations.jsonl`.
Corpus generate_corpus(const std::filesystem::path& root, int n, const PhantomConfig& config, std::uint64_t seed,
                       const CorpusOptions& options = {});

}  // namespace cade
