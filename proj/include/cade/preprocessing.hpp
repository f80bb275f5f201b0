#pragma once

// Turns a raw dynamic series into two per-breast network inputs:
// motion compensation against the first volume, pre-contrast subtraction,
// reference time-point detection in an aortic ROI, a fixed temporal
// window, Otsu-guided cropping of each image half and intensity scaling.
//
// Breast tensors are stored channel-first as (C, D, H, W). Image half
// x < W/2 is the patient's right breast (radiological display).

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cade/records.hpp"
#include "cade/volume.hpp"

namespace cade {

using Shift3 = std::array<int, 3>;

/// `register_volume(fixed, moving)` returns `moving` resampled onto `fixed`.
class RegistrationBackend {
 public:
  virtual ~RegistrationBackend() = default;
  virtual Volume register_volume(const Volume& fixed, const Volume& moving) = 0;
  virtual std::string name() const = 0;
};

class IdentityRegistrar final : public RegistrationBackend {
 public:
  Volume register_volume(const Volume&, const Volume& moving) override { return moving; }
  std::string name() const override { return "identity"; }
};

/// Exhaustive integer translation search maximizing normalized cross
/// correlation over the overlap of the two volumes.
class TranslationRegistrar final : public RegistrationBackend {
 public:
  explicit TranslationRegistrar(int max_shift = 5) : max_shift_(max_shift) {}

  /// Shift s with moving(x + s) ~ fixed(x), i.e. how far the moving
  /// content has been displaced. Ties prefer the smaller |s|.
  Shift3 estimate_shift(const Volume& fixed, const Volume& moving) const;
  Volume register_volume(const Volume& fixed, const Volume& moving) override;
  std::string name() const override { return "translation"; }

  /// Shifts found by register_volume, in call order.
  const std::vector<Shift3>& history() const { return history_; }

 private:
  int max_shift_;
  std::vector<Shift3> history_;
};

/// out(x) = v(x + s), zero where x + s falls outside.
Volume apply_shift(const Volume& v, const Shift3& s);

/// Registers every volume t >= 1 to volume 0. Backend failures surface as
/// RegistrationError carrying t.
DynamicSeries motion_compensate(const DynamicSeries& series, RegistrationBackend& registrar);

/// Volume t of the result is max(0, input[t + 1] - input[0]).
DynamicSeries subtract_precontrast(const DynamicSeries& series);

/// First t whose ROI mean exceeds `fraction` of the largest ROI mean, with
/// at least `window` volumes from t onward.
int find_reference_timepoint(const DynamicSeries& subtracted, const BoundingBox3D& aorta_roi,
                             double fraction = 0.2, int window = 13);

/// Volumes ref .. ref + count - 1.
DynamicSeries select_temporal_window(const DynamicSeries& subtracted, int ref, int count = 13);

inline constexpr int kOtsuBins = 256;

/// Threshold maximizing between-class variance over a 256-bin histogram
/// spanning [min, max]. For the split after bin k the threshold is
/// min + (k + 1) * width; foreground is value > threshold.
double otsu_threshold(std::span<const float> values);

struct BreastTensor {
  BreastSide side = BreastSide::Left;
  Point3 crop_origin;  // original = tensor + crop_origin
  std::array<int, 4> shape{};  // (C, D, H, W)
  std::vector<float> data;

  std::size_t channel_size() const { return std::size_t(shape[1]) * shape[2] * shape[3]; }
};

struct CropConfig {
  int crop_size = 192;
  int margin = 5;  // rows kept above the top-point
};

/// Splits the image into halves and crops each around its Otsu foreground:
/// rows [top - margin, top - margin + crop), columns centered on the half,
/// all slices, zero padding outside the volume. Returns (right, left).
std::array<BreastTensor, 2> split_and_crop(const Volume& precontrast, const DynamicSeries& window,
                                           const CropConfig& config = {});

/// Divides by the 99th percentile of the nonzero values (no-op if none).
void normalize_intensity(BreastTensor& t, double percentile = 0.99);

BoundingBox3D to_original(const BoundingBox3D& tensor_box, const Point3& crop_origin);
BoundingBox3D to_tensor(const BoundingBox3D& original_box, const Point3& crop_origin);

struct PreprocessConfig {
  CropConfig crop;
  int window = 13;
  double reference_fraction = 0.2;
  bool normalize = true;
  int max_shift = 5;
  bool register_motion = true;
};

void to_json(nlohmann::json& j, const PreprocessConfig& c);
PreprocessConfig preprocess_config_from_json(const nlohmann::json& j, const std::string& prefix);

struct PreprocessResult {
  std::array<BreastTensor, 2> breasts;  // right, left
  int reference_index = 0;
  std::vector<Shift3> shifts;  // per volume t >= 1 when translation registration ran
};

PreprocessResult preprocess_series(const DynamicSeries& series, const BoundingBox3D& aorta_roi,
                                   const PreprocessConfig& config = {});

/// Writes `<dir>/<breast_id>.f32` plus sidecar with side and crop origin.
std::filesystem::path write_breast_tensor(const std::filesystem::path& dir, const std::string& breast_id,
                                          const BreastTensor& t);
BreastTensor read_breast_tensor(const std::filesystem::path& raw);

}  // namespace cade
