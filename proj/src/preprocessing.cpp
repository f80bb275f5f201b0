#include "cade/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cade/error.hpp"
#include "cade/json_reader.hpp"
#include "cade/simd/kernels.hpp"

namespace cade {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------ registration

namespace {

// Summed-area table over a volume and its squares, (D+1)(H+1)(W+1) entries.
class SummedVolume {
 public:
  SummedVolume(const Volume& v, bool squared) : d_(v.shape[0]), h_(v.shape[1]), w_(v.shape[2]) {
    sat_.assign(std::size_t(d_ + 1) * (h_ + 1) * (w_ + 1), 0.0);
    rebuild(v, squared);
  }

  /// Sum over [lo, hi) per axis.
  double sum(const Shape3& lo, const Shape3& hi) const {
    return at(hi[0], hi[1], hi[2]) - at(lo[0], hi[1], hi[2]) - at(hi[0], lo[1], hi[2]) -
           at(hi[0], hi[1], lo[2]) + at(lo[0], lo[1], hi[2]) + at(lo[0], hi[1], lo[2]) +
           at(hi[0], lo[1], lo[2]) - at(lo[0], lo[1], lo[2]);
  }

 private:
  void rebuild(const Volume& v, bool squared) {
    for (int z = 1; z <= d_; ++z) {
      for (int y = 1; y <= h_; ++y) {
        for (int x = 1; x <= w_; ++x) {
          const double val = v.at(z - 1, y - 1, x - 1);
          at(z, y, x) = (squared ? val * val : val) + at(z - 1, y, x) + at(z, y - 1, x) + at(z, y, x - 1) -
                        at(z - 1, y - 1, x) - at(z - 1, y, x - 1) - at(z, y - 1, x - 1) +
                        at(z - 1, y - 1, x - 1);
        }
      }
    }
  }

  double& at(int z, int y, int x) { return sat_[(std::size_t(z) * (h_ + 1) + y) * (w_ + 1) + x]; }
  double at(int z, int y, int x) const { return sat_[(std::size_t(z) * (h_ + 1) + y) * (w_ + 1) + x]; }

  int d_, h_, w_;
  std::vector<double> sat_;
};

}  // namespace

Shift3 TranslationRegistrar::estimate_shift(const Volume& fixed, const Volume& moving) const {
  require(fixed.shape == moving.shape, "registration: fixed and moving shapes differ");
  const Shape3 n = fixed.shape;
  const SummedVolume sf(fixed, false), sff(fixed, true), sm(moving, false), smm(moving, true);
  const auto& kt = simd::kernels<float>();

  Shift3 best{0, 0, 0};
  double best_ncc = -std::numeric_limits<double>::infinity();
  int best_norm = std::numeric_limits<int>::max();
  for (int dz = -max_shift_; dz <= max_shift_; ++dz) {
    for (int dy = -max_shift_; dy <= max_shift_; ++dy) {
      for (int dx = -max_shift_; dx <= max_shift_; ++dx) {
        const Shift3 s{dz, dy, dx};
        Shape3 lo{}, hi{}, mlo{}, mhi{};
        bool empty = false;
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::max(0, -s[a]);
          hi[a] = std::min(n[a], n[a] - s[a]);
          mlo[a] = lo[a] + s[a];
          mhi[a] = hi[a] + s[a];
          empty |= hi[a] <= lo[a];
        }
        if (empty) continue;
        const double count = double(hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
        const double f = sf.sum(lo, hi), m = sm.sum(mlo, mhi);
        const double vf = sff.sum(lo, hi) - f * f / count;
        const double vm = smm.sum(mlo, mhi) - m * m / count;
        if (!(vf > 0 && vm > 0)) continue;
        double fm = 0;
        const std::size_t len = std::size_t(hi[2] - lo[2]);
        for (int z = lo[0]; z < hi[0]; ++z) {
          for (int y = lo[1]; y < hi[1]; ++y) {
            fm += kt.dot(&fixed.data[fixed.index(z, y, lo[2])], &moving.data[moving.index(z + dz, y + dy, lo[2] + dx)],
                         len);
          }
        }
        const double ncc = (fm - f * m / count) / std::sqrt(vf * vm);
        const int norm = dz * dz + dy * dy + dx * dx;
        if (ncc > best_ncc || (ncc == best_ncc && norm < best_norm)) {
          best_ncc = ncc;
          best_norm = norm;
          best = s;
        }
      }
    }
  }
  if (!std::isfinite(best_ncc)) fail(ErrorKind::Registration, "no overlap with nonzero variance");
  return best;
}

Volume apply_shift(const Volume& v, const Shift3& s) {
  Volume out(v.shape);
  for (int z = 0; z < v.shape[0]; ++z) {
    for (int y = 0; y < v.shape[1]; ++y) {
      for (int x = 0; x < v.shape[2]; ++x) {
        if (v.contains(z + s[0], y + s[1], x + s[2])) out.at(z, y, x) = v.at(z + s[0], y + s[1], x + s[2]);
      }
    }
  }
  return out;
}

Volume TranslationRegistrar::register_volume(const Volume& fixed, const Volume& moving) {
  const Shift3 s = estimate_shift(fixed, moving);
  history_.push_back(s);
  return apply_shift(moving, s);
}

DynamicSeries motion_compensate(const DynamicSeries& series, RegistrationBackend& registrar) {
  series.validate();
  DynamicSeries out = series;
  for (int t = 1; t < series.timepoints(); ++t) {
    try {
      out.volumes[t] = registrar.register_volume(series.volumes[0], series.volumes[t]);
    } catch (const RegistrationError&) {
      throw;
    } catch (const std::exception& e) {
      throw RegistrationError(t, e.what());
    }
    if (out.volumes[t].shape != series.shape()) {
      throw RegistrationError(t, "backend '" + registrar.name() + "' changed the volume shape");
    }
  }
  return out;
}

// ------------------------------------------------------------ subtraction

DynamicSeries subtract_precontrast(const DynamicSeries& series) {
  series.validate();
  if (series.timepoints() < 2) fail(ErrorKind::InvalidInput, "subtraction needs at least two volumes");
  DynamicSeries out;
  out.spacing_mm = series.spacing_mm;
  const auto& pre = series.volumes[0].data;
  for (int t = 1; t < series.timepoints(); ++t) {
    Volume v(series.shape());
    const auto& cur = series.volumes[t].data;
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = std::max(0.0f, cur[i] - pre[i]);
    out.volumes.push_back(std::move(v));
    out.time_index.push_back(series.time_index.empty() ? t : series.time_index[t]);
  }
  return out;
}

int find_reference_timepoint(const DynamicSeries& sub, const BoundingBox3D& roi, double fraction, int window) {
  sub.validate();
  const Shape3 s = sub.shape();
  const VoxelRange r = voxels_inside(roi);
  for (int a = 0; a < 3; ++a) {
    if (r.lo[a] < 0 || r.hi[a] > s[a] || r.hi[a] <= r.lo[a]) {
      fail(ErrorKind::InvalidInput, "aorta ROI is empty or outside the volume");
    }
  }
  std::vector<double> means;
  for (const auto& v : sub.volumes) {
    double acc = 0;
    for (int z = r.lo[0]; z < r.hi[0]; ++z)
      for (int y = r.lo[1]; y < r.hi[1]; ++y)
        for (int x = r.lo[2]; x < r.hi[2]; ++x) acc += v.at(z, y, x);
    means.push_back(acc / double(r.count()));
  }
  const double peak = *std::max_element(means.begin(), means.end());
  if (!(peak > 0)) fail(ErrorKind::ReferenceDetection, "aorta ROI never enhances");
  for (int t = 0; t < int(means.size()); ++t) {
    if (means[t] > fraction * peak) {
      if (t + window > sub.timepoints()) {
        fail(ErrorKind::ReferenceDetection, "reference time-point " + std::to_string(t) + " leaves fewer than " +
                                                std::to_string(window) + " volumes");
      }
      return t;
    }
  }
  fail(ErrorKind::ReferenceDetection, "aorta ROI never exceeds the threshold");
}

DynamicSeries select_temporal_window(const DynamicSeries& sub, int ref, int count) {
  if (ref < 0 || ref + count > sub.timepoints()) {
    fail(ErrorKind::InvalidInput, "temporal window [" + std::to_string(ref) + ", " + std::to_string(ref + count) +
                                      ") exceeds " + std::to_string(sub.timepoints()) + " volumes");
  }
  DynamicSeries out;
  out.spacing_mm = sub.spacing_mm;
  for (int t = ref; t < ref + count; ++t) {
    out.volumes.push_back(sub.volumes[t]);
    if (!sub.time_index.empty()) out.time_index.push_back(sub.time_index[t]);
  }
  return out;
}

// ------------------------------------------------------------ segmentation

double otsu_threshold(std::span<const float> values) {
  if (values.empty()) fail(ErrorKind::InvalidInput, "otsu: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) fail(ErrorKind::InvalidInput, "otsu: volume is constant");
  const double width = (hi - lo) / kOtsuBins;
  std::array<double, kOtsuBins> hist{};
  for (float v : values) hist[std::min(kOtsuBins - 1, int((v - lo) / width))] += 1;

  const double total = double(values.size());
  double mu_total = 0;
  for (int i = 0; i < kOtsuBins; ++i) mu_total += i * hist[i] / total;
  double w0 = 0, mu0 = 0, best = -1;
  int best_k = 0;
  for (int k = 0; k < kOtsuBins - 1; ++k) {
    w0 += hist[k] / total;
    mu0 += k * hist[k] / total;
    if (w0 <= 0 || w0 >= 1) continue;
    const double diff = mu_total * w0 - mu0;
    const double between = diff * diff / (w0 * (1 - w0));
    if (between > best) {
      best = between;
      best_k = k;
    }
  }
  return lo + (best_k + 1) * width;
}

std::array<BreastTensor, 2> split_and_crop(const Volume& pre, const DynamicSeries& window, const CropConfig& cfg) {
  window.validate();
  const Shape3 s = pre.shape;
  if (window.shape() != s) fail(ErrorKind::InvalidInput, "crop: window and pre-contrast shapes differ");
  if (s[2] % 2 != 0) fail(ErrorKind::InvalidInput, "crop: in-plane width must be even");
  if (cfg.crop_size < 1 || cfg.margin < 0) fail(ErrorKind::InvalidInput, "crop: bad crop size or margin");
  const int half = s[2] / 2;
  const int crop = cfg.crop_size;
  const int channels = window.timepoints();

  std::array<BreastTensor, 2> out;
  for (int h = 0; h < 2; ++h) {
    const int hx = h * half;
    std::vector<float> values;
    values.reserve(std::size_t(s[0]) * s[1] * half);
    for (int z = 0; z < s[0]; ++z)
      for (int y = 0; y < s[1]; ++y)
        for (int x = hx; x < hx + half; ++x) values.push_back(pre.at(z, y, x));
    double thr = 0;
    try {
      thr = otsu_threshold(values);
    } catch (const Error&) {
      fail(ErrorKind::Segmentation, "breast half " + std::to_string(h) + " is constant");
    }
    int top = -1;
    for (int y = 0; y < s[1] && top < 0; ++y) {
      for (int z = 0; z < s[0] && top < 0; ++z) {
        for (int x = hx; x < hx + half; ++x) {
          if (pre.at(z, y, x) > thr) {
            top = y;
            break;
          }
        }
      }
    }
    if (top < 0) fail(ErrorKind::Segmentation, "no foreground in breast half " + std::to_string(h));

    const int y0 = top - cfg.margin;
    const int x0 = hx + half / 2 - crop / 2;
    BreastTensor& bt = out[h];
    bt.side = h == 0 ? BreastSide::Right : BreastSide::Left;
    bt.crop_origin = {0.0, double(y0), double(x0)};
    bt.shape = {channels, s[0], crop, crop};
    bt.data.assign(std::size_t(channels) * s[0] * crop * crop, 0.0f);
    const int ylo = std::max(0, y0), yhi = std::min(s[1], y0 + crop);
    const int xlo = std::max(0, x0), xhi = std::min(s[2], x0 + crop);
    for (int c = 0; c < channels; ++c) {
      const Volume& v = window.volumes[c];
      for (int z = 0; z < s[0]; ++z) {
        for (int y = ylo; y < yhi; ++y) {
          float* dst = &bt.data[((std::size_t(c) * s[0] + z) * crop + (y - y0)) * crop + (xlo - x0)];
          std::copy(&v.data[v.index(z, y, xlo)], &v.data[v.index(z, y, xlo)] + (xhi - xlo), dst);
        }
      }
    }
  }
  return out;
}

void normalize_intensity(BreastTensor& t, double percentile) {
  std::vector<float> nz;
  for (float v : t.data) {
    if (v != 0.0f) nz.push_back(v);
  }
  if (nz.empty()) return;
  const std::size_t k = std::size_t(std::floor(percentile * double(nz.size() - 1)));
  std::nth_element(nz.begin(), nz.begin() + std::ptrdiff_t(k), nz.end());
  const float p = nz[k];
  if (!(p > 0)) return;
  for (float& v : t.data) v /= p;
}

BoundingBox3D to_original(const BoundingBox3D& b, const Point3& o) { return b.shifted(o); }
BoundingBox3D to_tensor(const BoundingBox3D& b, const Point3& o) { return b.shifted({-o.z, -o.y, -o.x}); }

// ---------------------------------------------------------------- pipeline

void to_json(json& j, const PreprocessConfig& c) {
  j = {{"crop_size", c.crop.crop_size},
       {"margin", c.crop.margin},
       {"window", c.window},
       {"reference_fraction", c.reference_fraction},
       {"normalize", c.normalize},
       {"max_shift", c.max_shift},
       {"register_motion", c.register_motion}};
}

PreprocessConfig preprocess_config_from_json(const json& j, const std::string& prefix) {
  PreprocessConfig c;
  StrictObject obj(j, prefix);
  obj.read("crop_size", c.crop.crop_size);
  obj.read("margin", c.crop.margin);
  obj.read("window", c.window);
  obj.read("reference_fraction", c.reference_fraction);
  obj.read("normalize", c.normalize);
  obj.read("max_shift", c.max_shift);
  obj.read("register_motion", c.register_motion);
  obj.finish();
  if (c.crop.crop_size < 8) throw ConfigError(obj.path("crop_size"), "must be at least 8");
  if (c.crop.margin < 0) throw ConfigError(obj.path("margin"), "must be nonnegative");
  if (c.window < 1) throw ConfigError(obj.path("window"), "must be positive");
  if (!(c.reference_fraction > 0 && c.reference_fraction < 1)) {
    throw ConfigError(obj.path("reference_fraction"), "must be in (0,1)");
  }
  if (c.max_shift < 0) throw ConfigError(obj.path("max_shift"), "must be nonnegative");
  return c;
}

PreprocessResult preprocess_series(const DynamicSeries& series, const BoundingBox3D& aorta_roi,
                                   const PreprocessConfig& cfg) {
  series.validate();
  PreprocessResult r;
  DynamicSeries registered;
  if (cfg.register_motion) {
    TranslationRegistrar reg(cfg.max_shift);
    registered = motion_compensate(series, reg);
    r.shifts = reg.history();
  } else {
    registered = series;
  }
  const DynamicSeries sub = subtract_precontrast(registered);
  r.reference_index = find_reference_timepoint(sub, aorta_roi, cfg.reference_fraction, cfg.window);
  const DynamicSeries win = select_temporal_window(sub, r.reference_index, cfg.window);
  r.breasts = split_and_crop(registered.volumes[0], win, cfg.crop);
  if (cfg.normalize) {
    for (auto& b : r.breasts) normalize_intensity(b);
  }
  return r;
}

fs::path write_breast_tensor(const fs::path& dir, const std::string& breast_id, const BreastTensor& t) {
  std::string stem = breast_id;
  std::replace(stem.begin(), stem.end(), ':', '_');
  const fs::path raw = dir / (stem + ".f32");
  json meta = {{"breast_id", breast_id},
               {"side", to_string(t.side)},
               {"crop_origin", {t.crop_origin.z, t.crop_origin.y, t.crop_origin.x}},
               {"layout", "CDHW"}};
  write_tensor_file(raw, {t.shape[0], t.shape[1], t.shape[2], t.shape[3]}, t.data, meta);
  return raw;
}

BreastTensor read_breast_tensor(const fs::path& raw) {
  TensorFile tf = read_tensor_file(raw);
  if (tf.shape.size() != 4) fail(ErrorKind::InvalidInput, raw.string() + ": breast tensor must be 4D");
  BreastTensor t;
  t.shape = {tf.shape[0], tf.shape[1], tf.shape[2], tf.shape[3]};
  t.data = std::move(tf.data);
  try {
    t.side = tf.meta.at("side").get<std::string>() == "L" ? BreastSide::Left : BreastSide::Right;
    const auto o = tf.meta.at("crop_origin").get<std::array<double, 3>>();
    t.crop_origin = {o[0], o[1], o[2]};
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, raw.string() + ": bad breast tensor metadata: " + e.what());
  }
  return t;
}

}  // namespace cade
