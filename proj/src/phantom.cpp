#include "cade/phantom.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "cade/error.hpp"
#include "cade/json_reader.hpp"

namespace cade {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Tissue labels; lesion i uses kLesionBase + i.
enum : std::uint8_t { kAir, kFat, kParenchyma, kVessel, kMuscle, kBody, kAorta, kLesionBase };

constexpr float kPre[] = {0.0f, 100.0f, 60.0f, 45.0f, 50.0f, 25.0f, 40.0f};
constexpr float kLesionPre = 55.0f;
constexpr Kinetics kParenchymaKinetics{12.0, 8.0, 1};
constexpr Kinetics kVesselKinetics{70.0, 1.0, 0};
constexpr Kinetics kAortaKinetics{200.0, 1.0, 0};

double enhancement(const Kinetics& k, int onset, int t) {
  if (t < onset) return 0.0;
  return k.amplitude * (1.0 - std::exp(-double(t - onset + 1) / k.tau));
}

const RadiusDistribution& radius_for(const PhantomConfig& c, LesionCategory cat) {
  switch (cat) {
    case LesionCategory::Malignant: return c.malignant_radius;
    case LesionCategory::BenignBiopsied: return c.benign_radius;
    case LesionCategory::BenignFollowup: return c.followup_radius;
  }
  return c.malignant_radius;
}

const Kinetics& kinetics_for(const PhantomConfig& c, LesionCategory cat) {
  switch (cat) {
    case LesionCategory::Malignant: return c.malignant;
    case LesionCategory::BenignBiopsied: return c.benign;
    case LesionCategory::BenignFollowup: return c.followup;
  }
  return c.malignant;
}

double truncated_normal(std::mt19937_64& rng, const RadiusDistribution& d, double lo, double hi) {
  std::normal_distribution<double> nd(d.mean_mm, d.sd_mm);
  for (int i = 0; i < 1000; ++i) {
    const double v = nd(rng);
    if (v >= lo && v <= hi) return v;
  }
  return std::clamp(d.mean_mm, lo, hi);
}

struct BreastShape {
  double cx, yc, cz, rx, ry, rz;
};

struct Anatomy {
  Volume labels;
  std::vector<Kinetics> lesion_kinetics;
  std::vector<int> lesion_onsets;
};

void json_kinetics(json& j, const Kinetics& k) {
  j = {{"amplitude", k.amplitude}, {"tau", k.tau}, {"onset_delay", k.onset_delay}};
}

Kinetics kinetics_from_json(const json& j, const std::string& prefix) {
  Kinetics k;
  StrictObject obj(j, prefix);
  obj.read("amplitude", k.amplitude);
  obj.read("tau", k.tau);
  obj.read("onset_delay", k.onset_delay);
  obj.finish();
  if (!(k.tau > 0)) throw ConfigError(obj.path("tau"), "must be positive");
  if (k.onset_delay < 0) throw ConfigError(obj.path("onset_delay"), "must be nonnegative");
  return k;
}

RadiusDistribution radius_from_json(const json& j, const std::string& prefix) {
  RadiusDistribution r;
  StrictObject obj(j, prefix);
  obj.read("mean_mm", r.mean_mm);
  obj.read("sd_mm", r.sd_mm);
  obj.finish();
  if (!(r.sd_mm >= 0)) throw ConfigError(obj.path("sd_mm"), "must be nonnegative");
  return r;
}

}  // namespace

void PhantomConfig::validate() const {
  const auto [t, d, h, w] = shape;
  if (t < 2 || d < 4 || h < 32 || w < 32) throw ConfigError("phantom.shape", "too small (need T>=2, D>=4, H,W>=32)");
  if (w % 2 != 0) throw ConfigError("phantom.shape", "width must be even");
  for (double s : spacing_mm) {
    if (!(s > 0)) throw ConfigError("phantom.spacing_mm", "must be positive");
  }
  if (!(min_radius_mm > 0 && max_radius_mm >= min_radius_mm)) {
    throw ConfigError("phantom.min_radius_mm", "need 0 < min_radius_mm <= max_radius_mm");
  }
  double wsum = 0;
  for (double v : category_weights) {
    if (!(v >= 0)) throw ConfigError("phantom.category_weights", "must be nonnegative");
    wsum += v;
  }
  if (!(wsum > 0)) throw ConfigError("phantom.category_weights", "must not all be zero");
  if (!(lesion_free_fraction >= 0 && lesion_free_fraction <= 1)) {
    throw ConfigError("phantom.lesion_free_fraction", "must be in [0,1]");
  }
  if (max_lesions < 1) throw ConfigError("phantom.max_lesions", "must be positive");
  if (vessel_count < 0) throw ConfigError("phantom.vessel_count", "must be nonnegative");
  if (!(noise_sigma >= 0)) throw ConfigError("phantom.noise_sigma", "must be nonnegative");
  if (motion_amplitude < 0) throw ConfigError("phantom.motion_amplitude", "must be nonnegative");
  if (arrival_index < 1 || arrival_index >= t) throw ConfigError("phantom.arrival_index", "must be in [1, T)");
  if (!(repeat_patient_fraction >= 0 && repeat_patient_fraction < 1)) {
    throw ConfigError("phantom.repeat_patient_fraction", "must be in [0,1)");
  }
  if (date_span_days < 1) throw ConfigError("phantom.date_span_days", "must be positive");
  try {
    parse_iso_date(first_date);
  } catch (const Error& e) {
    throw ConfigError("phantom.first_date", e.what());
  }
}

void to_json(json& j, const PhantomConfig& c) {
  json mal, ben, fol;
  json_kinetics(mal, c.malignant);
  json_kinetics(ben, c.benign);
  json_kinetics(fol, c.followup);
  auto radius = [](const RadiusDistribution& r) { return json{{"mean_mm", r.mean_mm}, {"sd_mm", r.sd_mm}}; };
  j = {{"shape", c.shape},
       {"spacing_mm", c.spacing_mm},
       {"malignant_radius", radius(c.malignant_radius)},
       {"benign_radius", radius(c.benign_radius)},
       {"followup_radius", radius(c.followup_radius)},
       {"min_radius_mm", c.min_radius_mm},
       {"max_radius_mm", c.max_radius_mm},
       {"category_weights", c.category_weights},
       {"lesion_free_fraction", c.lesion_free_fraction},
       {"max_lesions", c.max_lesions},
       {"vessel_count", c.vessel_count},
       {"noise_sigma", c.noise_sigma},
       {"motion_amplitude", c.motion_amplitude},
       {"arrival_index", c.arrival_index},
       {"malignant", mal},
       {"benign", ben},
       {"followup", fol},
       {"repeat_patient_fraction", c.repeat_patient_fraction},
       {"first_date", c.first_date},
       {"date_span_days", c.date_span_days}};
}

PhantomConfig phantom_config_from_json(const json& j, const std::string& prefix) {
  PhantomConfig c;
  StrictObject obj(j, prefix);
  obj.read("shape", c.shape);
  obj.read("spacing_mm", c.spacing_mm);
  if (const auto* v = obj.find("malignant_radius")) c.malignant_radius = radius_from_json(*v, obj.path("malignant_radius"));
  if (const auto* v = obj.find("benign_radius")) c.benign_radius = radius_from_json(*v, obj.path("benign_radius"));
  if (const auto* v = obj.find("followup_radius")) c.followup_radius = radius_from_json(*v, obj.path("followup_radius"));
  obj.read("min_radius_mm", c.min_radius_mm);
  obj.read("max_radius_mm", c.max_radius_mm);
  obj.read("category_weights", c.category_weights);
  obj.read("lesion_free_fraction", c.lesion_free_fraction);
  obj.read("max_lesions", c.max_lesions);
  obj.read("vessel_count", c.vessel_count);
  obj.read("noise_sigma", c.noise_sigma);
  obj.read("motion_amplitude", c.motion_amplitude);
  obj.read("arrival_index", c.arrival_index);
  if (const auto* v = obj.find("malignant")) c.malignant = kinetics_from_json(*v, obj.path("malignant"));
  if (const auto* v = obj.find("benign")) c.benign = kinetics_from_json(*v, obj.path("benign"));
  if (const auto* v = obj.find("followup")) c.followup = kinetics_from_json(*v, obj.path("followup"));
  obj.read("repeat_patient_fraction", c.repeat_patient_fraction);
  obj.read("first_date", c.first_date);
  obj.read("date_span_days", c.date_span_days);
  obj.finish();
  c.validate();
  return c;
}

PhantomSample generate_phantom(const PhantomConfig& cfg, std::uint64_t seed,
                               const std::optional<std::vector<LesionRequest>>& requested) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };

  const auto [T, D, H, W] = cfg.shape;
  const Shape3 vshape{D, H, W};
  const int half = W / 2;
  const double chest = std::round(0.62 * H);
  const double slab = 0.1 * H;

  // Shared breast outline; both sides mirror each other.
  const double top = std::round(uniform(0.18, 0.26) * H);
  BreastShape shape{0, chest, D / 2.0, 0.40 * half * uniform(0.9, 1.05), chest - top, 0.5 * D * uniform(0.8, 0.95)};
  const std::array<double, 2> centers{half / 2.0, W - half / 2.0};  // right, left

  Anatomy an;
  an.labels = Volume(vshape, float(kAir));
  PhantomTruth truth;
  truth.breast_mask = Volume(vshape, 0.0f);

  auto in_breast = [&](int side, double z, double y, double x) {
    if (y > shape.yc) return false;
    const double a = (x - centers[side]) / shape.rx, b = (y - shape.yc) / shape.ry, c = (z - shape.cz) / shape.rz;
    return a * a + b * b + c * c <= 1.0;
  };
  auto radial = [&](int side, double z, double y, double x) {
    const double a = (x - centers[side]) / shape.rx, b = (y - shape.yc) / shape.ry, c = (z - shape.cz) / shape.rz;
    return std::sqrt(a * a + b * b + c * c);
  };

  // Smooth random field for the parenchyma pattern.
  struct Wave {
    double kz, ky, kx, phase;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i) {
    const double wl = uniform(8.0, 18.0);
    waves.push_back({uniform(-1, 1) * 2 * M_PI / wl, uniform(-1, 1) * 2 * M_PI / wl, uniform(-1, 1) * 2 * M_PI / wl,
                     uniform(0, 2 * M_PI)});
  }

  const double aorta_y = chest + slab + 0.12 * H;
  const double aorta_x = W / 2.0 + 0.06 * W;
  const double aorta_r = std::max(2.5, 0.035 * H);

  for (int z = 0; z < D; ++z) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double pz = z + 0.5, py = y + 0.5, px = x + 0.5;
        std::uint8_t label = kAir;
        const int side = x < half ? 0 : 1;
        if (in_breast(side, pz, py, px)) {
          label = kFat;
          truth.breast_mask.at(z, y, x) = 1.0f;
          double f = 0;
          for (const auto& w : waves) f += std::sin(w.kz * pz + w.ky * py + w.kx * (side == 0 ? px : W - px) + w.phase);
          if (radial(side, pz, py, px) < 0.75 && f > 0.8) label = kParenchyma;
        } else if (py > chest && py <= chest + slab) {
          label = kMuscle;
        } else if (py > chest + slab) {
          label = kBody;
          const double dy = py - aorta_y, dx = px - aorta_x;
          if (dy * dy + dx * dx <= aorta_r * aorta_r) label = kAorta;
        }
        an.labels.at(z, y, x) = float(label);
      }
    }
  }

  // Vessels: straight tubes from near the chest wall towards the front.
  for (int side = 0; side < 2; ++side) {
    for (int v = 0; v < cfg.vessel_count; ++v) {
      const double z0 = shape.cz + uniform(-0.5, 0.5) * shape.rz;
      const double x0 = centers[side] + uniform(-0.6, 0.6) * shape.rx;
      const double y0 = shape.yc - 1.0;
      const double z1 = shape.cz + uniform(-0.5, 0.5) * shape.rz;
      const double x1 = centers[side] + uniform(-0.4, 0.4) * shape.rx;
      const double y1 = shape.yc - uniform(0.5, 0.85) * shape.ry;
      const double len2 = (z1 - z0) * (z1 - z0) + (y1 - y0) * (y1 - y0) + (x1 - x0) * (x1 - x0);
      const int xlo = side * half, xhi = xlo + half;
      for (int z = 0; z < D; ++z) {
        for (int y = 0; y < H; ++y) {
          for (int x = xlo; x < xhi; ++x) {
            if (truth.breast_mask.at(z, y, x) == 0.0f) continue;
            const double pz = z + 0.5, py = y + 0.5, px = x + 0.5;
            double s = ((pz - z0) * (z1 - z0) + (py - y0) * (y1 - y0) + (px - x0) * (x1 - x0)) / len2;
            s = std::clamp(s, 0.0, 1.0);
            const double dz = pz - (z0 + s * (z1 - z0)), dy = py - (y0 + s * (y1 - y0)), dx = px - (x0 + s * (x1 - x0));
            if (dz * dz + dy * dy + dx * dx <= 1.0) an.labels.at(z, y, x) = float(kVessel);
          }
        }
      }
    }
  }

  // Lesion layout.
  std::vector<LesionRequest> layout;
  if (requested) {
    layout = *requested;
  } else if (u01(rng) >= cfg.lesion_free_fraction) {
    int count = 1;
    while (count < cfg.max_lesions && u01(rng) < 0.25) ++count;
    std::discrete_distribution<int> cat(cfg.category_weights.begin(), cfg.category_weights.end());
    for (int i = 0; i < count; ++i) {
      layout.push_back({u01(rng) < 0.5 ? BreastSide::Right : BreastSide::Left, LesionCategory(cat(rng))});
    }
  }
  if (int(layout.size()) + kLesionBase > 255) fail(ErrorKind::Generation, "too many lesions");

  std::vector<BoundingBox3D> placed;
  for (std::size_t li = 0; li < layout.size(); ++li) {
    const auto& req = layout[li];
    const int side = req.side == BreastSide::Right ? 0 : 1;
    const auto& dist = radius_for(cfg, req.category);
    bool ok = false;
    for (int attempt = 0; attempt < 400 && !ok; ++attempt) {
      const double r_mm = truncated_normal(rng, dist, cfg.min_radius_mm, cfg.max_radius_mm);
      std::array<double, 3> aspect{uniform(0.8, 1.25), uniform(0.8, 1.25), uniform(0.8, 1.25)};
      const double norm = std::cbrt(aspect[0] * aspect[1] * aspect[2]);
      std::array<double, 3> semi{};
      for (int a = 0; a < 3; ++a) semi[a] = std::max(0.75, r_mm * aspect[a] / norm / cfg.spacing_mm[a]);
      const double cz = uniform(shape.cz - shape.rz, shape.cz + shape.rz);
      const double cy = uniform(shape.yc - shape.ry, shape.yc);
      const double cx = uniform(centers[side] - shape.rx, centers[side] + shape.rx);

      Shape3 lo{}, hi{};
      const std::array<double, 3> c{cz, cy, cx};
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::max(0, int(std::floor(c[a] - semi[a] - 1)));
        hi[a] = std::min(vshape[a], int(std::ceil(c[a] + semi[a] + 1)));
      }
      std::vector<std::array<int, 3>> support;
      bool inside = true;
      for (int z = lo[0]; z < hi[0] && inside; ++z) {
        for (int y = lo[1]; y < hi[1] && inside; ++y) {
          for (int x = lo[2]; x < hi[2]; ++x) {
            const double a = (z + 0.5 - cz) / semi[0], b = (y + 0.5 - cy) / semi[1], e = (x + 0.5 - cx) / semi[2];
            if (a * a + b * b + e * e > 1.0) continue;
            if (truth.breast_mask.at(z, y, x) == 0.0f) {
              inside = false;
              break;
            }
            support.push_back({z, y, x});
          }
        }
      }
      if (!inside || support.empty()) continue;
      Shape3 bmin{vshape}, bmax{0, 0, 0};
      for (const auto& p : support) {
        for (int a = 0; a < 3; ++a) {
          bmin[a] = std::min(bmin[a], p[a]);
          bmax[a] = std::max(bmax[a], p[a] + 1);
        }
      }
      const BoundingBox3D box{{double(bmin[0]), double(bmin[1]), double(bmin[2])},
                              {double(bmax[0]), double(bmax[1]), double(bmax[2])}};
      const bool overlaps = std::any_of(placed.begin(), placed.end(),
                                        [&](const BoundingBox3D& o) { return intersection_volume(o, box) > 0; });
      if (overlaps) continue;
      for (const auto& p : support) an.labels.at(p[0], p[1], p[2]) = float(kLesionBase + li);
      placed.push_back(box);
      const Kinetics& k = kinetics_for(cfg, req.category);
      an.lesion_kinetics.push_back(k);
      an.lesion_onsets.push_back(cfg.arrival_index + k.onset_delay);
      truth.lesions.push_back({box, req.category, req.side, cfg.arrival_index + k.onset_delay, support.size()});
      ok = true;
    }
    if (!ok) fail(ErrorKind::Generation, "could not place lesion " + std::to_string(li) + " inside the breast");
  }

  // Tight boxes must survive later overwrites, so recheck support counts.
  for (std::size_t li = 0; li < truth.lesions.size(); ++li) {
    const auto r = voxels_inside(truth.lesions[li].box);
    std::size_t n = 0;
    for (int z = r.lo[0]; z < r.hi[0]; ++z)
      for (int y = r.lo[1]; y < r.hi[1]; ++y)
        for (int x = r.lo[2]; x < r.hi[2]; ++x) n += an.labels.at(z, y, x) == float(kLesionBase + li);
    if (n != truth.lesions[li].voxels) fail(ErrorKind::Generation, "lesion support changed after placement");
  }

  truth.aorta_onset = cfg.arrival_index - 1;
  truth.aorta_roi = BoundingBox3D{{1.0, aorta_y - 1.0, aorta_x - 1.0}, {double(D - 1), aorta_y + 1.0, aorta_x + 1.0}};

  // Per-label intensity curves.
  const int nlabels = kLesionBase + int(an.lesion_kinetics.size());
  std::vector<std::vector<float>> curve(nlabels, std::vector<float>(T));
  for (int t = 0; t < T; ++t) {
    for (int l = 0; l < kLesionBase; ++l) {
      double v = kPre[l];
      if (l == kParenchyma) v += enhancement(kParenchymaKinetics, cfg.arrival_index + kParenchymaKinetics.onset_delay, t);
      if (l == kVessel) v += enhancement(kVesselKinetics, cfg.arrival_index, t);
      if (l == kAorta) v += enhancement(kAortaKinetics, cfg.arrival_index, t);
      curve[l][t] = float(v);
    }
    for (std::size_t i = 0; i < an.lesion_kinetics.size(); ++i) {
      curve[kLesionBase + i][t] = float(kLesionPre + enhancement(an.lesion_kinetics[i], an.lesion_onsets[i], t));
    }
  }

  truth.motion.assign(T, Shift3{0, 0, 0});
  if (cfg.motion_amplitude > 0) {
    std::uniform_int_distribution<int> md(-cfg.motion_amplitude, cfg.motion_amplitude);
    for (int t = 1; t < T; ++t) truth.motion[t] = {md(rng), md(rng), md(rng)};
  }

  PhantomSample out;
  out.clean.spacing_mm = out.series.spacing_mm = cfg.spacing_mm;
  std::normal_distribution<float> noise(0.0f, float(cfg.noise_sigma));
  for (int t = 0; t < T; ++t) {
    Volume v(vshape);
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = curve[std::size_t(an.labels.data[i])][t];
    const Shift3& m = truth.motion[t];
    Volume moved = apply_shift(v, {-m[0], -m[1], -m[2]});
    if (cfg.noise_sigma > 0) {
      for (float& x : moved.data) x += noise(rng);
    }
    out.clean.volumes.push_back(std::move(v));
    out.series.volumes.push_back(std::move(moved));
    out.clean.time_index.push_back(t);
    out.series.time_index.push_back(t);
  }
  out.truth = std::move(truth);
  return out;
}

namespace {

json truth_to_json(const PhantomTruth& t) {
  json lesions = json::array();
  for (const auto& l : t.lesions) {
    json j = box_to_json(l.box);
    j["category"] = to_string(l.category);
    j["side"] = to_string(l.side);
    j["onset_index"] = l.onset_index;
    j["voxels"] = l.voxels;
    lesions.push_back(j);
  }
  return {{"lesions", lesions},
          {"aorta_roi", box_to_json(t.aorta_roi)},
          {"aorta_onset", t.aorta_onset},
          {"motion", t.motion}};
}

}  // namespace

Corpus generate_corpus(const fs::path& root, int n, const PhantomConfig& cfg, std::uint64_t seed,
                       const CorpusOptions& opt) {
  if (n < 1) fail(ErrorKind::InvalidInput, "corpus needs at least one study");
  cfg.validate();
  if (fs::exists(root) && !fs::is_empty(root)) {
    fail(ErrorKind::InvalidInput, "refusing to write into non-empty directory " + root.string());
  }
  fs::create_directories(root);

  // Patient identities and dates come from one sequential stream so they do
  // not depend on the worker count.
  std::mt19937_64 meta_rng(derive_seed(seed, 0xC0FFEE));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> day(0, cfg.date_span_days - 1);
  const auto first = parse_iso_date(cfg.first_date);
  std::vector<StudyRecord> records(n);
  std::vector<std::string> patients;
  for (int i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04d", i);
    records[i].study_id = buf;
    if (!patients.empty() && u01(meta_rng) < cfg.repeat_patient_fraction) {
      records[i].patient_id = patients[std::size_t(u01(meta_rng) * patients.size()) % patients.size()];
    } else {
      std::snprintf(buf, sizeof buf, "p%04d", int(patients.size()));
      patients.emplace_back(buf);
      records[i].patient_id = buf;
    }
    records[i].date = format_iso_date(first + std::chrono::days{day(meta_rng)});
  }

  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        StudyRecord& rec = records[i];
        std::optional<std::vector<LesionRequest>> layout;
        if (!opt.layouts.empty()) layout = opt.layouts[std::size_t(i) % opt.layouts.size()];
        const PhantomSample sample = generate_phantom(cfg, derive_seed(seed, std::uint64_t(i)), layout);
        const fs::path dir = root / rec.study_id;
        fs::create_directories(dir);
        if (opt.keep_series) {
          write_series(dir / "series.f32", sample.series);
          std::ofstream(dir / "truth.json") << truth_to_json(sample.truth).dump(1) << "\n";
        }
        const PreprocessResult pre = preprocess_series(sample.series, sample.truth.aorta_roi, opt.preprocess);
        for (int b = 0; b < 2; ++b) {
          BreastRecord& br = rec.breasts[b];
          br.side = pre.breasts[b].side;
          br.breast_id = make_breast_id(rec.study_id, br.side);
          br.crop_origin = pre.breasts[b].crop_origin;
          br.tensor = fs::relative(write_breast_tensor(dir, br.breast_id, pre.breasts[b]), root).string();
          for (const auto& l : sample.truth.lesions) {
            if (l.side == br.side) br.lesions.push_back({l.box, l.category, br.breast_id});
          }
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::min(n, worker_limit(opt.workers));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Corpus corpus;
  corpus.root = root;
  json pj;
  to_json(pj, cfg);
  json prej;
  to_json(prej, opt.preprocess);
  corpus.generator = {{"phantom", pj}, {"preprocess", prej}, {"seed", seed}, {"studies", n}};
  corpus.studies = std::move(records);
  write_corpus_index(corpus);
  write_annotations(root / "annotations.jsonl", corpus.annotations());
  return corpus;
}

}  // namespace cade
