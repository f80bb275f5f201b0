// Criteria 5 and 9: preprocessing on phantoms and end-to-end determinism.

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>

#include "acceptance.hpp"
#include "cade/experiment.hpp"
#include "cade/phantom.hpp"
#include "cade/preprocessing.hpp"
#include "cade/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace cade::acceptance {

using namespace cade::test;

Outcome preprocessing_suite() {
  Checks k;
  std::mt19937_64 rng(505);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> v;
    for (int m = 0; m < 1 + trial % 4; ++m) {
      std::normal_distribution<float> nd(std::uniform_real_distribution<float>(0, 500)(rng),
                                         std::uniform_real_distribution<float>(5, 60)(rng));
      const int n = std::uniform_int_distribution<int>(50, 600)(rng);
      for (int i = 0; i < n; ++i) v.push_back(nd(rng));
    }
    const double want = oracle_otsu(v);
    k.expect(std::abs(otsu_threshold(v) - want) <= 1e-12 * std::max(1.0, std::abs(want)), "otsu equals the oracle");
  }
  progress("criterion 5: otsu done");

  PhantomConfig pc;
  pc.shape = {20, 12, 64, 128};
  for (int i = 0; i < 20; ++i) {
    pc.arrival_index = 1 + i % 3;
    const auto p = generate_phantom(pc, 5000 + i);
    const auto sub = subtract_precontrast(p.clean);
    k.expect(p.truth.aorta_onset == pc.arrival_index - 1, "phantom onset bookkeeping");
    k.expect(find_reference_timepoint(sub, p.truth.aorta_roi) == p.truth.aorta_onset,
             "reference time-point equals the aortic onset");
  }
  progress("criterion 5: reference time-points done");

  pc = PhantomConfig{};
  pc.shape = {15, 12, 64, 128};
  pc.motion_amplitude = 3;
  PreprocessConfig pre;
  pre.crop.crop_size = 64;
  for (int i = 0; i < 10; ++i) {
    const auto p = generate_phantom(pc, 6000 + i);
    const auto r = preprocess_series(p.series, p.truth.aorta_roi, pre);
    bool exact = r.shifts.size() == 14;
    for (int t = 1; exact && t < 15; ++t) exact = r.shifts[t - 1] == p.truth.motion[t];
    k.expect(exact, "registration recovers every injected shift");
  }
  progress("criterion 5: motion done");

  pre = PreprocessConfig{};
  pre.register_motion = false;
  const std::vector<std::array<int, 4>> shapes{
      {16, 4, 64, 96}, {16, 8, 96, 192}, {16, 12, 160, 256}, {18, 16, 200, 400}, {16, 6, 240, 128}};
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    pc = PhantomConfig{};
    pc.shape = shapes[i];
    pc.arrival_index = 1 + int(i % 3);
    const auto p = generate_phantom(pc, 7000 + i);
    const auto r = preprocess_series(p.series, p.truth.aorta_roi, pre);
    for (const auto& b : r.breasts) {
      k.expect(b.shape == std::array<int, 4>{13, shapes[i][1], 192, 192}, "breast tensor is (13, D, 192, 192)");
      k.expect(b.data.size() == std::size_t(13) * shapes[i][1] * 192 * 192, "tensor data size");
    }
    for (const auto& l : p.truth.lesions) {
      const auto& b = r.breasts[l.side == BreastSide::Right ? 0 : 1];
      k.expect(to_original(to_tensor(l.box, b.crop_origin), b.crop_origin) == l.box, "crop origin round trip");
    }
  }
  for (int i = 0; i < 1000; ++i) {
    // Coordinates on a 1/64 voxel grid make the shift exact in floating point.
    const auto raw = random_box(rng, 300);
    auto q = [](Point3 p) { return Point3{std::round(p.z * 64) / 64, std::round(p.y * 64) / 64, std::round(p.x * 64) / 64}; };
    const BoundingBox3D box{q(raw.min()), q(raw.max())};
    const Point3 origin{double(int(rng() % 20)), double(int(rng() % 200)) - 50, double(int(rng() % 300)) - 50};
    k.expect(to_original(to_tensor(box, origin), origin) == box, "crop origin round trip");
  }
  return k.outcome("50 histograms, 20 onsets, 10 motion phantoms, 5 shapes");
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  files = 0;
  std::size_t other = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path twin = b / fs::relative(e.path(), a);
    if (!fs::exists(twin) || slurp(e.path()) != slurp(twin)) return false;
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
  return files == other && files > 0;
}

}  // namespace

Outcome determinism() {
  Checks k;
  const fs::path dir = scratch_dir("determinism");
  fs::create_directories(dir);
  const std::string base = "cd '" + dir.string() + "' && '" CADE_CLI "' phantom generate --n 6 --seed 42 ";
  for (const char* out : {"a", "b"}) {
    const int status = std::system((base + "--out " + out + " >/dev/null 2>&1").c_str());
    k.expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, std::string("phantom generate --out ") + out);
  }
  std::size_t files = 0;
  k.expect(same_tree(dir / "a", dir / "b", files), "two phantom corpora are byte-identical");

  const Corpus corpus = read_corpus(dir / "a");
  for (int kf : {3, 5}) {
    const auto f1 = make_folds(corpus.studies, kf, 17);
    const auto f2 = make_folds(corpus.studies, kf, 17);
    k.expect(f1.study_fold == f2.study_fold && f1.patient_fold == f2.patient_fold, "folds repeat under a seed");
  }

  // Two optimizer steps of the default network from the same seeds.
  NetworkConfig nc;
  nc.finalize();
  TrainConfig tc;
  tc.batch_size = 2;
  tc.epochs = 1;
  tc.max_steps = 2;
  tc.seed = 23;
  std::vector<std::size_t> all(corpus.studies.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto samples = training_samples(corpus, all, true);
  RetinaNet3d<float> a(nc, 31), b(nc, 31);
  const auto ra = fit(a, samples, {}, tc, LossConfig{});
  const auto rb = fit(b, samples, {}, tc, LossConfig{});
  k.expect(ra.steps.size() == 2, "two steps ran");
  bool same = ra.steps.size() == rb.steps.size();
  for (std::size_t i = 0; same && i < ra.steps.size(); ++i) same = ra.steps[i].total == rb.steps[i].total;
  k.expect(same, "step losses are identical");
  bool weights = true;
  for (std::size_t i = 0; i < a.refs().params.size(); ++i) {
    weights = weights && a.refs().params[i]->value.storage() == b.refs().params[i]->value.storage();
  }
  k.expect(weights, "weights are bit-identical after two steps");
  fs::remove_all(dir);
  return k.outcome("phantom corpus of " + std::to_string(files) + " files, folds, two training steps");
}

}  // namespace cade::acceptance
