#include "cade/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "cade/error.hpp"
#include "cade/json_reader.hpp"
#include "cade/preprocessing.hpp"
#include "cade/random.hpp"

namespace cade {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("train.learning_rate", "must be positive");
  if (!(plateau_factor > 0 && plateau_factor <= 1)) throw ConfigError("train.plateau_factor", "must be in (0,1]");
  if (plateau_patience < 1) throw ConfigError("train.plateau_patience", "must be at least 1");
  if (!(plateau_epsilon >= 0)) throw ConfigError("train.plateau_epsilon", "must be nonnegative");
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ConfigError("train.batch_size", "must be even (both breasts of a study share a batch)");
  }
  if (epochs < 1) throw ConfigError("train.epochs", "must be positive");
  if (max_steps < 0) throw ConfigError("train.max_steps", "must be nonnegative");
  if (!(match_iou > 0 && match_iou <= 1)) throw ConfigError("train.match_iou", "must be in (0,1]");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ConfigError("train.adam_beta1", "must be in [0,1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigError("train.adam_beta2", "must be in [0,1)");
  if (!(adam_epsilon > 0)) throw ConfigError("train.adam_epsilon", "must be positive");
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},   {"plateau_factor", c.plateau_factor},
       {"plateau_patience", c.plateau_patience}, {"plateau_epsilon", c.plateau_epsilon},
       {"batch_size", c.batch_size},         {"epochs", c.epochs},
       {"max_steps", c.max_steps},           {"include_benign", c.include_benign},
       {"seed", c.seed},                     {"match_iou", c.match_iou},
       {"adam_beta1", c.adam_beta1},         {"adam_beta2", c.adam_beta2},
       {"adam_epsilon", c.adam_epsilon}};
}

TrainConfig train_config_from_json(const json& j, const std::string& prefix) {
  TrainConfig c;
  StrictObject obj(j, prefix);
  obj.read("learning_rate", c.learning_rate);
  obj.read("plateau_factor", c.plateau_factor);
  obj.read("plateau_patience", c.plateau_patience);
  obj.read("plateau_epsilon", c.plateau_epsilon);
  obj.read("batch_size", c.batch_size);
  obj.read("epochs", c.epochs);
  obj.read("max_steps", c.max_steps);
  obj.read("include_benign", c.include_benign);
  obj.read("seed", c.seed);
  obj.read("match_iou", c.match_iou);
  obj.read("adam_beta1", c.adam_beta1);
  obj.read("adam_beta2", c.adam_beta2);
  obj.read("adam_epsilon", c.adam_epsilon);
  obj.finish();
  c.validate();
  return c;
}

// ------------------------------------------------------------ splits

std::vector<std::size_t> FoldAssignment::studies_in(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < study_fold.size(); ++i) {
    if (study_fold[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::studies_except(const std::vector<int>& excluded) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < study_fold.size(); ++i) {
    if (std::find(excluded.begin(), excluded.end(), study_fold[i]) == excluded.end()) out.push_back(i);
  }
  return out;
}

FoldAssignment make_folds(const std::vector<StudyRecord>& studies, int k, std::uint64_t seed) {
  std::map<std::string, std::array<int, kNumCategories>> counts;
  for (const auto& s : studies) {
    auto& c = counts[s.patient_id];
    for (const auto& b : s.breasts) {
      for (const auto& l : b.lesions) ++c[int(l.category)];
    }
  }
  if (k < 1) fail(ErrorKind::InvalidInput, "fold count must be positive");
  if (std::size_t(k) > counts.size()) {
    fail(ErrorKind::InvalidInput, "cannot make " + std::to_string(k) + " folds from " +
                                      std::to_string(counts.size()) + " patients");
  }
  std::vector<std::string> patients;
  for (const auto& [p, c] : counts) patients.push_back(p);
  std::mt19937_64 rng(derive_seed(seed, 0xF01D));
  std::shuffle(patients.begin(), patients.end(), rng);
  auto total = [&](const std::string& p) {
    const auto& c = counts.at(p);
    return std::accumulate(c.begin(), c.end(), 0);
  };
  std::stable_sort(patients.begin(), patients.end(),
                   [&](const std::string& a, const std::string& b) { return total(a) > total(b); });

  FoldAssignment out;
  out.k = k;
  std::vector<std::array<int, kNumCategories>> fold_counts(k);
  std::vector<int> fold_patients(k, 0);
  for (const auto& p : patients) {
    const auto& c = counts.at(p);
    int best = 0;
    long best_cost = -1;
    for (int f = 0; f < k; ++f) {
      long cost = 0;
      for (int cat = 0; cat < kNumCategories; ++cat) cost += long(fold_counts[f][cat]) * c[cat];
      if (best_cost < 0 || cost < best_cost || (cost == best_cost && fold_patients[f] < fold_patients[best])) {
        best = f;
        best_cost = cost;
      }
    }
    out.patient_fold[p] = best;
    ++fold_patients[best];
    for (int cat = 0; cat < kNumCategories; ++cat) fold_counts[best][cat] += c[cat];
  }
  for (const auto& s : studies) out.study_fold.push_back(out.patient_fold.at(s.patient_id));
  return out;
}

TemporalSplit make_temporal_split(const std::vector<StudyRecord>& studies, const std::string& cutoff) {
  const auto limit = parse_iso_date(cutoff);
  std::set<std::string> late;
  for (const auto& s : studies) {
    if (parse_iso_date(s.date) > limit) late.insert(s.patient_id);
  }
  TemporalSplit out;
  for (std::size_t i = 0; i < studies.size(); ++i) {
    (late.count(studies[i].patient_id) ? out.test : out.train).push_back(i);
  }
  if (out.train.empty()) out.warnings.push_back("temporal split: no study on or before " + cutoff);
  if (out.test.empty()) out.warnings.push_back("temporal split: no study after " + cutoff);
  return out;
}

// ------------------------------------------------------------ optimization

PlateauScheduler::PlateauScheduler(double lr, double factor, int patience, double epsilon)
    : lr_(lr), factor_(factor), patience_(patience), epsilon_(epsilon) {}

double PlateauScheduler::step(double loss) {
  if (!first_) {
    first_ = loss;
    best_ = loss;
    return lr_;
  }
  if (loss < best_ * (1 - epsilon_)) {
    best_ = loss;
    bad_ = 0;
  } else if (++bad_ >= patience_) {
    lr_ *= factor_;
    bad_ = 0;
  }
  return lr_;
}

void PlateauScheduler::restore(double lr, double best, int bad) {
  lr_ = lr;
  first_ = best;
  best_ = best;
  bad_ = bad;
}

Adam::Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(nn::ParamRefs<float>& refs, double lr) {
  if (m_.empty()) {
    for (auto* p : refs.params) {
      m_.emplace_back(p->value.size(), 0.0f);
      v_.emplace_back(p->value.size(), 0.0f);
    }
  }
  require(m_.size() == refs.params.size(), "adam: parameter set changed");
  ++t_;
  const float b1 = float(beta1_), b2 = float(beta2_);
  const double c1 = 1 - std::pow(beta1_, double(t_));
  const double c2 = 1 - std::pow(beta2_, double(t_));
  const float step = float(lr / c1);
  const float inv_c2 = float(1 / c2);
  const float eps = float(epsilon_);
  for (std::size_t i = 0; i < refs.params.size(); ++i) {
    float* w = refs.params[i]->value.data();
    const float* g = refs.params[i]->grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const std::size_t n = m_[i].size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (1 - b1) * g[k];
      v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
      w[k] -= step * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
    }
  }
}

// ------------------------------------------------------------ data

std::vector<TrainingSample> training_samples(const Corpus& corpus, const std::vector<std::size_t>& studies,
                                             bool include_benign) {
  std::vector<TrainingSample> out;
  for (std::size_t i : studies) {
    const StudyRecord& s = corpus.studies.at(i);
    for (const auto& b : s.breasts) {
      TrainingSample t;
      t.breast_id = b.breast_id;
      t.study_id = s.study_id;
      t.tensor = corpus.root / b.tensor;
      t.crop_origin = b.crop_origin;
      for (const auto& l : b.lesions) {
        if (!include_benign && is_benign(l.category)) continue;
        t.boxes.push_back(to_tensor(l.box, b.crop_origin));
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t samples, int batch_size, std::uint64_t seed, int epoch) {
  if (samples % 2 != 0) fail(ErrorKind::InvalidInput, "samples must come in breast pairs");
  std::vector<std::size_t> pairs(samples / 2);
  std::iota(pairs.begin(), pairs.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, std::uint64_t(epoch)));
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const std::size_t per = std::size_t(batch_size / 2);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < pairs.size(); i += per) {
    std::vector<std::size_t> batch;
    for (std::size_t j = i; j < std::min(pairs.size(), i + per); ++j) {
      batch.push_back(2 * pairs[j]);
      batch.push_back(2 * pairs[j] + 1);
    }
    out.push_back(std::move(batch));
  }
  return out;
}

Tensor<float> load_batch(const std::vector<TrainingSample>& samples, const std::vector<std::size_t>& which) {
  require(!which.empty(), "load_batch: empty batch");
  Tensor<float> out;
  std::array<int, 4> shape{};
  for (std::size_t n = 0; n < which.size(); ++n) {
    const BreastTensor t = read_breast_tensor(samples.at(which[n]).tensor);
    if (n == 0) {
      shape = t.shape;
      out = Tensor<float>({int(which.size()), shape[0], shape[1], shape[2], shape[3]});
    } else if (t.shape != shape) {
      fail(ErrorKind::InvalidInput, "breast tensors in one batch differ in shape");
    }
    if (!std::all_of(t.data.begin(), t.data.end(), [](float v) { return std::isfinite(v); }))
      fail(ErrorKind::InvalidInput, "non-finite value in " + samples.at(which[n]).tensor.string());
    std::copy(t.data.begin(), t.data.end(), out.data() + n * out.stride0());
  }
  return out;
}

// ------------------------------------------------------------ loop

json to_json(const StepLog& s) {
  return {{"step", s.step}, {"focal", s.focal}, {"regression", s.regression}, {"total", s.total}, {"lr", s.lr}};
}

json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"val_loss", e.val_loss ? json(*e.val_loss) : json(nullptr)},
          {"lr", e.lr}};
}

namespace {

class AnchorCache {
 public:
  const std::vector<BoundingBox3D>& get(RetinaNet3d<float>& net, const Shape3& input) {
    if (!anchors_.empty() && input == shape_) return anchors_;
    shape_ = input;
    anchors_ = generate_all_anchors(net.level_shapes(input), net.config().anchors);
    return anchors_;
  }

 private:
  Shape3 shape_{};
  std::vector<BoundingBox3D> anchors_;
};

std::vector<std::vector<AnchorAssignment>> assign(const std::vector<BoundingBox3D>& anchors,
                                                  const std::vector<TrainingSample>& samples,
                                                  const std::vector<std::size_t>& which, double iou) {
  std::vector<std::vector<AnchorAssignment>> out;
  for (std::size_t i : which) out.push_back(match_anchors(anchors, samples[i].boxes, iou));
  return out;
}

Shape3 input_shape(const Tensor<float>& x) { return {x.dim(2), x.dim(3), x.dim(4)}; }

}  // namespace

double evaluate_loss(RetinaNet3d<float>& net, const std::vector<TrainingSample>& samples, const TrainConfig& cfg,
                     const LossConfig& loss) {
  if (samples.empty()) fail(ErrorKind::InvalidInput, "evaluate_loss: no samples");
  AnchorCache cache;
  double sum = 0;
  int batches = 0;
  const std::size_t per = std::size_t(cfg.batch_size);
  for (std::size_t i = 0; i < samples.size(); i += per) {
    std::vector<std::size_t> which;
    for (std::size_t j = i; j < std::min(samples.size(), i + per); ++j) which.push_back(j);
    const Tensor<float> x = load_batch(samples, which);
    const auto out = net.forward(x, false);
    const auto targets = assign(cache.get(net, input_shape(x)), samples, which, cfg.match_iou);
    sum += total_loss(out, targets, loss).total;
    ++batches;
  }
  return sum / batches;
}

FitResult fit(RetinaNet3d<float>& net, const std::vector<TrainingSample>& train, const std::vector<TrainingSample>& val,
              const TrainConfig& cfg, const LossConfig& loss, const FitHooks& hooks) {
  cfg.validate();
  loss.validate();
  if (train.empty()) fail(ErrorKind::InvalidInput, "fit: empty training set");
  PlateauScheduler sched(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_epsilon);
  Adam adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  AnchorCache cache;
  FitResult result;
  long long step = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    const double lr = sched.lr();
    double sum = 0;
    int batches = 0;
    for (const auto& which : make_batches(train.size(), cfg.batch_size, cfg.seed, epoch)) {
      const Tensor<float> x = load_batch(train, which);
      net.zero_grad();
      const auto out = net.forward(x, true);
      const auto targets = assign(cache.get(net, input_shape(x)), train, which, cfg.match_iou);
      DetectorOutput<float> grad;
      const LossBreakdown lb = total_loss(out, targets, loss, &grad);
      if (!std::isfinite(lb.total)) {
        fail(ErrorKind::Divergence, "non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                        std::to_string(step + 1) + " (focal " + std::to_string(lb.focal) +
                                        ", regression " + std::to_string(lb.regression) + ", lr " +
                                        std::to_string(lr) + ")");
      }
      net.backward(grad);
      adam.step(net.refs(), lr);
      ++step;
      const StepLog sl{step, lb.focal, lb.regression, lb.total, lr};
      result.steps.push_back(sl);
      if (hooks.log) *hooks.log << to_json(sl).dump() << "\n";
      sum += lb.total;
      ++batches;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    EpochLog el;
    el.epoch = epoch;
    el.train_loss = sum / batches;
    el.lr = lr;
    if (!val.empty()) el.val_loss = evaluate_loss(net, val, cfg, loss);
    sched.step(el.train_loss);
    result.epochs.push_back(el);
    if (hooks.log) *hooks.log << to_json(el).dump() << std::endl;
    if (hooks.on_epoch) hooks.on_epoch(el);
  }
  net.zero_grad();
  result.final_lr = sched.lr();
  return result;
}

std::vector<Detection> detect(RetinaNet3d<float>& net, const std::vector<TrainingSample>& samples,
                              const PredictConfig& config, int batch_size) {
  std::vector<Detection> out;
  const std::size_t per = std::size_t(std::max(1, batch_size));
  for (std::size_t i = 0; i < samples.size(); i += per) {
    std::vector<std::size_t> which;
    std::vector<BreastPlacement> placements;
    for (std::size_t j = i; j < std::min(samples.size(), i + per); ++j) {
      which.push_back(j);
      placements.push_back({samples[j].breast_id, samples[j].crop_origin});
    }
    const Tensor<float> x = load_batch(samples, which);
    for (auto& dets : predict(net, x, placements, config)) {
      out.insert(out.end(), std::make_move_iterator(dets.begin()), std::make_move_iterator(dets.end()));
    }
  }
  return out;
}

}  // namespace cade
