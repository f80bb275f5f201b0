#pragma once

// Patient-level folds, the temporal split, the plateau learning-rate rule,
// Adam and the training loop over preprocessed breast tensors.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cade/detector.hpp"
#include "cade/losses.hpp"
#include "cade/study.hpp"

namespace cade {

struct TrainConfig {
  double learning_rate = 1e-4;
  double plateau_factor = 0.1;
  int plateau_patience = 3;
  double plateau_epsilon = 1e-4;  // relative improvement floor
  int batch_size = 8;             // breasts; both breasts of a study share a batch
  int epochs = 45;
  int max_steps = 0;              // stop after this many optimizer steps (0: no limit)
  bool include_benign = true;
  std::uint64_t seed = 0;
  double match_iou = kDefaultMatchIou;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& prefix = "train");

// ------------------------------------------------------------ splits

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> patient_fold;
  std::vector<int> study_fold;  // per input study

  /// Indices of the studies in `fold`.
  std::vector<std::size_t> studies_in(int fold) const;
  /// Indices of the studies in none of `excluded`.
  std::vector<std::size_t> studies_except(const std::vector<int>& excluded) const;
};

/// Whole patients go to one fold. Patients are visited multi-lesion first
/// (seeded shuffle within equal lesion counts); each joins the fold whose
/// category counts it increases least, ties going to the fold with fewest
/// patients, then the lowest index. k > patients raises InvalidInput.
FoldAssignment make_folds(const std::vector<StudyRecord>& studies, int k, std::uint64_t seed);

struct TemporalSplit {
  std::vector<std::size_t> train;  // dated on or before the cutoff
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;
};

/// Patients with any study after `cutoff` (YYYY-MM-DD) go entirely to test.
TemporalSplit make_temporal_split(const std::vector<StudyRecord>& studies, const std::string& cutoff);

// ------------------------------------------------------------ optimization

/// Multiplies the rate by `factor` once the epoch loss has failed to beat
/// the best value by more than `epsilon` (relative) for `patience`
/// consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience, double epsilon);

  /// Records an epoch loss and returns the rate for the next epoch.
  double step(double loss);
  double lr() const { return lr_; }
  int bad_epochs() const { return bad_; }
  double best() const { return best_; }
  void restore(double lr, double best, int bad);

 private:
  double lr_;
  double factor_;
  int patience_;
  double epsilon_;
  std::optional<double> first_;
  double best_ = 0;
  int bad_ = 0;
};

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void step(nn::ParamRefs<float>& refs, double lr);
  long long steps() const { return t_; }

 private:
  double beta1_, beta2_, epsilon_;
  long long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// ------------------------------------------------------------ data

/// One preprocessed breast with its targets in tensor coordinates.
struct TrainingSample {
  std::string breast_id;
  std::string study_id;
  std::filesystem::path tensor;
  Point3 crop_origin;
  std::vector<BoundingBox3D> boxes;
};

/// Breasts of the given studies, right then left per study. Benign lesions
/// are dropped when `include_benign` is false, so breasts whose only
/// lesions are benign become lesion-free.
std::vector<TrainingSample> training_samples(const Corpus& corpus, const std::vector<std::size_t>& studies,
                                             bool include_benign);

/// Batches of whole studies (pairs of consecutive samples), shuffled with a
/// seed derived from (seed, epoch).
std::vector<std::vector<std::size_t>> make_batches(std::size_t samples, int batch_size, std::uint64_t seed, int epoch);

/// Stacks the samples' tensors into (N, C, D, H, W).
Tensor<float> load_batch(const std::vector<TrainingSample>& samples, const std::vector<std::size_t>& which);

// ------------------------------------------------------------ loop

struct StepLog {
  long long step = 0;
  double focal = 0;
  double regression = 0;
  double total = 0;
  double lr = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  std::optional<double> val_loss;
  double lr = 0;
};

nlohmann::json to_json(const StepLog& s);
nlohmann::json to_json(const EpochLog& e);

struct FitHooks {
  std::ostream* log = nullptr;  // JSON lines for steps and epochs
  std::function<void(const EpochLog&)> on_epoch;
};

struct FitResult {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  double final_lr = 0;
};

/// Trains `net` in place. A non-finite loss raises a Divergence error.
FitResult fit(RetinaNet3d<float>& net, const std::vector<TrainingSample>& train,
              const std::vector<TrainingSample>& val, const TrainConfig& config, const LossConfig& loss,
              const FitHooks& hooks = {});

/// Mean loss over `samples` in inference mode.
double evaluate_loss(RetinaNet3d<float>& net, const std::vector<TrainingSample>& samples, const TrainConfig& config,
                     const LossConfig& loss);

/// Detections in original volume coordinates for every sample.
std::vector<Detection> detect(RetinaNet3d<float>& net, const std::vector<TrainingSample>& samples,
                              const PredictConfig& config, int batch_size = 2);

}  // namespace cade
