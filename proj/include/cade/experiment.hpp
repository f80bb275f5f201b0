#pragma once

// Experiment configuration and run directories: the resolved config
// document, corpus splits, per-fold training and detection, and the
// pooled cross-validation report.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cade/detector.hpp"
#include "cade/evaluation.hpp"
#include "cade/losses.hpp"
#include "cade/phantom.hpp"
#include "cade/preprocessing.hpp"
#include "cade/training.hpp"

namespace cade {

struct EvaluationConfig {
  Metric metric = Metric::Sensitivity;
  MatchConfig match;
  PredictConfig predict;
  int bootstrap_samples = 1000;
  double ci_level = 0.95;

  void validate() const;
};

void to_json(nlohmann::json& j, const EvaluationConfig& c);
EvaluationConfig evaluation_config_from_json(const nlohmann::json& j, const std::string& prefix = "evaluation");

/// Every section is optional in the file; missing keys keep their defaults.
struct ExperimentConfig {
  NetworkConfig network;
  LossConfig loss;
  TrainConfig train;
  PhantomConfig phantom;
  PreprocessConfig preprocess;
  EvaluationConfig evaluation;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
/// Missing file raises MissingFile; malformed JSON raises ConfigError.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Creates `dir`. An existing non-empty directory raises Io.
void make_fresh_dir(const std::filesystem::path& dir);
/// Indented JSON plus a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Writes `annotations.jsonl` and `detections.jsonl`, the layout load_run reads.
void write_run(const std::filesystem::path& dir, const RunRecord& run);

// ------------------------------------------------------------ splits

struct CorpusSplit {
  std::vector<std::size_t> train, val, test;  // study indices
};

/// Fold `fold` of `k` is the test set, fold (fold + 1) % k the validation
/// set and the rest the training set.
CorpusSplit fold_split(const Corpus& corpus, int k, int fold, std::uint64_t seed);
/// All studies train; nothing is held out.
CorpusSplit full_split(const Corpus& corpus);

nlohmann::json split_to_json(const Corpus& corpus, const CorpusSplit& split);
/// Study ids from split_to_json back to indices; unknown ids raise InvalidInput.
CorpusSplit split_from_json(const Corpus& corpus, const nlohmann::json& j);

// ------------------------------------------------------------ runs

/// Trains a fresh network on `split.train` (validation loss on `split.val`)
/// with weights initialized from `config.train.seed`.
std::unique_ptr<RetinaNet3d<float>> train_model(const Corpus& corpus, const CorpusSplit& split,
                                                const ExperimentConfig& config, std::ostream* log = nullptr);

/// Detections of the given studies with their ground truth.
RunRecord detect_studies(RetinaNet3d<float>& net, const Corpus& corpus, const std::vector<std::size_t>& studies,
                         const PredictConfig& config);

struct FoldReport {
  int fold = 0;
  std::vector<std::string> test_studies;
  int lesions = 0;  // counted by the metric
  int hits = 0;     // matched at the lowest score threshold
  int normal_breasts = 0;
  std::optional<double> cpm;  // absent when the fold has no normal breast or lesion
};

struct CrossvalReport {
  std::vector<FoldReport> folds;
  FrocCurve pooled;
};

nlohmann::json to_json(const FoldReport& f);
nlohmann::json to_json(const CrossvalReport& r);

/// Lesions counted by `metric` and the hits among them.
std::pair<int, int> metric_hits(const RunRecord& run, Metric metric, const MatchConfig& config);

/// Trains and tests every fold in sequence under `out/fold_<i>` and writes
/// the pooled run and curve under `out/pooled`. `out` must be fresh.
CrossvalReport crossval(const Corpus& corpus, int k, std::uint64_t seed, const ExperimentConfig& config,
                        const std::filesystem::path& out, std::ostream* progress = nullptr);

}  // namespace cade
