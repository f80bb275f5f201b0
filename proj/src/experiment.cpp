#include "cade/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <tuple>

#include "cade/checkpoint.hpp"
#include "cade/json_reader.hpp"

namespace cade {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------ config

void EvaluationConfig::validate() const {
  if (!(match.threshold > 0 && match.threshold <= 1)) {
    throw ConfigError("evaluation.match_threshold", "must be in (0,1]");
  }
  if (bootstrap_samples < 1) throw ConfigError("evaluation.bootstrap_samples", "must be positive");
  if (!(ci_level > 0 && ci_level < 1)) throw ConfigError("evaluation.ci_level", "must be in (0,1)");
}

void to_json(json& j, const EvaluationConfig& c) {
  json predict;
  to_json(predict, c.predict);
  j = {{"metric", to_string(c.metric)},
       {"match_threshold", c.match.threshold},
       {"match_criterion", c.match.criterion == OverlapCriterion::IoU ? "iou" : "iot"},
       {"predict", predict},
       {"bootstrap_samples", c.bootstrap_samples},
       {"ci_level", c.ci_level}};
}

EvaluationConfig evaluation_config_from_json(const json& j, const std::string& prefix) {
  EvaluationConfig c;
  StrictObject obj(j, prefix);
  std::string metric = to_string(c.metric);
  obj.read("metric", metric);
  try {
    c.metric = metric_from_string(metric);
  } catch (const Error& e) {
    throw ConfigError(obj.path("metric"), e.what());
  }
  obj.read("match_threshold", c.match.threshold);
  std::string criterion = "iou";
  obj.read("match_criterion", criterion);
  if (criterion == "iou") {
    c.match.criterion = OverlapCriterion::IoU;
  } else if (criterion == "iot") {
    c.match.criterion = OverlapCriterion::IntersectionOverTruth;
  } else {
    throw ConfigError(obj.path("match_criterion"), "expected iou or iot");
  }
  if (const auto* p = obj.find("predict")) c.predict = predict_config_from_json(*p, obj.path("predict"));
  obj.read("bootstrap_samples", c.bootstrap_samples);
  obj.read("ci_level", c.ci_level);
  obj.finish();
  c.validate();
  return c;
}

void to_json(json& j, const ExperimentConfig& c) {
  json network, loss, train, phantom, preprocess, evaluation;
  to_json(network, c.network);
  to_json(loss, c.loss);
  to_json(train, c.train);
  to_json(phantom, c.phantom);
  to_json(preprocess, c.preprocess);
  to_json(evaluation, c.evaluation);
  j = {{"network", network},     {"loss", loss},
       {"train", train},         {"phantom", phantom},
       {"preprocess", preprocess}, {"evaluation", evaluation}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  StrictObject obj(j, "");
  if (const auto* v = obj.find("network")) c.network = network_config_from_json(*v, "network");
  if (const auto* v = obj.find("loss")) c.loss = loss_config_from_json(*v, "loss");
  if (const auto* v = obj.find("train")) c.train = train_config_from_json(*v, "train");
  if (const auto* v = obj.find("phantom")) c.phantom = phantom_config_from_json(*v, "phantom");
  if (const auto* v = obj.find("preprocess")) c.preprocess = preprocess_config_from_json(*v, "preprocess");
  if (const auto* v = obj.find("evaluation")) c.evaluation = evaluation_config_from_json(*v, "evaluation");
  obj.finish();
  c.network.finalize();
  return c;
}

// Sections without a standalone check are validated by their parsers, so
// a round trip through JSON checks everything with key paths.
void ExperimentConfig::validate() const {
  json j;
  to_json(j, *this);
  experiment_config_from_json(j);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return experiment_config_from_json(read_json_file(path));
}

void make_fresh_dir(const fs::path& dir) {
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    fail(ErrorKind::Io, dir.string() + " exists and is not an empty directory");
  }
  fs::create_directories(dir);
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

void write_run(const fs::path& dir, const RunRecord& run) {
  write_annotations(dir / "annotations.jsonl", run.truth);
  write_detections(dir / "detections.jsonl", run.detections);
}

// ------------------------------------------------------------ splits

CorpusSplit fold_split(const Corpus& corpus, int k, int fold, std::uint64_t seed) {
  if (k < 3) throw ConfigError("folds", "need at least 3 folds for train, validation and test");
  if (fold < 0 || fold >= k) throw ConfigError("fold", "must be in [0, folds)");
  const FoldAssignment f = make_folds(corpus.studies, k, seed);
  CorpusSplit s;
  s.test = f.studies_in(fold);
  s.val = f.studies_in((fold + 1) % k);
  s.train = f.studies_except({fold, (fold + 1) % k});
  return s;
}

CorpusSplit full_split(const Corpus& corpus) {
  CorpusSplit s;
  s.train.resize(corpus.studies.size());
  for (std::size_t i = 0; i < s.train.size(); ++i) s.train[i] = i;
  return s;
}

json split_to_json(const Corpus& corpus, const CorpusSplit& split) {
  auto ids = [&](const std::vector<std::size_t>& v) {
    json a = json::array();
    for (std::size_t i : v) a.push_back(corpus.studies.at(i).study_id);
    return a;
  };
  return {{"train", ids(split.train)}, {"val", ids(split.val)}, {"test", ids(split.test)}};
}

CorpusSplit split_from_json(const Corpus& corpus, const json& j) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.studies.size(); ++i) index[corpus.studies[i].study_id] = i;
  auto read = [&](const char* key) {
    std::vector<std::size_t> v;
    for (const auto& id : j.at(key)) {
      auto it = index.find(id.get<std::string>());
      require(it != index.end(), "study " + id.get<std::string>() + " is not in the corpus");
      v.push_back(it->second);
    }
    return v;
  };
  CorpusSplit s;
  s.train = read("train");
  s.val = read("val");
  s.test = read("test");
  return s;
}

// ------------------------------------------------------------ runs

std::unique_ptr<RetinaNet3d<float>> train_model(const Corpus& corpus, const CorpusSplit& split,
                                                const ExperimentConfig& config, std::ostream* log) {
  require(!split.train.empty(), "training split is empty");
  auto net = std::make_unique<RetinaNet3d<float>>(config.network, config.train.seed);
  const auto train = training_samples(corpus, split.train, config.train.include_benign);
  // Validation loss always sees every annotated lesion.
  const auto val = training_samples(corpus, split.val, true);
  FitHooks hooks;
  hooks.log = log;
  fit(*net, train, val, config.train, config.loss, hooks);
  return net;
}

RunRecord detect_studies(RetinaNet3d<float>& net, const Corpus& corpus, const std::vector<std::size_t>& studies,
                         const PredictConfig& config) {
  std::vector<StudyRecord> chosen;
  for (std::size_t i : studies) chosen.push_back(corpus.studies.at(i));
  RunRecord run;
  run.truth = annotations_of(chosen);
  if (!studies.empty()) run.detections = detect(net, training_samples(corpus, studies, true), config);
  return run;
}

std::pair<int, int> metric_hits(const RunRecord& run, Metric metric, const MatchConfig& config) {
  const MatchResult m = match_detections(run.detections, run.truth, config);
  int lesions = 0, hits = 0;
  for (std::size_t l = 0; l < run.truth.lesions.size(); ++l) {
    if (!metric_includes(metric, run.truth.lesions[l].category)) continue;
    ++lesions;
    hits += m.hit(l);
  }
  return {lesions, hits};
}

json to_json(const FoldReport& f) {
  return {{"fold", f.fold},
          {"test_studies", f.test_studies},
          {"lesions", f.lesions},
          {"hits", f.hits},
          {"normal_breasts", f.normal_breasts},
          {"cpm", f.cpm ? json(*f.cpm) : json(nullptr)}};
}

json to_json(const CrossvalReport& r) {
  json folds = json::array();
  int hits = 0;
  for (const auto& f : r.folds) {
    folds.push_back(to_json(f));
    hits += f.hits;
  }
  return {{"folds", folds},
          {"pooled", to_json(r.pooled)},
          {"fold_hits_total", hits},
          {"pooled_hits", r.pooled.hits}};
}

CrossvalReport crossval(const Corpus& corpus, int k, std::uint64_t seed, const ExperimentConfig& config,
                        const fs::path& out, std::ostream* progress) {
  make_fresh_dir(out);
  const Metric metric = config.evaluation.metric;
  const MatchConfig& match = config.evaluation.match;
  CrossvalReport report;
  RunRecord pooled;
  for (int i = 0; i < k; ++i) {
    const fs::path dir = out / ("fold_" + std::to_string(i));
    make_fresh_dir(dir);
    const CorpusSplit split = fold_split(corpus, k, i, seed);
    write_json_file(dir / "split.json", split_to_json(corpus, split));
    std::ofstream log(dir / "train_log.jsonl");
    auto net = train_model(corpus, split, config, &log);
    json meta = {{"fold", i}, {"folds", k}, {"split_seed", seed}, {"split", split_to_json(corpus, split)}};
    save_checkpoint(dir / "model.ckpt", *net, meta);
    const RunRecord run = detect_studies(*net, corpus, split.test, config.evaluation.predict);
    write_run(dir, run);

    FoldReport f;
    f.fold = i;
    for (std::size_t s : split.test) f.test_studies.push_back(corpus.studies[s].study_id);
    std::tie(f.lesions, f.hits) = metric_hits(run, metric, match);
    f.normal_breasts = match_detections(run.detections, run.truth, match).normal_breasts;
    if (f.lesions > 0 && f.normal_breasts > 0) f.cpm = cpm(froc(run.detections, run.truth, metric, match));
    write_json_file(dir / "report.json", to_json(f));
    if (progress) *progress << to_json(f).dump() << '\n';
    report.folds.push_back(f);

    for (const auto& b : run.truth.breasts) pooled.truth.add_breast(b.breast_id, b.study_id);
    pooled.truth.lesions.insert(pooled.truth.lesions.end(), run.truth.lesions.begin(), run.truth.lesions.end());
    pooled.detections.insert(pooled.detections.end(), run.detections.begin(), run.detections.end());
  }
  const fs::path pdir = out / "pooled";
  make_fresh_dir(pdir);
  write_run(pdir, pooled);
  report.pooled = froc(pooled.detections, pooled.truth, metric, match);
  write_json_file(pdir / "curve.json", to_json(report.pooled));
  write_curve_csv(pdir / "curve.csv", report.pooled);
  write_json_file(out / "report.json", to_json(report));
  return report;
}

}  // namespace cade
