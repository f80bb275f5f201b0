// cade: phantom generation, preprocessing, training, detection and
// evaluation from one entry point.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage,
// 3 missing input file. Failures print one JSON object on stderr.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cade/checkpoint.hpp"
#include "cade/error.hpp"
#include "cade/evaluation.hpp"
#include "cade/experiment.hpp"
#include "cade/phantom.hpp"
#include "cade/preprocessing.hpp"
#include "cade/training.hpp"
#include "cade/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cade;

namespace {

// Flags shared by the commands that build an ExperimentConfig. Unset flags
// leave the file (or default) value alone.
struct ConfigFlags {
  std::string file;
  std::optional<int> epochs, max_steps, batch_size, crop_size;
  std::optional<double> lr;
  bool no_benign = false;
  std::optional<std::string> metric;
  std::optional<double> match_threshold;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", file, "Experiment config (JSON)");
    cmd->add_option("--epochs", epochs, "Override train.epochs");
    cmd->add_option("--max-steps", max_steps, "Override train.max_steps (0: no limit)");
    cmd->add_option("--batch-size", batch_size, "Override train.batch_size (breasts, even)");
    cmd->add_option("--lr", lr, "Override train.learning_rate");
    cmd->add_flag("--no-benign", no_benign, "Drop benign lesions from the training targets");
    cmd->add_option("--crop-size", crop_size, "Override preprocess.crop_size");
    cmd->add_option("--metric", metric, "detection_rate, sensitivity or benign_detection_rate");
    cmd->add_option("--match-threshold", match_threshold, "Override evaluation.match_threshold");
  }

  ExperimentConfig resolve(std::optional<std::uint64_t> seed) const {
    ExperimentConfig c = file.empty() ? ExperimentConfig{} : load_experiment_config(file);
    if (epochs) c.train.epochs = *epochs;
    if (max_steps) c.train.max_steps = *max_steps;
    if (batch_size) c.train.batch_size = *batch_size;
    if (lr) c.train.learning_rate = *lr;
    if (no_benign) c.train.include_benign = false;
    if (crop_size) c.preprocess.crop.crop_size = *crop_size;
    if (metric) {
      try {
        c.evaluation.metric = metric_from_string(*metric);
      } catch (const Error& e) {
        throw ConfigError("evaluation.metric", e.what());
      }
    }
    if (match_threshold) c.evaluation.match.threshold = *match_threshold;
    if (seed) c.train.seed = *seed;
    c.validate();
    return c;
  }
};

json resolved(const ExperimentConfig& c) {
  json j;
  to_json(j, c);
  return j;
}

void note(const std::string& what) { std::cerr << what << std::endl; }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ------------------------------------------------------------ commands

struct PhantomArgs {
  ConfigFlags cfg;
  int n = 0;
  std::uint64_t seed = 0;
  std::string out;
  int workers = 1;
  bool no_series = false;
};

int run_phantom(const PhantomArgs& a) {
  const ExperimentConfig c = a.cfg.resolve(std::nullopt);
  Stopwatch sw;
  CorpusOptions opt;
  opt.preprocess = c.preprocess;
  opt.workers = a.workers;
  opt.keep_series = !a.no_series;
  const Corpus corpus = generate_corpus(a.out, a.n, c.phantom, a.seed, opt);
  json conf = resolved(c);
  conf["command"] = {{"name", "phantom generate"}, {"n", a.n}, {"seed", a.seed}};
  write_json_file(fs::path(a.out) / "config.resolved.json", conf);
  std::ofstream(fs::path(a.out) / "log.jsonl")
      << json{{"event", "generated"}, {"studies", corpus.studies.size()}}.dump() << '\n';
  note("generated " + std::to_string(corpus.studies.size()) + " studies in " + std::to_string(sw.seconds()) + " s");
  return 0;
}

struct PreprocessArgs {
  ConfigFlags cfg;
  std::string in, roi, out, id;
};

int run_preprocess(const PreprocessArgs& a) {
  const ExperimentConfig c = a.cfg.resolve(std::nullopt);
  const DynamicSeries series = read_series(a.in);
  json roi = read_json_file(a.roi);
  if (roi.contains("aorta_roi")) roi = roi["aorta_roi"];
  if (!roi.contains("min") || !roi.contains("max")) throw ConfigError("aorta_roi", "expected min and max");
  const BoundingBox3D box = box_from_json(roi["min"], roi["max"]);
  make_fresh_dir(a.out);
  const PreprocessResult r = preprocess_series(series, box, c.preprocess);
  const std::string id = a.id.empty() ? fs::path(a.in).parent_path().filename().string() : a.id;
  json breasts = json::array();
  for (const auto& t : r.breasts) {
    const std::string bid = make_breast_id(id.empty() ? "study" : id, t.side);
    const fs::path file = write_breast_tensor(a.out, bid, t);
    breasts.push_back({{"breast_id", bid},
                       {"side", to_string(t.side)},
                       {"crop_origin", {t.crop_origin.z, t.crop_origin.y, t.crop_origin.x}},
                       {"shape", t.shape},
                       {"tensor", file.filename().string()}});
  }
  json shifts = json::array();
  for (const auto& s : r.shifts) shifts.push_back(s);
  write_json_file(fs::path(a.out) / "crop.json",
                  {{"reference_index", r.reference_index}, {"shifts", shifts}, {"breasts", breasts}});
  json conf = resolved(c);
  conf["command"] = {{"name", "preprocess"}, {"in", a.in}, {"aorta_roi", a.roi}};
  write_json_file(fs::path(a.out) / "config.resolved.json", conf);
  std::ofstream(fs::path(a.out) / "log.jsonl")
      << json{{"event", "preprocessed"}, {"reference_index", r.reference_index}}.dump() << '\n';
  return 0;
}

struct TrainArgs {
  ConfigFlags cfg;
  std::string corpus, out;
  std::uint64_t seed = 0;
  std::optional<int> fold;
  int folds = 10;
};

int run_train(const TrainArgs& a) {
  const ExperimentConfig c = a.cfg.resolve(a.seed);
  const Corpus corpus = read_corpus(a.corpus);
  const CorpusSplit split = a.fold ? fold_split(corpus, a.folds, *a.fold, a.seed) : full_split(corpus);
  make_fresh_dir(a.out);
  const fs::path out(a.out);
  json conf = resolved(c);
  conf["command"] = {{"name", "train"}, {"corpus", a.corpus}, {"seed", a.seed}, {"folds", a.folds},
                     {"fold", a.fold ? json(*a.fold) : json(nullptr)}};
  write_json_file(out / "config.resolved.json", conf);
  write_json_file(out / "split.json", split_to_json(corpus, split));
  Stopwatch sw;
  std::ofstream log(out / "train_log.jsonl");
  auto net = train_model(corpus, split, c, &log);
  json meta = {{"split", split_to_json(corpus, split)}, {"config", conf}};
  save_checkpoint(out / "model.ckpt", *net, meta);
  note("trained in " + std::to_string(sw.seconds()) + " s");
  return 0;
}

struct DetectArgs {
  ConfigFlags cfg;
  std::string checkpoint, corpus, out, subset = "test";
  std::optional<double> score_threshold;
};

int run_detect(const DetectArgs& a) {
  ExperimentConfig c = a.cfg.resolve(std::nullopt);
  if (a.score_threshold) c.evaluation.predict.score_threshold = *a.score_threshold;
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  const Corpus corpus = read_corpus(a.corpus);
  std::vector<std::size_t> studies;
  if (a.subset == "all" || !ck.metadata.contains("split")) {
    studies = full_split(corpus).train;
  } else {
    const CorpusSplit s = split_from_json(corpus, ck.metadata["split"]);
    studies = a.subset == "train" ? s.train : a.subset == "val" ? s.val : s.test;
  }
  make_fresh_dir(a.out);
  const RunRecord run = detect_studies(*ck.net, corpus, studies, c.evaluation.predict);
  write_run(a.out, run);
  json predict;
  to_json(predict, c.evaluation.predict);
  write_json_file(fs::path(a.out) / "config.resolved.json",
                  {{"command", "detect"},
                   {"checkpoint", a.checkpoint},
                   {"corpus", a.corpus},
                   {"subset", a.subset},
                   {"predict", predict}});
  std::ofstream(fs::path(a.out) / "log.jsonl")
      << json{{"event", "detected"}, {"studies", studies.size()}, {"detections", run.detections.size()}}.dump()
      << '\n';
  return 0;
}

struct EvaluateArgs {
  ConfigFlags cfg;
  std::string dets, annotations, run, out;
  int ci_samples = 0;
  std::uint64_t seed = 0;
};

int run_evaluate(const EvaluateArgs& a) {
  const ExperimentConfig c = a.cfg.resolve(std::nullopt);
  RunRecord run;
  if (!a.run.empty()) {
    run = load_run(a.run);
  } else {
    if (a.dets.empty() || a.annotations.empty()) throw ConfigError("dets", "need --run or --dets and --annotations");
    run.truth = read_annotations(a.annotations);
    run.detections = read_detections(a.dets);
  }
  const fs::path out(a.out);
  fs::path csv = out;
  csv.replace_extension(".csv");
  for (const auto& p : {out, csv}) {
    if (fs::exists(p)) fail(ErrorKind::Io, "refusing to overwrite " + p.string());
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const EvaluationConfig& e = c.evaluation;
  const FrocCurve curve = froc(run.detections, run.truth, e.metric, e.match);
  json j = to_json(curve);
  std::vector<std::pair<double, double>> band;
  if (a.ci_samples > 0) {
    band = confidence_band(run, curve, a.ci_samples, e.ci_level, a.seed, e.match);
    json ci = json::array();
    for (const auto& [lo, hi] : band) ci.push_back({lo, hi});
    j["ci"] = {{"level", e.ci_level}, {"samples", a.ci_samples}, {"seed", a.seed}, {"bounds", ci}};
  }
  json ev;
  to_json(ev, e);
  j["config"] = {{"evaluation", ev}, {"dets", a.dets}, {"annotations", a.annotations}, {"run", a.run}};
  write_json_file(out, j);
  write_curve_csv(csv, curve, band);
  std::cout << json{{"metric", to_string(e.metric)}, {"cpm", cpm(curve)}, {"hits", curve.hits},
                    {"lesions", curve.lesions}}
                   .dump()
            << std::endl;
  return 0;
}

struct CompareArgs {
  ConfigFlags cfg;
  std::string run_a, run_b, out;
  std::optional<int> samples;
  std::uint64_t seed = 0;
};

int run_compare(const CompareArgs& a) {
  const ExperimentConfig c = a.cfg.resolve(std::nullopt);
  const EvaluationConfig& e = c.evaluation;
  const int samples = a.samples.value_or(e.bootstrap_samples);
  if (samples < 1) throw ConfigError("samples", "must be positive");
  if (!a.out.empty() && fs::exists(a.out)) fail(ErrorKind::Io, "refusing to overwrite " + a.out);
  const Comparison r = bootstrap_compare(load_run(a.run_a), load_run(a.run_b), e.metric, samples, a.seed, e.match);
  const json j = {{"cpm_a", r.cpm_a}, {"cpm_b", r.cpm_b}, {"p", r.p},
                  {"samples", r.samples}, {"seed", a.seed}, {"metric", to_string(e.metric)}};
  if (!a.out.empty()) write_json_file(a.out, j);
  std::cout << j.dump() << std::endl;
  return 0;
}

struct CrossvalArgs {
  ConfigFlags cfg;
  std::string corpus, out;
  int folds = 10;
  std::uint64_t seed = 0;
};

int run_crossval(const CrossvalArgs& a) {
  const ExperimentConfig c = a.cfg.resolve(a.seed);
  const Corpus corpus = read_corpus(a.corpus);
  make_fresh_dir(a.out);
  json conf = resolved(c);
  conf["command"] = {{"name", "crossval"}, {"corpus", a.corpus}, {"folds", a.folds}, {"seed", a.seed}};
  write_json_file(fs::path(a.out) / "config.resolved.json", conf);
  Stopwatch sw;
  std::ofstream log(fs::path(a.out) / "log.jsonl");
  const CrossvalReport r = crossval(corpus, a.folds, a.seed, c, fs::path(a.out) / "folds", &log);
  const json j = to_json(r);
  write_json_file(fs::path(a.out) / "report.json", j);
  std::cout << json{{"cpm", cpm(r.pooled)}, {"pooled_hits", j["pooled_hits"]},
                    {"fold_hits_total", j["fold_hits_total"]}}
                   .dump()
            << std::endl;
  note("cross-validation took " + std::to_string(sw.seconds()) + " s");
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
      return 2;
    case ErrorKind::MissingFile:
      return 3;
    default:
      return 1;
  }
}

void report(const std::string& kind, const std::string& message, const std::string& key_path = {}) {
  json j = {{"error", kind}, {"message", message}};
  if (!key_path.empty()) j["key_path"] = key_path;
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lesion detection in ultrafast DCE-MRI: phantoms, preprocessing, training and FROC evaluation"};
  app.require_subcommand(1);

  PhantomArgs phantom;
  auto* ph = app.add_subcommand("phantom", "Synthetic phantom corpora");
  ph->require_subcommand(1);
  auto* gen = ph->add_subcommand("generate", "Generate and preprocess a phantom corpus");
  gen->add_option("--n", phantom.n, "Number of studies")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", phantom.seed, "Generator seed")->required();
  gen->add_option("--out", phantom.out, "Output directory (must not exist or be empty)")->required();
  gen->add_option("--workers", phantom.workers, "Worker threads (capped by CADE_NUM_WORKERS)");
  gen->add_flag("--no-series", phantom.no_series, "Keep only the breast tensors, not the raw series");
  phantom.cfg.add(gen);

  PreprocessArgs pre;
  auto* pp = app.add_subcommand("preprocess", "Preprocess one series into two breast tensors");
  pp->add_option("--in", pre.in, "Series file (.f32 with JSON sidecar)")->required();
  pp->add_option("--aorta-roi", pre.roi, "JSON with min/max, or a phantom truth.json")->required();
  pp->add_option("--out", pre.out, "Output directory (must not exist or be empty)")->required();
  pp->add_option("--id", pre.id, "Study id for the breast ids (default: input directory name)");
  pre.cfg.add(pp);

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train a detector on a corpus");
  tr->add_option("--corpus", train.corpus, "Corpus directory")->required();
  tr->add_option("--seed", train.seed, "Seed for weights, batches and folds")->required();
  tr->add_option("--out", train.out, "Output directory (must not exist or be empty)")->required();
  tr->add_option("--fold", train.fold, "Test fold; the next fold validates, the rest train (default: train on all)");
  tr->add_option("--folds", train.folds, "Number of folds");
  train.cfg.add(tr);

  DetectArgs det;
  auto* dt = app.add_subcommand("detect", "Run a trained detector over corpus studies");
  dt->add_option("--checkpoint", det.checkpoint, "Model checkpoint")->required();
  dt->add_option("--corpus", det.corpus, "Corpus directory")->required();
  dt->add_option("--out", det.out, "Output directory (must not exist or be empty)")->required();
  dt->add_option("--subset", det.subset, "test, val, train or all (split stored in the checkpoint)")
      ->check(CLI::IsMember({"test", "val", "train", "all"}));
  dt->add_option("--score-threshold", det.score_threshold, "Override evaluation.predict.score_threshold");
  det.cfg.add(dt);

  EvaluateArgs ev;
  auto* ec = app.add_subcommand("evaluate", "FROC curve and CPM of a run");
  ec->add_option("--dets", ev.dets, "Detections (JSON lines)");
  ec->add_option("--annotations", ev.annotations, "Annotations (JSON lines)");
  ec->add_option("--run", ev.run, "Run directory with detections.jsonl and annotations.jsonl");
  ec->add_option("--out", ev.out, "Curve JSON; a CSV is written next to it")->required();
  ec->add_option("--ci-samples", ev.ci_samples, "Bootstrap resamples for a confidence band (0: none)");
  ec->add_option("--seed", ev.seed, "Bootstrap seed");
  ev.cfg.add(ec);

  CompareArgs cmp;
  auto* cp = app.add_subcommand("compare", "Bootstrap comparison of two runs on the same cases");
  cp->add_option("--run-a", cmp.run_a, "First run directory")->required();
  cp->add_option("--run-b", cmp.run_b, "Second run directory")->required();
  cp->add_option("--samples", cmp.samples, "Resamples (default: evaluation.bootstrap_samples)");
  cp->add_option("--seed", cmp.seed, "Bootstrap seed")->required();
  cp->add_option("--out", cmp.out, "Also write the result to this file");
  cmp.cfg.add(cp);

  CrossvalArgs cv;
  auto* xv = app.add_subcommand("crossval", "Patient-level k-fold cross-testing with a pooled FROC");
  xv->add_option("--corpus", cv.corpus, "Corpus directory")->required();
  xv->add_option("--folds", cv.folds, "Number of folds (at least 3)");
  xv->add_option("--seed", cv.seed, "Seed for folds, weights and batches")->required();
  xv->add_option("--out", cv.out, "Output directory (must not exist or be empty)")->required();
  cv.cfg.add(xv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report("usage", e.what());
    return 2;
  }

  try {
    if (*gen) return run_phantom(phantom);
    if (*pp) return run_preprocess(pre);
    if (*tr) return run_train(train);
    if (*dt) return run_detect(det);
    if (*ec) return run_evaluate(ev);
    if (*cp) return run_compare(cmp);
    if (*xv) return run_crossval(cv);
  } catch (const ConfigError& e) {
    report(to_string(e.kind()), e.what(), e.key_path());
    return 2;
  } catch (const Error& e) {
    report(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report("internal", e.what());
    return 1;
  }
  return 1;
}
