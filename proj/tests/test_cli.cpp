#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string err;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome run_cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" CADE_CLI "' " + args + " >stdout.txt 2>stderr.txt";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(cwd / "stdout.txt");
  o.err = slurp(cwd / "stderr.txt");
  fs::remove(cwd / "stdout.txt");
  fs::remove(cwd / "stderr.txt");
  return o;
}

const std::string kSmoke = "--config '" CADE_CONFIG_DIR "/smoke.json'";

bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    const fs::path rel = fs::relative(e.path(), a);
    if (e.is_regular_file()) {
      ++files;
      if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return false;
    }
  }
  std::size_t other = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
  return files == other && files > 0;
}

}  // namespace

TEST_CASE("phantom generate is byte-reproducible and never overwrites") {
  const auto dir = cade::test::temp_dir("cli_phantom");
  REQUIRE(run_cli(dir, "phantom generate --n 4 --seed 1 --out a " + kSmoke).code == 0);
  REQUIRE(run_cli(dir, "phantom generate --n 4 --seed 1 --out b " + kSmoke).code == 0);
  CHECK(same_tree(dir / "a", dir / "b"));
  CHECK(fs::exists(dir / "a" / "config.resolved.json"));
  CHECK(fs::exists(dir / "a" / "log.jsonl"));
  const Outcome again = run_cli(dir, "phantom generate --n 4 --seed 1 --out a " + kSmoke);
  CHECK(again.code != 0);
  CHECK(json::parse(again.err).contains("error"));
  fs::remove_all(dir);
}

TEST_CASE("errors: usage and config exit 2 with a key path, missing files exit 3") {
  const auto dir = cade::test::temp_dir("cli_errors");
  Outcome o = run_cli(dir, "phantom generate --n 4 --out x");
  CHECK(o.code == 2);
  CHECK(json::parse(o.err)["error"] == "usage");

  std::ofstream(dir / "bad.json") << R"({"train": {"learning_rate": 0.1, "lr": 1}})";
  o = run_cli(dir, "train --corpus c --seed 1 --out t --config bad.json");
  CHECK(o.code == 2);
  CHECK(o.err.find('\n') == o.err.size() - 1);
  CHECK(json::parse(o.err)["key_path"] == "train.lr");

  o = run_cli(dir, "train --corpus c --seed 1 --out t " + kSmoke + " --lr -1");
  CHECK(o.code == 2);
  CHECK(json::parse(o.err)["key_path"] == "train.learning_rate");

  o = run_cli(dir, "train --corpus nowhere --seed 1 --out t " + kSmoke);
  CHECK(o.code == 3);
  CHECK(json::parse(o.err)["error"] == "missing_file");

  o = run_cli(dir, "compare --run-a nowhere --run-b nowhere --seed 1");
  CHECK(o.code == 3);
  o = run_cli(dir, "train --corpus c --seed 1 --out t --config absent.json");
  CHECK(o.code == 3);
  fs::remove_all(dir);
}

TEST_CASE("evaluate: the perfect detector reaches 1.0 at zero false positives") {
  const auto dir = cade::test::temp_dir("cli_eval");
  std::ofstream(dir / "ann.jsonl") << R"({"breast_id":"s1:R","min":[0,0,0],"max":[4,4,4],"category":"malignant"}
{"breast_id":"s1:L"}
{"breast_id":"s2:R"}
{"breast_id":"s2:L","min":[1,1,1],"max":[5,6,7],"category":"malignant"}
)";
  std::ofstream(dir / "det.jsonl") << R"({"breast_id":"s1:R","min":[0,0,0],"max":[4,4,4],"score":0.9}
{"breast_id":"s2:L","min":[1,1,1],"max":[5,6,7],"score":0.8}
)";
  const Outcome o = run_cli(dir, "evaluate --dets det.jsonl --annotations ann.jsonl --metric sensitivity --out curve.json");
  REQUIRE(o.code == 0);
  const json curve = json::parse(slurp(dir / "curve.json"));
  double at_zero = 0;
  for (const auto& p : curve["points"]) {
    if (p["fp"].get<double>() == 0.0) at_zero = std::max(at_zero, p["value"].get<double>());
  }
  CHECK(at_zero == 1.0);
  CHECK(curve["cpm"] == 1.0);
  CHECK(fs::exists(dir / "curve.csv"));
  CHECK(run_cli(dir, "evaluate --dets det.jsonl --annotations ann.jsonl --out curve.json").code != 0);
  fs::remove_all(dir);
}

TEST_CASE("train, detect, evaluate and compare wire together") {
  const auto dir = cade::test::temp_dir("cli_pipeline");
  REQUIRE(run_cli(dir, "phantom generate --n 6 --seed 2 --no-series --out corpus " + kSmoke).code == 0);
  REQUIRE(run_cli(dir, "train --corpus corpus --seed 3 --out model " + kSmoke).code == 0);
  for (const char* f : {"config.resolved.json", "train_log.jsonl", "model.ckpt", "split.json"}) {
    CHECK(fs::exists(dir / "model" / f));
  }
  const json conf = json::parse(slurp(dir / "model" / "config.resolved.json"));
  CHECK(conf["train"]["seed"] == 3);
  CHECK(conf["train"]["epochs"] == 1);
  REQUIRE(run_cli(dir, "detect --checkpoint model/model.ckpt --corpus corpus --subset all --out run " + kSmoke).code == 0);
  CHECK(fs::exists(dir / "run" / "detections.jsonl"));
  const Outcome ev = run_cli(dir, "evaluate --run run --out run/curve.json --ci-samples 20 --seed 1 " + kSmoke);
  CHECK(ev.code == 0);
  const Outcome cmp = run_cli(dir, "compare --run-a run --run-b run --samples 50 --seed 9");
  REQUIRE(cmp.code == 0);
  CHECK(json::parse(cmp.out)["p"] == 1.0);
  fs::remove_all(dir);
}

TEST_CASE("crossval on a 12-patient corpus: pooled hits equal the fold sum") {
  const auto dir = cade::test::temp_dir("cli_crossval");
  std::ofstream(dir / "c.json") << R"({"phantom": {"shape": [15, 8, 48, 96], "repeat_patient_fraction": 0.0},
  "preprocess": {"crop_size": 32, "register_motion": false}})";
  REQUIRE(run_cli(dir, "phantom generate --n 12 --seed 8 --no-series --out corpus --config c.json").code == 0);
  const Outcome o = run_cli(dir, "crossval --corpus corpus --folds 3 --seed 5 --out cv --metric detection_rate " + kSmoke);
  REQUIRE(o.code == 0);
  const json r = json::parse(slurp(dir / "cv" / "report.json"));
  REQUIRE(r["folds"].size() == 3);
  int sum = 0;
  for (int i = 0; i < 3; ++i) {
    CHECK(fs::exists(dir / "cv" / "folds" / ("fold_" + std::to_string(i)) / "report.json"));
    sum += r["folds"][i]["hits"].get<int>();
  }
  CHECK(r["pooled_hits"] == sum);
  CHECK(r["pooled"]["hits"] == sum);
  fs::remove_all(dir);
}
