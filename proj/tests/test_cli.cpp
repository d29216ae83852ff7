#include <cmath>
#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "helpers.hpp"
#include "commands.hpp"
#include "mtre/aggregation.hpp"
#include "mtre/calibration.hpp"
#include "mtre/classifier.hpp"

using namespace mtre;
using testing::slurp;
using testing::TempDir;
using testing::write_text;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mtre");
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

int binary(const std::string& args) {
  const std::string cmd = std::string(MTRE_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// Small synthetic train/test pair plus a trained head.
struct Fixture {
  TempDir dir;
  std::string train = (dir / "train").string();
  std::string test = (dir / "test").string();
  Fixture() {
    REQUIRE(run({"synth", "--seed", "1", "--num-sentences", "80", "--out", train}).code == 0);
    REQUIRE(run({"synth", "--seed", "2", "--structure-seed", "1", "--num-sentences", "60",
                "--out", test}).code == 0);
  }
};

}  // namespace

TEST_CASE("synth is deterministic and loadable") {
  TempDir dir;
  const auto a = (dir / "a").string(), b = (dir / "b").string();
  CHECK(run({"synth", "--seed", "7", "--out", a}).code == 0);
  CHECK(run({"synth", "--seed", "7", "--out", b}).code == 0);
  for (const char* f : {"logits.bin", "manifest.jsonl", "meta.json", "ground_truth.json"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK(load_dataset(a).records.size() == 200);
  const auto truth = nlohmann::json::parse(slurp(dir / "a" / "ground_truth.json"));
  CHECK(truth["onset"] == 6);
}

TEST_CASE("synth structure seed matches the dataset made with that seed") {
  TempDir dir;
  const auto a = (dir / "a").string(), b = (dir / "b").string(), c = (dir / "c").string();
  REQUIRE(run({"synth", "--seed", "7", "--out", a}).code == 0);
  REQUIRE(run({"synth", "--seed", "7", "--structure-seed", "7", "--out", b}).code == 0);
  REQUIRE(run({"synth", "--seed", "8", "--structure-seed", "7", "--out", c}).code == 0);
  CHECK(slurp(dir / "a" / "logits.bin") == slurp(dir / "b" / "logits.bin"));
  CHECK(slurp(dir / "a" / "logits.bin") != slurp(dir / "c" / "logits.bin"));
  const auto truth = nlohmann::json::parse(slurp(dir / "c" / "ground_truth.json"));
  CHECK(truth.contains("structure_seed"));
  CHECK_FALSE(nlohmann::json::parse(slurp(dir / "a" / "ground_truth.json")).contains("structure_seed"));

  write_text(dir / "cfg.json", R"({"seed": 8, "synth": {"structure_seed": 7}})");
  const auto d = (dir / "d").string();
  REQUIRE(run({"synth", "--config", (dir / "cfg.json").string(), "--out", d}).code == 0);
  CHECK(slurp(dir / "c" / "logits.bin") == slurp(dir / "d" / "logits.bin"));
}

TEST_CASE("synth rejects an onset past the sentence length") {
  TempDir dir;
  const auto r = run({"synth", "--onset", "11", "--out", dir.path().string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("onset") != std::string::npos);
}

TEST_CASE("train writes a reproducible head and one loss row per epoch") {
  Fixture fx;
  const auto o1 = (fx.dir / "t1").string(), o2 = (fx.dir / "t2").string();
  CHECK(run({"train", "--seed", "3", "--data", fx.train, "--epochs", "7", "--lr", "0.01", "--out", o1}).code == 0);
  CHECK(run({"train", "--seed", "3", "--data", fx.train, "--epochs", "7", "--lr", "0.01", "--out", o2}).code == 0);
  CHECK(slurp(fx.dir / "t1" / "head.bin") == slurp(fx.dir / "t2" / "head.bin"));
  const auto csv = slurp(fx.dir / "t1" / "train_loss.csv");
  CHECK(count_lines(csv) == 8);
  CHECK(csv.rfind("epoch,loss\n", 0) == 0);
  CHECK(load_head(fx.dir / "t1" / "head.bin", 64).kind() == HeadKind::probe);
}

TEST_CASE("missing train root is named in the error") {
  TempDir dir;
  const auto missing = (dir / "nowhere").string();
  const auto r = run({"train", "--data", missing, "--out", dir.path().string()});
  CHECK(r.code == 2);
  CHECK(r.err.find(missing) != std::string::npos);
}

TEST_CASE("calibrate writes parameters and logs each fold") {
  Fixture fx;
  const auto out = (fx.dir / "cal").string();
  const auto r = run({"calibrate", "--seed", "4", "--data", fx.train, "--k-cv", "4", "--epochs", "5", "--lr", "0.01",
                      "--out", out});
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(fx.dir / "cal" / "calibration.json"));
  CHECK(j.size() == 8);
  CHECK(j["k_cv"] == 4);
  CHECK(j["format_version"] == 1);
  CHECK_NOTHROW(load_calibration(fx.dir / "cal" / "calibration.json"));
  CHECK(std::filesystem::exists(fx.dir / "cal" / "head.bin"));

  CHECK(run({"calibrate", "--data", fx.train, "--k-cv", "1", "--out", out}).code == 2);
}

TEST_CASE("calibrate logs one OOF line per fold") {
  Fixture fx;
  const auto log = (fx.dir / "log.txt").string();
  const std::string cmd = std::string("MTRE_LOG=info ") + MTRE_BINARY + " calibrate --seed 4 --data " + fx.train +
                          " --k-cv 3 --epochs 3 --out " + (fx.dir / "c").string() + " 2>" + log;
  REQUIRE(std::system(cmd.c_str()) == 0);
  const auto text = slurp(log);
  std::size_t folds = 0;
  for (std::size_t pos = text.find("OOF AUROC"); pos != std::string::npos; pos = text.find("OOF AUROC", pos + 1)) {
    ++folds;
  }
  CHECK(folds == 3);
}

TEST_CASE("eval reports every method and reruns byte-identically") {
  Fixture fx;
  const auto cal = (fx.dir / "cal").string();
  REQUIRE(run({"calibrate", "--seed", "4", "--data", fx.train, "--k-cv", "3", "--epochs", "5", "--lr", "0.01",
               "--out", cal})
              .code == 0);
  const std::vector<std::string> base{"eval", "--seed", "4", "--train", fx.train, "--test", fx.test,
                                      "--head", cal + "/head.bin", "--calibration", cal + "/calibration.json",
                                      "--methods", "mtre,mtre_tau,seq_logprob,lp_first_token,token_sar,p_true",
                                      "--p-true-ids", "3,5", "--epochs", "5"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", (fx.dir / "e1").string()});
  b.insert(b.end(), {"--out", (fx.dir / "e2").string()});
  const auto r = run(a);
  REQUIRE(r.code == 0);
  REQUIRE(run(b).code == 0);
  CHECK(slurp(fx.dir / "e1" / "metrics.json") == slurp(fx.dir / "e2" / "metrics.json"));
  CHECK(slurp(fx.dir / "e1" / "results.jsonl") == slurp(fx.dir / "e2" / "results.jsonl"));
  const auto report = nlohmann::json::parse(slurp(fx.dir / "e1" / "metrics.json"));
  REQUIRE(report.size() == 6);
  CHECK(report[0]["method"] == "mtre");
  CHECK(report[5]["method"] == "p_true");
  for (const auto& row : report) {
    CHECK(row.contains("accuracy"));
    CHECK(row.contains("f1"));
    CHECK(row.contains("auroc"));
  }
  CHECK(read_results_jsonl(fx.dir / "e1" / "results.jsonl").size() == 6 * 60);
  CHECK(count_lines(r.out) == 7);
}

TEST_CASE("eval with no-stop parameters gives identical mtre and mtre_tau rows") {
  Fixture fx;
  const auto t = (fx.dir / "t").string();
  REQUIRE(run({"train", "--seed", "3", "--data", fx.train, "--epochs", "5", "--lr", "0.01", "--out", t}).code == 0);
  CalibrationParams p;
  p.c_star = 1.7;
  p.k_cv = 2;
  save_calibration(p, fx.dir / "nostop.json");
  const auto out = (fx.dir / "e").string();
  REQUIRE(run({"eval", "--test", fx.test, "--head", t + "/head.bin", "--calibration",
               (fx.dir / "nostop.json").string(), "--methods", "mtre,mtre_tau", "--out", out})
              .code == 0);
  const auto report = nlohmann::json::parse(slurp(fx.dir / "e" / "metrics.json"));
  for (const char* key : {"accuracy", "f1", "auroc", "threshold"}) CHECK(report[0][key] == report[1][key]);
}

TEST_CASE("attention head through train and eval") {
  Fixture fx;
  const auto t = (fx.dir / "att").string(), e = (fx.dir / "att_eval").string();
  write_text(fx.dir / "att.json", R"({"train": {"kind": "attention", "attention":
      {"embed_dim": 16, "num_heads": 2, "num_layers": 1, "mlp_dim": 16, "sequence_chunks": 4}}})");
  const auto cfg = (fx.dir / "att.json").string();
  REQUIRE(run({"train", "--config", cfg, "--data", fx.train, "--epochs", "2", "--lr", "0.001", "--out", t}).code == 0);
  CHECK(load_head(fx.dir / "att" / "head.bin").kind() == HeadKind::attention);
  REQUIRE(run({"eval", "--test", fx.test, "--head", t + "/head.bin", "--methods", "mtre", "--out", e}).code == 0);
  const auto results = read_results_jsonl(fx.dir / "att_eval" / "results.jsonl");
  CHECK(results.size() == 60);
  for (const auto& r : results) CHECK(std::isfinite(r.score));
}

TEST_CASE("eval prerequisites") {
  Fixture fx;
  const auto out = fx.dir.path().string();
  CHECK(run({"eval", "--test", fx.test, "--methods", "mtre", "--out", out}).code == 2);
  CHECK(run({"eval", "--test", fx.test, "--methods", "seq_logprob", "--out", out}).code == 2);
  CHECK(run({"eval", "--test", fx.test, "--train", fx.train, "--methods", "p_true", "--out", out}).code == 2);
  CHECK(run({"eval", "--test", fx.test, "--methods", "oracle", "--out", out}).code == 2);
  const auto t = (fx.dir / "t").string();
  REQUIRE(run({"train", "--data", fx.train, "--epochs", "1", "--out", t}).code == 0);
  const auto r = run({"eval", "--test", fx.test, "--head", t + "/head.bin", "--methods", "mtre_tau", "--out", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("calibration") != std::string::npos);
}

TEST_CASE("kl writes one row per group and position") {
  TempDir dir;
  const auto data = (dir / "d").string();
  REQUIRE(run({"synth", "--seed", "5", "--num-sentences", "60", "--groups", "2", "--out", data}).code == 0);
  REQUIRE(run({"kl", "--data", data, "--out", (dir / "k1").string()}).code == 0);
  REQUIRE(run({"kl", "--data", data, "--out", (dir / "k2").string()}).code == 0);
  CHECK(slurp(dir / "k1" / "kl_curve.csv") == slurp(dir / "k2" / "kl_curve.csv"));
  CHECK(count_lines(slurp(dir / "k1" / "kl_curve.csv")) == 1 + 10);
  REQUIRE(run({"kl", "--data", data, "--group-split", "--t-cap", "8", "--out", (dir / "k3").string()}).code == 0);
  CHECK(count_lines(slurp(dir / "k3" / "kl_curve.csv")) == 1 + 3 * 8);

  REQUIRE(run({"synth", "--seed", "5", "--num-sentences", "60", "--out", (dir / "plain").string()}).code == 0);
  CHECK(run({"kl", "--data", (dir / "plain").string(), "--group-split", "--out", dir.path().string()}).code == 2);
}

TEST_CASE("onset-6 KL curve stays flat before onset") {
  TempDir dir;
  const auto data = (dir / "d").string();
  REQUIRE(run({"synth", "--seed", "6", "--num-sentences", "100", "--out", data}).code == 0);
  REQUIRE(run({"kl", "--data", data, "--out", dir.path().string()}).code == 0);
  std::istringstream in(slurp(dir / "kl_curve.csv"));
  std::string line;
  std::getline(in, line);
  double early = 0.0, late = 0.0;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string group, t, value;
    std::getline(row, group, ',');
    std::getline(row, t, ',');
    std::getline(row, value, ',');
    if (std::stoi(t) < 6) {
      early = std::max(early, std::stod(value));
    } else {
      late += std::stod(value) / 5.0;
    }
  }
  CHECK(early / late < 0.1);
}

TEST_CASE("config file merges with flags") {
  TempDir dir;
  write_text(dir / "cfg.json", R"({"seed": 9, "synth": {"num_sentences": 20, "tokens": 4, "onset": 2}})");
  const auto out = (dir / "d").string();
  REQUIRE(run({"synth", "--config", (dir / "cfg.json").string(), "--out", out}).code == 0);
  const auto ds = load_dataset(out);
  CHECK(ds.records.size() == 20);
  CHECK(ds.records[0].num_tokens() == 4);

  REQUIRE(run({"synth", "--config", (dir / "cfg.json").string(), "--num-sentences", "12", "--out", out}).code == 0);
  CHECK(load_dataset(out).records.size() == 12);

  write_text(dir / "bad.json", R"({"synth": {"vocab": 10}})");
  const auto r = run({"synth", "--config", (dir / "bad.json").string(), "--out", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("vocab") != std::string::npos);
  write_text(dir / "broken.json", "{");
  CHECK(run({"synth", "--config", (dir / "broken.json").string(), "--out", out}).code == 2);
}

TEST_CASE("exit codes from the real binary") {
  TempDir dir;
  CHECK(binary("--help") == 0);
  CHECK(binary("") == 2);
  CHECK(binary("frobnicate") == 2);
  CHECK(binary("synth --onset 0 --out " + dir.path().string()) == 2);
  CHECK(binary("synth --seed 1 --num-sentences 10 --out " + (dir / "d").string()) == 0);
  // Corrupt the payload: a data error.
  write_text(dir / "d" / "logits.bin", "xx");
  CHECK(binary("kl --data " + (dir / "d").string() + " --out " + dir.path().string()) == 3);
}
