#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "modlab/corpus_store.hpp"
#include "oracles.hpp"

using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "modlab");
  std::ostringstream out, err;
  const int code = modlab::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A store with 6 postings, 3 annotators and two forums of scores.
struct Workspace {
  fixtures::TempDir dir{"cli"};
  std::string store = (dir / "store").string();

  Workspace() {
    std::string postings;
    for (int i = 0; i < 6; ++i) {
      postings += json{{"id", fixtures::posting_id(i)},
                       {"forum_id", i < 3 ? "fa" : "fb"},
                       {"text", "posting, text " + std::to_string(i)},
                       {"source_tag", "S3_random_sample"},
                       {"preclass_prob", i == 0 ? 0.9 : 0.1}}
                      .dump() +
                  "\n";
    }
    write(dir / "postings.jsonl", postings);
    write(dir / "annotators.jsonl",
          "{\"id\":\"ann0\"}\n{\"id\":\"ann1\"}\n{\"id\":\"ann2\",\"role\":\"nlp_expert\"}\n");
    write(dir / "scores.jsonl",
          "{\"posting_id\":\"p00000\",\"forum_id\":\"fa\",\"p_positive\":0.9}\n"
          "{\"posting_id\":\"p00001\",\"forum_id\":\"fa\",\"p_positive\":0.2}\n"
          "{\"posting_id\":\"p00003\",\"forum_id\":\"fb\",\"p_positive\":0.1}\n");
    const auto r = run({"--store", store, "ingest", "--annotators", (dir / "annotators.jsonl").string(),
                        "--postings", (dir / "postings.jsonl").string(), "--scores",
                        (dir / "scores.jsonl").string()});
    REQUIRE(r.code == 0);
  }

  Outcome cmd(std::vector<std::string> args) {
    args.insert(args.begin(), {"--store", store});
    return run(std::move(args));
  }

  // Calibration round over all six postings, labels from `label_of(annotator, posting)`.
  std::string annotate_all(int (*label_of)(int, int)) {
    const auto created = cmd({"round-create", "--kind", "calibration", "--postings-file",
                              write_ids(6).string()});
    REQUIRE(created.code == 0);
    const std::string round = json::parse(created.out)["id"];
    for (int a = 0; a < 3; ++a) {
      const std::string ann = "ann" + std::to_string(a);
      const auto path = dir / (ann + ".csv");
      REQUIRE(cmd({"batch-export", "--round", round, "--annotator", ann, "--out", path.string()}).code == 0);
      std::istringstream in(slurp(path));
      std::string line, filled;
      std::getline(in, line);
      filled = line + "\n";
      for (int p = 0; std::getline(in, line); ++p) {
        filled += line + std::to_string(label_of(a, p)) + "\n";
      }
      write(path, filled);
      const auto imported = cmd({"batch-import", "--round", round, "--annotator", ann, "--file", path.string()});
      REQUIRE(imported.code == 0);
      CHECK(imported.out == "annotations: 6\n");
    }
    return round;
  }

  std::filesystem::path write_ids(int n) {
    std::string text;
    for (int i = 0; i < n; ++i) text += fixtures::posting_id(i) + "\r\n";
    write(dir / "ids.txt", text);
    return dir / "ids.txt";
  }
};

}  // namespace

TEST_CASE("help and usage errors") {
  auto r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("round-create") != std::string::npos);
  CHECK(run({}).code == modlab::cli::kExitValidation);
  CHECK(run({"frobnicate"}).code == modlab::cli::kExitValidation);
  r = run({"grad-check", "--dim", "abc"});
  CHECK(r.code == modlab::cli::kExitValidation);
  CHECK(r.err.rfind("error: ", 0) == 0);
}

TEST_CASE("ingest reports counts and skips duplicates unless strict") {
  Workspace w;
  const auto state = modlab::Store(std::filesystem::path(w.store)).snapshot();
  CHECK(state.postings.size() == 6);
  CHECK(state.annotators.size() == 3);
  CHECK(state.scores.size() == 3);
  auto again = w.cmd({"ingest", "--postings", (w.dir / "postings.jsonl").string()});
  CHECK(again.code == 0);
  CHECK(again.out == "postings: 0\n");
  again = w.cmd({"ingest", "--strict", "--postings", (w.dir / "postings.jsonl").string()});
  CHECK(again.code == modlab::cli::kExitValidation);
  CHECK(w.cmd({"ingest"}).code == modlab::cli::kExitValidation);
  CHECK(w.cmd({"ingest", "--postings", (w.dir / "missing.jsonl").string()}).code ==
        modlab::cli::kExitIo);
  write(w.dir / "bad.jsonl", "{\"id\":\"x\"}\n");
  const auto bad = w.cmd({"ingest", "--postings", (w.dir / "bad.jsonl").string()});
  CHECK(bad.code == modlab::cli::kExitValidation);
  CHECK(bad.err.find("line 1") != std::string::npos);
}

TEST_CASE("store directory that cannot be created is an io error") {
  fixtures::TempDir dir("cli-io");
  write(dir / "file", "x");
  CHECK(run({"--store", (dir / "file" / "store").string(), "stats"}).code == modlab::cli::kExitIo);
}

TEST_CASE("sampling and round creation") {
  Workspace w;
  auto r = w.cmd({"sample", "-n", "4", "--seed", "3"});
  REQUIRE(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 4);
  CHECK(w.cmd({"sample", "-n", "4", "--seed", "3"}).out == r.out);
  r = w.cmd({"sample", "--mode", "top_positive", "-n", "1"});
  CHECK(r.out == "p00000\n");
  CHECK(w.cmd({"sample", "--mode", "sideways"}).code == modlab::cli::kExitValidation);

  r = w.cmd({"round-create", "--postings", "p00000,p00001", "-k", "2", "--seed", "1"});
  REQUIRE(r.code == 0);
  const auto round = json::parse(r.out);
  CHECK(round["kind"] == "regular");
  CHECK(round["annotator_ids"].size() == 2);
  r = w.cmd({"round-create", "--sample", "3", "--annotators", "ann0,ann1", "-k", "2"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["posting_ids"].size() == 3);
  CHECK(w.cmd({"round-create", "--postings", "nope"}).code == modlab::cli::kExitValidation);
  CHECK(w.cmd({"batch-export", "--round", "round-0042", "--annotator", "ann0"}).code ==
        modlab::cli::kExitValidation);
}

TEST_CASE("batches, statistics, resolution and folds") {
  Workspace w;
  w.annotate_all([](int a, int p) { return a == 2 && p % 2 ? 0 : p % 5; });

  auto r = w.cmd({"stats"});
  REQUIRE(r.code == 0);
  const auto stats = json::parse(r.out);
  CHECK(stats["n_annotations"] == 18);
  CHECK(stats["pct_micro"].get<double>() > 0.5);
  r = w.cmd({"stats", "--format", "text"});
  CHECK(r.out.find("alpha_ordinal\t") != std::string::npos);
  r = w.cmd({"stats", "--format", "pairs-csv"});
  CHECK(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 6);
  CHECK(w.cmd({"stats", "--format", "xml"}).code == modlab::cli::kExitValidation);

  r = w.cmd({"resolve", "--strategy", "max"});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto g = json::parse(line);
    CHECK(g["strategy"] == "max");
    ++n;
  }
  CHECK(n == 6);
  CHECK(w.cmd({"resolve", "--strategy", "median"}).code == modlab::cli::kExitValidation);

  const auto out_dir = w.dir / "folds";
  r = w.cmd({"folds", "-k", "2", "--out-dir", out_dir.string(), "--format", "jsonl"});
  REQUIRE(r.code == 0);
  CHECK(r.out == "files: 6\n");
  CHECK(std::filesystem::exists(out_dir / "plan.json"));
  CHECK(std::filesystem::exists(out_dir / "fold1.test.jsonl"));
  CHECK(json::parse(slurp(out_dir / "plan.json"))["k"] == 2);
  CHECK(w.cmd({"folds", "--stratify", "forum", "--out-dir", out_dir.string()}).code ==
        modlab::cli::kExitValidation);
}

TEST_CASE("stats on an empty store is a validation error") {
  Workspace w;
  const auto r = w.cmd({"stats", "--format", "pairs-csv"});
  CHECK(r.code == modlab::cli::kExitValidation);
}

TEST_CASE("flag output formats") {
  Workspace w;
  auto r = w.cmd({"flag", "--tau-forum", "0.3"});
  REQUIRE(r.code == 0);
  CHECK(r.out == "forum_id\tn\trate\tflagged\nfa\t2\t0.5000\ttrue\nfb\t1\t0.0000\tfalse\n");
  r = w.cmd({"flag", "--format", "json", "--tau-post", "0.95"});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["tau_post"] == 0.95);
  CHECK(j["forums"][0]["flagged"] == false);
}

TEST_CASE("train, evaluate and cross-validate synthetic data") {
  fixtures::TempDir dir("cli-train");
  const auto model = (dir / "model.json").string();
  const auto history = (dir / "history.json").string();
  auto r = run({"train", "--features", "synth-binary", "--n", "120", "--kind", "bin", "--epochs", "15",
                "--out", model, "--history", history});
  REQUIRE(r.code == 0);
  const auto summary = json::parse(r.out);
  CHECK(summary["train_scores"]["binary"]["accuracy"].get<double>() > 0.9);
  CHECK(json::parse(slurp(history))["loss"].size() == 15);

  // Same seed, same files.
  const auto model2 = (dir / "model2.json").string();
  const auto history2 = (dir / "history2.json").string();
  REQUIRE(run({"train", "--features", "synth-binary", "--n", "120", "--kind", "bin", "--epochs", "15",
               "--out", model2, "--history", history2})
              .code == 0);
  CHECK(slurp(model) == slurp(model2));
  CHECK(slurp(history) == slurp(history2));

  r = run({"evaluate", "--features", "synth-binary", "--n", "60", "--data-seed", "9", "--checkpoint", model});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["binary"]["accuracy"].get<double>() > 0.9);

  r = run({"evaluate", "--features", "synth-ordinal", "--n", "150", "--cv", "bin,coral", "-k", "3",
           "--epochs", "4", "--parallel"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\nBin\tbinary\t") != std::string::npos);
  CHECK(r.out.find("\nCoral\tcoral\t") != std::string::npos);

  CHECK(run({"train", "--kind", "tree", "--n", "20", "--out", model, "--history", history}).code ==
        modlab::cli::kExitValidation);
  CHECK(run({"evaluate", "--checkpoint", (dir / "none.json").string(), "--n", "10"}).code ==
        modlab::cli::kExitIo);
}

TEST_CASE("train from a feature file joined with store gold") {
  Workspace w;
  w.annotate_all([](int, int p) { return p % 3 == 0 ? 3 : 0; });
  std::string features;
  for (int i = 0; i < 6; ++i) {
    features += fixtures::posting_id(i) + "\t" + (i % 3 == 0 ? "1.5" : "-1.5") + "\t0.25\n";
  }
  write(w.dir / "features.tsv", features);
  const auto r = w.cmd({"train", "--features", (w.dir / "features.tsv").string(), "--kind", "bin",
                        "--epochs", "40", "--lr", "0.05", "--out", (w.dir / "m.json").string(),
                        "--history", (w.dir / "h.json").string()});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["train_scores"]["binary"]["accuracy"] == 1.0);
}

TEST_CASE("gradient check command") {
  for (const char* kind : {"bin", "multi", "coral", "bin_multi", "bin_coral"}) {
    const auto r = run({"grad-check", "--kind", kind});
    CHECK(r.code == 0);
    CHECK(r.out.rfind("max_relative_error\t", 0) == 0);
  }
  CHECK(run({"grad-check", "--tolerance", "0"}).code == modlab::cli::kExitValidation);
}
