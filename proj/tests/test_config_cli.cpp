#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "protoem/cli.hpp"
#include "protoem/config.hpp"
#include "support/fixture_matrix.hpp"
#include "support/test_support.hpp"

using namespace protoem;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
  std::vector<const char*> argv;
  argv.push_back("protoem");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("cli_test_out") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config defaults are the stock training settings") {
  ModelConfig cfg;
  CHECK(cfg.dim == 768);
  CHECK(cfg.k_examples == 5);
  CHECK(cfg.gcn_layers == 1);
  CHECK(cfg.dropout == doctest::Approx(0.2));
  CHECK(cfg.lambdas() == std::array<double, 4>{1.0, 2.0, 4.0, 4.0});
  CHECK(cfg.lr_encoder == doctest::Approx(2e-5));
  CHECK(cfg.lr_heads == doctest::Approx(3e-4));
  CHECK(cfg.warmup_steps == 200);
  CHECK(cfg.batch_size == 8);
  CHECK(cfg.epochs == 50);
  config_validate(cfg);
}

TEST_CASE("config precedence: defaults < file < environment < flags") {
  const std::string path = "config_precedence_test.cfg";
  {
    std::ofstream os(path);
    os << "# comment line\n";
    os << "dim = 32\n";
    os << "k_examples = 3\n";
    os << "epochs=7\n";
  }
  ModelConfig cfg;
  config_apply_file(cfg, path);
  CHECK(cfg.dim == 32);
  CHECK(cfg.k_examples == 3);
  CHECK(cfg.epochs == 7);
  CHECK(cfg.batch_size == 8);  // untouched default

  setenv("PROTOEM_DIM", "64", 1);
  setenv("PROTOEM_SELECTION", "random", 1);
  config_apply_env(cfg);
  CHECK(cfg.dim == 64);       // env beats file
  CHECK(cfg.selection == "random");

  config_apply_overrides(cfg, {"dim=128", "graph=off"});
  CHECK(cfg.dim == 128);  // flag beats env
  CHECK(cfg.graph == "off");

  unsetenv("PROTOEM_DIM");
  unsetenv("PROTOEM_SELECTION");
  std::remove(path.c_str());
}

TEST_CASE("validation lists every violation at once") {
  ModelConfig cfg;
  cfg.dim = -1;
  cfg.dropout = 1.5;
  cfg.graph = "sideways";
  cfg.k_examples = 0;
  try {
    config_validate(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("dim") != std::string::npos);
    CHECK(msg.find("dropout") != std::string::npos);
    CHECK(msg.find("graph") != std::string::npos);
    CHECK(msg.find("k_examples") != std::string::npos);
  }
}

TEST_CASE("unknown keys and malformed overrides are config errors") {
  ModelConfig cfg;
  CHECK_THROWS_AS(config_set(cfg, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(config_apply_overrides(cfg, {"dim"}), ConfigError);
  CHECK_THROWS_AS(config_set(cfg, "dim", "abc"), ConfigError);
}

TEST_CASE("config json round trip") {
  ModelConfig cfg;
  cfg.dim = 24;
  cfg.lr_heads = 1.25e-3;
  cfg.arch = "coref_ind";
  cfg.tie_context = false;
  ModelConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.dim == 24);
  CHECK(back.lr_heads == doctest::Approx(1.25e-3).epsilon(1e-15));
  CHECK(back.arch == "coref_ind");
  CHECK(back.tie_context == false);
}

TEST_CASE("cli preprocess writes the pair table and matrices, byte-identical on rerun") {
  TempDir out("preprocess");
  CHECK(run_cli({"preprocess", "--input", testing::fixture_corpus_path(), "--out", out.str()}) ==
        0);
  for (const char* name : {"pairs.jsonl", "a_raw.tsv", "a_norm.tsv", "matrix.txt", "graph.json",
                           "stats.json", "manifest.json"})
    CHECK_MESSAGE(fs::exists(out.path / name), name);

  // spot-check the rendered matrix against the hand count (0.50 for Before->Cause)
  std::string table = slurp((out.path / "matrix.txt").string());
  CHECK(table.find("Before") != std::string::npos);
  CHECK(table.find("0.50") != std::string::npos);

  // 14 pairs in the fixture
  std::string pairs = slurp((out.path / "pairs.jsonl").string());
  CHECK(std::count(pairs.begin(), pairs.end(), '\n') == 14);

  std::string first_raw = slurp((out.path / "a_raw.tsv").string());
  std::string first_graph = slurp((out.path / "graph.json").string());
  CHECK(run_cli({"preprocess", "--input", testing::fixture_corpus_path(), "--out", out.str()}) ==
        0);
  CHECK(slurp((out.path / "a_raw.tsv").string()) == first_raw);
  CHECK(slurp((out.path / "graph.json").string()) == first_graph);
}

TEST_CASE("cli train/predict/evaluate round trip on a tiny corpus") {
  TempDir out("train");
  Corpus corpus = testing::synthetic_corpus(4);
  const std::string corpus_path = (out.path / "corpus.jsonl").string();
  testing::write_temp_corpus(corpus, corpus_path);

  const std::string run_dir = (out.path / "run").string();
  CHECK(run_cli({"train", "--train", corpus_path, "--valid", corpus_path, "--out", run_dir,
                 "--set", "dim=12", "--set", "epochs=1", "--set", "k_examples=2",
                 "--set", "encoder_layers=1", "--set", "max_window=64",
                 "--set", "vocab_buckets=127", "--set", "batch_size=4",
                 "--set", "dropout=0.0", "--seed", "3"}) == 0);
  for (const char* name : {"manifest.json", "log.jsonl", "best", "last"})
    CHECK_MESSAGE(fs::exists(fs::path(run_dir) / name), name);

  const std::string preds = (out.path / "preds.jsonl").string();
  const std::string clusters = (out.path / "clusters.jsonl").string();
  CHECK(run_cli({"predict", "--checkpoint", run_dir + "/best", "--corpus", corpus_path, "--out",
                 preds, "--clusters", clusters}) == 0);
  CHECK(fs::exists(preds));
  CHECK(fs::exists(clusters));
  // 4 docs x 56 ordered pairs x 4 tasks
  std::string lines = slurp(preds);
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 4 * 56 * 4);

  const std::string eval_dir = (out.path / "eval").string();
  CHECK(run_cli({"evaluate", "--checkpoint", run_dir + "/best", "--corpus", corpus_path, "--out",
                 eval_dir}) == 0);
  CHECK(fs::exists(fs::path(eval_dir) / "report_0.json"));
  CHECK(fs::exists(fs::path(eval_dir) / "aggregate.json"));
  auto agg = nlohmann::json::parse(slurp(eval_dir + "/aggregate.json"));
  CHECK(agg.at("runs") == 1);
  CHECK(agg.at("overall_f1").at("std") == doctest::Approx(0.0));  // single run
}

TEST_CASE("cli evaluate scores an oracle prediction dump at F1 = 1") {
  TempDir out("oracle");
  Corpus corpus = testing::synthetic_corpus(3);
  const std::string corpus_path = (out.path / "corpus.jsonl").string();
  testing::write_temp_corpus(corpus, corpus_path);

  // oracle dump: every pair labeled with its gold label
  Taxonomy tax;
  const std::string preds = (out.path / "oracle.jsonl").string();
  {
    std::ofstream os(preds);
    for (const auto& doc : corpus.docs) {
      for (const auto& pair : enumerate_pairs(doc, tax)) {
        for (Task t : kAllTasks) {
          nlohmann::json j;
          j["doc_id"] = doc.doc_id;
          j["src"] = pair.src;
          j["dst"] = pair.dst;
          j["task"] = task_name(t);
          j["label"] = tax.task_labels(t)[static_cast<std::size_t>(pair.label(t))];
          j["probability"] = 1.0;
          os << j.dump() << "\n";
        }
      }
    }
  }
  MetricsReport report = cli::score_prediction_file(corpus, preds, tax);
  CHECK(report.overall_f1 == doctest::Approx(1.0));
  CHECK(run_cli({"evaluate", "--predictions", preds, "--corpus", corpus_path}) == 0);
}

TEST_CASE("cli exit codes: 2 for config errors, 3 for data errors") {
  TempDir out("codes");
  Corpus corpus = testing::synthetic_corpus(2);
  const std::string corpus_path = (out.path / "corpus.jsonl").string();
  testing::write_temp_corpus(corpus, corpus_path);

  CHECK(run_cli({"train", "--train", corpus_path, "--out", (out.path / "x").string(), "--set",
                 "graph=bogus"}) == 2);
  CHECK(run_cli({"preprocess", "--input", (out.path / "missing.jsonl").string(), "--out",
                 (out.path / "y").string()}) == 3);
  const std::string bad = (out.path / "bad.jsonl").string();
  {
    std::ofstream os(bad);
    os << "{broken\n";
  }
  CHECK(run_cli({"preprocess", "--input", bad, "--out", (out.path / "z").string()}) == 3);
}

TEST_CASE("ablate grid names are validated") {
  CHECK_THROWS_AS(cli::ablate_grid("bogus"), ConfigError);
  CHECK(cli::ablate_grid("ablation").size() == 3);
  CHECK(cli::ablate_grid("submodules").size() == 6);
  CHECK(cli::ablate_grid("architectures").size() == 4);
}

TEST_CASE("cli ablate runs a grid end to end") {
  TempDir out("ablate");
  Corpus corpus = testing::synthetic_corpus(4);
  const std::string corpus_path = (out.path / "corpus.jsonl").string();
  testing::write_temp_corpus(corpus, corpus_path);
  const std::string grid_dir = (out.path / "grid").string();
  CHECK(run_cli({"ablate", "--grid", "ablation", "--train", corpus_path, "--out", grid_dir,
                 "--set", "dim=12", "--set", "epochs=1", "--set", "k_examples=2",
                 "--set", "encoder_layers=1", "--set", "max_window=64",
                 "--set", "vocab_buckets=127", "--set", "batch_size=4",
                 "--set", "dropout=0.0"}) == 0);
  auto summary = nlohmann::json::parse(slurp(grid_dir + "/summary.json"));
  REQUIRE(summary.size() == 3);
  CHECK(summary[0].at("variant") == "full");
  CHECK(summary[1].at("variant") == "no_graph");
  CHECK(summary[2].at("variant") == "no_prototypes_graph");
  for (const char* v : {"full", "no_graph", "no_prototypes_graph"})
    CHECK(fs::exists(fs::path(grid_dir) / v / "last" / "weights.bin"));
}

TEST_CASE("cli exit code 4 on numeric divergence") {
  TempDir out("diverge");
  Corpus corpus = testing::synthetic_corpus(3);
  const std::string corpus_path = (out.path / "corpus.jsonl").string();
  testing::write_temp_corpus(corpus, corpus_path);
  CHECK(run_cli({"train", "--train", corpus_path, "--out", (out.path / "run").string(),
                 "--set", "dim=12", "--set", "epochs=8", "--set", "k_examples=2",
                 "--set", "encoder_layers=1", "--set", "max_window=64",
                 "--set", "vocab_buckets=127", "--set", "batch_size=2",
                 "--set", "dropout=0.0", "--set", "warmup_steps=1",
                 "--set", "lr_heads=1e18", "--set", "lr_encoder=1e18"}) == 4);
}

TEST_CASE("cli train --fraction subsamples the training documents") {
  TempDir out("fraction");
  Corpus corpus = testing::synthetic_corpus(4);
  const std::string corpus_path = (out.path / "corpus.jsonl").string();
  testing::write_temp_corpus(corpus, corpus_path);
  CHECK(run_cli({"train", "--train", corpus_path, "--out", (out.path / "run").string(),
                 "--fraction", "0.75", "--set", "dim=12", "--set", "epochs=1",
                 "--set", "k_examples=1", "--set", "encoder_layers=1",
                 "--set", "max_window=64", "--set", "vocab_buckets=127",
                 "--set", "batch_size=4", "--set", "dropout=0.0"}) == 0);
  auto manifest = nlohmann::json::parse(slurp((out.path / "run" / "manifest.json").string()));
  CHECK(manifest.at("config").at("train_fraction").get<std::string>() == "0.75");
}
