#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protoem/common.hpp"
#include "protoem/config.hpp"
#include "protoem/corpus.hpp"
#include "protoem/depgraph.hpp"
#include "protoem/model.hpp"
#include "protoem/trainer.hpp"

namespace protoem::cli {

// Best-effort source revision: the git HEAD commit when run from a checkout,
// overridable via PROTOEM_REVISION.
inline std::string source_revision() {
  if (const char* env = std::getenv("PROTOEM_REVISION")) return env;
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::path dir = fs::current_path(ec);
  for (int depth = 0; depth < 8 && !dir.empty(); ++depth) {
    fs::path head = dir / ".git" / "HEAD";
    if (fs::exists(head, ec)) {
      std::ifstream in(head);
      std::string line;
      std::getline(in, line);
      if (line.rfind("ref: ", 0) == 0) {
        std::ifstream ref(dir / ".git" / line.substr(5));
        std::string hash;
        if (ref && std::getline(ref, hash)) return hash;
        return line.substr(5);
      }
      return line;
    }
    if (dir == dir.parent_path()) break;
    dir = dir.parent_path();
  }
  return "unknown";
}

inline void write_manifest(const std::string& out_dir, const nlohmann::json& config_snapshot,
                           const std::vector<std::uint64_t>& seeds) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json j;
  j["config"] = config_snapshot;
  j["revision"] = source_revision();
  j["seeds"] = seeds;
  j["output_dir"] = out_dir;
  std::ofstream os(out_dir + "/manifest.json");
  os << j.dump(2) << "\n";
}

// Config precedence: defaults < file < environment < command-line flags.
inline ModelConfig assemble_config(const std::string& config_path,
                                   const std::vector<std::string>& overrides) {
  ModelConfig cfg;
  if (!config_path.empty()) config_apply_file(cfg, config_path);
  config_apply_env(cfg);
  config_apply_overrides(cfg, overrides);
  return cfg;
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << content;
}

inline int cmd_preprocess(const std::string& input, const std::string& out_dir,
                          const std::string& graph_norm) {
  const Taxonomy tax;
  Corpus corpus = load_corpus(input, tax);
  nlohmann::json manifest_cfg;
  manifest_cfg["input"] = input;
  manifest_cfg["graph_norm"] = graph_norm;
  write_manifest(out_dir, manifest_cfg, {});

  {
    std::ofstream os(out_dir + "/pairs.jsonl");
    if (!os) throw DataError("cannot write " + out_dir + "/pairs.jsonl");
    for (const auto& doc : corpus.docs) {
      for (const auto& p : enumerate_pairs(doc, tax)) {
        nlohmann::json j;
        j["doc_id"] = doc.doc_id;
        j["src"] = p.src;
        j["dst"] = p.dst;
        for (Task t : kAllTasks)
          j[task_name(t)] = tax.task_labels(t)[static_cast<std::size_t>(p.label(t))];
        os << j.dump() << "\n";
      }
    }
  }

  DependencyGraph graph =
      normalize_graph(compute_cooccurrence(corpus, tax), graph_norm_from_name(graph_norm));
  write_text(out_dir + "/a_raw.tsv", render_matrix_tsv(graph.labels, graph.a_raw));
  write_text(out_dir + "/a_norm.tsv", render_matrix_tsv(graph.labels, graph.a_norm));
  write_text(out_dir + "/matrix.txt", render_matrix_table(graph.labels, graph.a_raw));
  {
    std::ofstream os(out_dir + "/graph.json");
    os << graph_to_json(graph).dump() << "\n";
  }
  {
    CorpusStats st = corpus.stats();
    nlohmann::json j;
    j["documents"] = st.documents;
    j["mentions"] = st.mentions;
    j["timex"] = st.timex;
    for (Task t : kAllTasks)
      j[std::string("gold_") + task_name(t)] = st.gold_entries[static_cast<std::size_t>(t)];
    j["skipped_relations"] = st.skipped_relations;
    j["conflicting_relations"] = st.conflicting_relations;
    std::ofstream os(out_dir + "/stats.json");
    os << j.dump(2) << "\n";
  }
  std::cout << "preprocess: " << corpus.docs.size() << " documents -> " << out_dir << "\n";
  return 0;
}

inline int cmd_train(const ModelConfig& cfg, const std::string& train_path,
                     const std::string& valid_path, const std::string& out_dir) {
  config_validate(cfg);
  write_manifest(out_dir, config_to_json(cfg), {cfg.seed});
  Corpus train_corpus = load_corpus(train_path);
  Corpus valid_corpus;
  const Corpus* valid_ptr = nullptr;
  if (!valid_path.empty()) {
    valid_corpus = load_corpus(valid_path);
    valid_ptr = &valid_corpus;
  }
  TrainResult result = train(train_corpus, valid_ptr, cfg, out_dir);
  std::cout << "train: " << result.log.size() << " epochs, best epoch " << result.best_epoch;
  if (valid_ptr != nullptr) std::cout << " (valid overall F1 " << result.best_overall_f1 << ")";
  std::cout << "\ncheckpoints under " << out_dir << "\n";
  return 0;
}

inline int cmd_predict(const std::string& checkpoint, const std::string& corpus_path,
                       const std::string& out_path, const std::string& clusters_path) {
  auto model = ProtoEmModel::load(checkpoint);
  Corpus corpus = load_corpus(corpus_path);
  auto preds = model->predict(corpus);
  std::ofstream os(out_path);
  if (!os) throw DataError("cannot write " + out_path);
  write_predictions(os, preds, model->taxonomy());
  if (!clusters_path.empty()) {
    std::ofstream cs(clusters_path);
    if (!cs) throw DataError("cannot write " + clusters_path);
    write_clusters(cs, preds);
  }
  std::cout << "predict: wrote " << out_path << "\n";
  return 0;
}

// Rebuilds per-pair argmax labels from a prediction dump and scores them.
inline MetricsReport score_prediction_file(const Corpus& corpus, const std::string& path,
                                           const Taxonomy& tax = Taxonomy()) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file: " + path);
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::string> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    table[{j.at("doc_id"), j.at("src"), j.at("dst"), j.at("task")}] = j.at("label");
  }
  std::vector<ProtoEmModel::DocPredictions> preds;
  for (const auto& doc : corpus.docs) {
    ProtoEmModel::DocPredictions dp;
    dp.doc_id = doc.doc_id;
    for (const auto& m : doc.mentions) dp.mentions.push_back(m.mention_id);
    for (const auto& pair : enumerate_pairs(doc, tax)) {
      ProtoEmModel::PairPrediction pp;
      pp.src = pair.src;
      pp.dst = pair.dst;
      pp.gold = pair.labels;
      for (Task t : kAllTasks) {
        auto it = table.find({doc.doc_id, pair.src, pair.dst, task_name(t)});
        if (it == table.end()) continue;
        pp.argmax[static_cast<std::size_t>(t)] = tax.label_index(t, it->second);
      }
      dp.pairs.push_back(std::move(pp));
    }
    preds.push_back(std::move(dp));
  }
  return score_predictions(corpus, preds, tax);
}

inline int cmd_evaluate(const std::vector<std::string>& checkpoints,
                        const std::string& predictions_file, const std::string& corpus_path,
                        const std::string& out_dir) {
  Corpus corpus = load_corpus(corpus_path);
  std::vector<MetricsReport> reports;
  std::vector<std::string> names;
  if (!predictions_file.empty()) {
    reports.push_back(score_prediction_file(corpus, predictions_file));
    names.push_back(predictions_file);
  }
  for (const auto& ckpt : checkpoints) {
    reports.push_back(evaluate_checkpoint(ckpt, corpus));
    names.push_back(ckpt);
  }
  if (reports.empty()) throw ConfigError("evaluate: need --checkpoint or --predictions");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    std::cout << "== " << names[i] << "\n" << render_report(reports[i]);
    if (!out_dir.empty()) {
      std::ofstream os(out_dir + "/report_" + std::to_string(i) + ".json");
      os << report_to_json(reports[i]).dump(2) << "\n";
    }
  }
  nlohmann::json agg = aggregate_reports(reports);
  std::cout << "aggregate (mean +/- std over " << reports.size() << " runs):\n"
            << agg.dump(2) << "\n";
  if (!out_dir.empty()) {
    std::ofstream os(out_dir + "/aggregate.json");
    os << agg.dump(2) << "\n";
  }
  return 0;
}

struct AblateVariant {
  std::string name;
  std::vector<std::string> overrides;
};

inline std::vector<AblateVariant> ablate_grid(const std::string& grid) {
  if (grid == "ablation")
    return {{"full", {}},
            {"no_graph", {"graph=off"}},
            {"no_prototypes_graph", {"graph=off", "prototypes=random"}}};
  if (grid == "submodules")
    return {{"full", {}},
            {"prototypes_random", {"prototypes=random"}},
            {"prototypes_event", {"prototypes=event"}},
            {"prototypes_context", {"prototypes=context"}},
            {"gcn_learned_w", {"graph=learned"}},
            {"gcn_no_w", {"graph=uniform"}}};
  if (grid == "architectures")
    return {{"default", {}},
            {"coref_ind", {"arch=coref_ind"}},
            {"two_plms", {"arch=two_plm"}},
            {"one_plm", {"arch=one_plm"}}};
  if (grid == "selection")
    return {{"topk", {"selection=topk"}}, {"random", {"selection=random"}}};
  throw ConfigError("unknown ablation grid '" + grid +
                    "' (expected ablation|submodules|architectures|selection)");
}

inline int cmd_ablate(const ModelConfig& base_cfg, const std::string& grid,
                      const std::string& train_path, const std::string& valid_path,
                      const std::string& out_dir) {
  Corpus train_corpus = load_corpus(train_path);
  Corpus valid_corpus;
  const Corpus* valid_ptr = nullptr;
  if (!valid_path.empty()) {
    valid_corpus = load_corpus(valid_path);
    valid_ptr = &valid_corpus;
  }
  write_manifest(out_dir, config_to_json(base_cfg), {base_cfg.seed});
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& variant : ablate_grid(grid)) {
    ModelConfig cfg = base_cfg;
    config_apply_overrides(cfg, variant.overrides);
    config_validate(cfg);
    const std::string run_dir = out_dir + "/" + variant.name;
    TrainResult result = train(train_corpus, valid_ptr, cfg, run_dir);
    const Corpus& eval_corpus = valid_ptr != nullptr ? *valid_ptr : train_corpus;
    auto preds = result.model->predict(eval_corpus);
    MetricsReport report = score_predictions(eval_corpus, preds);
    nlohmann::json row;
    row["variant"] = variant.name;
    row["report"] = report_to_json(report);
    summary.push_back(row);
    std::cout << "== variant " << variant.name << "\n" << render_report(report);
  }
  std::ofstream os(out_dir + "/summary.json");
  os << summary.dump(2) << "\n";
  return 0;
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"ProtoEM: prototype-enhanced matching for event relation extraction"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "build the pair table and dependency matrix");
  std::string pre_input, pre_out, pre_norm = "row";
  pre->add_option("--input", pre_input, "corpus file (one JSON document per line)")->required();
  pre->add_option("--out", pre_out, "output directory")->required();
  pre->add_option("--graph-norm", pre_norm, "row | doubly")->check(CLI::IsMember({"row", "doubly"}));

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_train, tr_valid, tr_out = "runs/train";
  std::vector<std::string> tr_sets;
  double tr_fraction = -1.0;
  std::int64_t tr_seed = -1;
  tr->add_option("--config", tr_config, "config file (key=value lines)");
  tr->add_option("--set", tr_sets, "override: key=value (repeatable)");
  tr->add_option("--train", tr_train, "training corpus")->required();
  tr->add_option("--valid", tr_valid, "validation corpus");
  tr->add_option("--out", tr_out, "output directory");
  tr->add_option("--fraction", tr_fraction, "low-resource document fraction");
  tr->add_option("--seed", tr_seed, "random seed");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score checkpoints or a prediction dump");
  std::vector<std::string> ev_ckpts;
  std::string ev_preds, ev_corpus, ev_out;
  ev->add_option("--checkpoint", ev_ckpts, "checkpoint directory (repeatable)");
  ev->add_option("--predictions", ev_preds, "prediction dump to score instead");
  ev->add_option("--corpus", ev_corpus, "gold corpus")->required();
  ev->add_option("--out", ev_out, "output directory for reports");

  // predict
  auto* pr = app.add_subcommand("predict", "dump predictions for a corpus");
  std::string pr_ckpt, pr_corpus, pr_out, pr_clusters;
  pr->add_option("--checkpoint", pr_ckpt, "checkpoint directory")->required();
  pr->add_option("--corpus", pr_corpus, "corpus file")->required();
  pr->add_option("--out", pr_out, "prediction dump path")->required();
  pr->add_option("--clusters", pr_clusters, "coreference cluster dump path");

  // ablate
  auto* ab = app.add_subcommand("ablate", "run a named variant grid");
  std::string ab_grid, ab_config, ab_train, ab_valid, ab_out = "runs/ablate";
  std::vector<std::string> ab_sets;
  ab->add_option("--grid", ab_grid, "ablation|submodules|architectures|selection")->required();
  ab->add_option("--config", ab_config, "config file");
  ab->add_option("--set", ab_sets, "override: key=value (repeatable)");
  ab->add_option("--train", ab_train, "training corpus")->required();
  ab->add_option("--valid", ab_valid, "validation corpus");
  ab->add_option("--out", ab_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (pre->parsed()) return cmd_preprocess(pre_input, pre_out, pre_norm);
    if (tr->parsed()) {
      ModelConfig cfg = assemble_config(tr_config, tr_sets);
      if (tr_fraction >= 0.0) cfg.train_fraction = tr_fraction;
      if (tr_seed >= 0) cfg.seed = static_cast<std::uint64_t>(tr_seed);
      return cmd_train(cfg, tr_train, tr_valid, tr_out);
    }
    if (ev->parsed()) return cmd_evaluate(ev_ckpts, ev_preds, ev_corpus, ev_out);
    if (pr->parsed()) return cmd_predict(pr_ckpt, pr_corpus, pr_out, pr_clusters);
    if (ab->parsed()) {
      ModelConfig cfg = assemble_config(ab_config, ab_sets);
      return cmd_ablate(cfg, ab_grid, ab_train, ab_valid, ab_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

}  // namespace protoem::cli
