#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoem/autodiff.hpp"
#include "protoem/common.hpp"
#include "protoem/config.hpp"
#include "protoem/corpus.hpp"
#include "protoem/depgraph.hpp"
#include "protoem/evalkit.hpp"
#include "protoem/instenc.hpp"
#include "protoem/matcher.hpp"
#include "protoem/protobank.hpp"
#include "protoem/serialize.hpp"
#include "protoem/taxonomy.hpp"
#include "protoem/textenc.hpp"

namespace protoem {

constexpr int kHeadGroup = 0;
constexpr int kEncoderGroup = 1;

// The assembled framework: prototype encoder (connotation + interdependence
// components), instance encoder, and matching heads. Variant flags in the
// config decide the wiring at construction time.
class ProtoEmModel {
 public:
  ProtoEmModel(const ModelConfig& cfg, const DependencyGraph& graph, Taxonomy tax = Taxonomy())
      : cfg_(cfg), tax_(std::move(tax)), graph_(graph) {
    config_validate(cfg_);
    const int n = tax_.num_nodes();
    Rng root(cfg_.seed);

    EncoderConfig ec;
    ec.dim = cfg_.dim;
    ec.max_window = cfg_.max_window;
    ec.mode = cfg_.encoder;
    ec.weights_path = cfg_.encoder_weights;
    ec.layers = cfg_.encoder_layers;
    ec.vocab_buckets = cfg_.vocab_buckets;
    ec.subword_chunk = cfg_.subword_chunk;
    ec.mask_symbol = cfg_.mask_symbol;
    ec.init_seed = cfg_.seed;

    inst_enc_ = TextEncoder(ec, params_, "inst_enc", kEncoderGroup, true);
    if (cfg_.arch == "one_plm") {
      proto_enc_ = &inst_enc_;  // one fine-tuned encoder on both sides
    } else {
      // Default wiring freezes the prototype-side encoder (the stop-gradient
      // boundary); two_plm fine-tunes it as a separate copy.
      const bool proto_trainable = cfg_.arch == "two_plm";
      proto_enc_storage_ =
          std::make_unique<TextEncoder>(ec, params_, "proto_enc", kEncoderGroup, proto_trainable);
      proto_enc_ = proto_enc_storage_.get();
    }
    if (ec.mode == "pretrained") {
      auto tensors = tensorio::load(ec.weights_path);
      inst_enc_.load_weights(params_, "inst_enc", tensors);
      if (proto_enc_storage_) proto_enc_storage_->load_weights(params_, "proto_enc", tensors);
    }

    conn_ = make_connotation_params(params_, "conn", cfg_.dim, root.child("init/conn"),
                                    cfg_.dropout, cfg_.tie_context, kHeadGroup);
    inst_params_ = make_instance_params(params_, "inst", cfg_.dim, cfg_.fnn_depth,
                                        root.child("init/inst"), cfg_.dropout, kHeadGroup);
    if (cfg_.arch == "coref_ind")
      coref_params_ = make_instance_params(params_, "coref_inst", cfg_.dim, cfg_.fnn_depth,
                                           root.child("init/coref_inst"), cfg_.dropout,
                                           kHeadGroup);

    if (cfg_.prototypes == "random") {
      Rng bank_rng = root.child("init/bank");
      bank_param_ = &params_.add("prototype_bank", bank_rng.gaussian(n, cfg_.dim, 0.02),
                                 kHeadGroup, true);
    }

    if (use_gcn()) {
      gcn_ = make_gcn_params(params_, "gcn", cfg_.dim, cfg_.gcn_layers, root.child("init/gcn"),
                             kHeadGroup);
      Mat a = adjacency_init();
      if (cfg_.graph == "learned") {
        graph_param_ = &params_.add("graph_a", a, kHeadGroup, true);
      } else {
        a_norm_ = a;
      }
    }
    node_examples_.resize(static_cast<std::size_t>(n));
  }

  ProtoEmModel(const ProtoEmModel&) = delete;
  ProtoEmModel& operator=(const ProtoEmModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const Taxonomy& taxonomy() const { return tax_; }
  const DependencyGraph& graph() const { return graph_; }
  ad::ParamSet& params() { return params_; }
  const TextEncoder& instance_encoder() const { return inst_enc_; }
  const TextEncoder& prototype_encoder() const { return *proto_enc_; }

  std::array<TaskHeadConfig, 4> heads() const {
    std::array<TaskHeadConfig, 4> out;
    auto lambda = cfg_.lambdas();
    for (Task t : kAllTasks) {
      auto [b, e] = tax_.task_block(t);
      out[static_cast<std::size_t>(t)] =
          TaskHeadConfig{t, b, e - b, lambda[static_cast<std::size_t>(t)]};
    }
    return out;
  }

  bool use_gcn() const { return cfg_.graph != "off" && cfg_.gcn_layers > 0; }
  bool prototype_encoder_trainable() const {
    return cfg_.arch == "two_plm" || cfg_.arch == "one_plm";
  }

  // Example selection happens once per run; prototype example reps are
  // re-cached per epoch (a no-op refresh while the encoder stays frozen).
  void select_examples_from(const Corpus& corpus) {
    if (cfg_.prototypes == "random") return;  // bank rows never see examples
    const SelectionStrategy strategy = selection_from_name(cfg_.selection);
    for (int node = 0; node < tax_.num_nodes(); ++node) {
      auto& slot = node_examples_[static_cast<std::size_t>(node)];
      slot.examples.clear();
      slot.reps.clear();
      if (tax_.node_label(node) == "None") continue;
      slot.examples = select_examples(corpus, tax_, node, cfg_.k_examples, strategy, cfg_.seed,
                                      cfg_.max_window - 2);
      if (slot.examples.empty())
        throw DataError("no examples available for label " + tax_.node_name(node));
      for (auto& ex : slot.examples) fit_example(ex);
    }
    examples_selected_ = true;
    refresh_example_reps();
  }

  void refresh_example_reps() {
    if (cfg_.prototypes == "random" || prototype_encoder_trainable()) return;
    for (auto& slot : node_examples_) {
      slot.reps.clear();
      for (const auto& ex : slot.examples) {
        ad::Tape tape;
        CachedReps r;
        ad::Var tokens = proto_enc_->encode_words(tape, ex.text);
        r.e1 = pool_event(tape, tokens, ex.e1_start, ex.e1_end).val();
        r.e2 = pool_event(tape, tokens, ex.e2_start, ex.e2_end).val();
        auto masked = mask_events(ex.text, ex.e1_start, ex.e1_end, ex.e2_start, ex.e2_end,
                                  proto_enc_->tokenizer().mask_symbol());
        ad::Var masked_tokens = proto_enc_->encode_words(tape, masked);
        r.m1 = pool_event(tape, masked_tokens, ex.e1_start, ex.e1_end).val();
        r.m2 = pool_event(tape, masked_tokens, ex.e2_start, ex.e2_end).val();
        slot.reps.push_back(std::move(r));
      }
    }
  }

  struct BankVars {
    ad::Var h_p;
    ad::Var h_tilde;
  };

  // [OP] build_prototypes on the given tape.
  BankVars build_bank(ad::Tape& tape, bool training = false, Rng* rng = nullptr) {
    ad::Var h_p;
    if (cfg_.prototypes == "random") {
      h_p = tape.param(*bank_param_);
    } else {
      if (!examples_selected_) throw DataError("prototype examples have not been selected");
      const PrototypeVariant variant = prototype_variant_from_name(cfg_.prototypes);
      std::vector<ad::Var> rows;
      for (int node = 0; node < tax_.num_nodes(); ++node) {
        const auto& slot = node_examples_[static_cast<std::size_t>(node)];
        if (tax_.node_label(node) == "None") {
          rows.push_back(build_none_prototype(tape, *proto_enc_, conn_, training, rng));
          continue;
        }
        std::vector<ExampleReps> reps;
        if (prototype_encoder_trainable()) {
          for (const auto& ex : slot.examples) reps.push_back(encode_example(tape, ex));
        } else {
          for (const auto& r : slot.reps)
            reps.push_back(ExampleReps{tape.constant(r.e1), tape.constant(r.e2),
                                       tape.constant(r.m1), tape.constant(r.m2)});
        }
        if (reps.empty()) throw DataError("no examples available for label " + tax_.node_name(node));
        rows.push_back(prototype_row(tape, reps, conn_, variant, training, rng));
      }
      h_p = tape.stack_rows(rows);
    }
    ad::Var h_tilde = h_p;
    if (use_gcn()) {
      ad::Var a = graph_param_ != nullptr
                      ? tape.cwise_mul(tape.param(*graph_param_), tape.constant(offdiag_mask()))
                      : tape.constant(a_norm_);
      h_tilde = apply_gcn(tape, h_p, a, gcn_);
    }
    return {h_p, h_tilde};
  }

  PrototypeBank snapshot_bank() {
    // A checkpoint loaded without a corpus has no example cache; its stored
    // bank stands in so predict/save keep working.
    if (cfg_.prototypes != "random" && !examples_selected_) {
      if (stored_bank_.has_value()) return *stored_bank_;
      throw DataError("no prototype bank available: select examples or load a checkpoint");
    }
    ad::Tape tape;
    BankVars bank = build_bank(tape, false, nullptr);
    PrototypeBank out;
    for (int i = 0; i < tax_.num_nodes(); ++i) out.labels.push_back(tax_.node_name(i));
    out.h_p = bank.h_p.val();
    out.h_p_tilde = bank.h_tilde.val();
    return out;
  }

  struct BatchLoss {
    ad::Var joint;
    std::array<double, 4> task_losses = {0, 0, 0, 0};
    std::size_t num_pairs = 0;
  };

  BatchLoss batch_loss(ad::Tape& tape, const std::vector<const Document*>& docs, bool training,
                       Rng& rng) {
    BankVars bank = build_bank(tape, training, &rng);
    std::vector<LabeledPair> all_pairs;
    std::vector<ad::Var> x_parts, xc_parts;
    for (const Document* doc : docs) {
      auto pairs = enumerate_pairs(*doc, tax_);
      if (pairs.empty()) continue;
      ad::Var tokens = encode_document(tape, *doc, inst_enc_);
      x_parts.push_back(
          encode_instances(tape, *doc, tokens, pairs, inst_params_, training, &rng));
      if (coref_params_.has_value())
        xc_parts.push_back(
            encode_instances(tape, *doc, tokens, pairs, *coref_params_, training, &rng));
      all_pairs.insert(all_pairs.end(), pairs.begin(), pairs.end());
    }
    BatchLoss out;
    out.num_pairs = all_pairs.size();
    if (all_pairs.empty()) {
      out.joint = tape.constant(Mat::Zero(1, 1));
      return out;
    }
    ad::Var x = tape.stack_rows(x_parts);
    ad::Var xc = coref_params_.has_value() ? tape.stack_rows(xc_parts) : x;

    const bool mean_reduce = cfg_.loss_reduction == "mean";
    ad::Var joint;
    for (Task t : kAllTasks) {
      const auto head = heads()[static_cast<std::size_t>(t)];
      std::vector<Eigen::Index> kept = subsample_for_task(all_pairs, t, training, rng);
      if (kept.empty()) continue;
      std::vector<int> gold;
      gold.reserve(kept.size());
      for (Eigen::Index i : kept)
        gold.push_back(all_pairs[static_cast<std::size_t>(i)].label(t));
      ad::Var x_task = t == Task::Coreference ? xc : x;
      if (kept.size() != all_pairs.size()) x_task = tape.gather_rows(x_task, kept);
      ad::Var logits = task_logits(tape, x_task, bank.h_tilde, head);
      ad::Var loss = tape.cross_entropy_with_logits(logits, std::move(gold), mean_reduce);
      out.task_losses[static_cast<std::size_t>(t)] = loss.val()(0, 0);
      ad::Var weighted = tape.scale(loss, head.lambda);
      joint = joint.valid() ? tape.add(joint, weighted) : weighted;
    }
    if (!joint.valid()) joint = tape.constant(Mat::Zero(1, 1));
    out.joint = joint;
    return out;
  }

  // Per-pair inference output.
  struct PairPrediction {
    std::string src, dst;
    std::array<int, 4> argmax = {0, 0, 0, 0};
    std::array<Vec, 4> probs;
    std::array<int, 4> gold = {0, 0, 0, 0};
  };
  struct DocPredictions {
    std::string doc_id;
    std::vector<std::string> mentions;
    std::vector<PairPrediction> pairs;
  };

  std::vector<DocPredictions> predict(const Corpus& corpus) {
    const Mat bank = inference_bank();
    std::vector<DocPredictions> out;
    const auto head_cfg = heads();
    for (const auto& doc : corpus.docs) {
      DocPredictions dp;
      dp.doc_id = doc.doc_id;
      for (const auto& m : doc.mentions) dp.mentions.push_back(m.mention_id);
      auto pairs = enumerate_pairs(doc, tax_);
      if (!pairs.empty()) {
        ad::Tape tape;
        ad::Var tokens = encode_document(tape, doc, inst_enc_);
        Mat x = encode_instances(tape, doc, tokens, pairs, inst_params_, false, nullptr).val();
        Mat xc = coref_params_.has_value()
                     ? encode_instances(tape, doc, tokens, pairs, *coref_params_, false, nullptr)
                           .val()
                     : x;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          PairPrediction pp;
          pp.src = pairs[i].src;
          pp.dst = pairs[i].dst;
          pp.gold = pairs[i].labels;
          for (Task t : kAllTasks) {
            const auto& h = head_cfg[static_cast<std::size_t>(t)];
            const Mat rows = bank.middleRows(h.bank_row_begin, h.num_labels);
            const Mat& src_mat = t == Task::Coreference ? xc : x;
            Vec p = probabilities(src_mat.row(static_cast<Eigen::Index>(i)), rows);
            pp.argmax[static_cast<std::size_t>(t)] = predict_label(p);
            pp.probs[static_cast<std::size_t>(t)] = std::move(p);
          }
          dp.pairs.push_back(std::move(pp));
        }
      }
      out.push_back(std::move(dp));
    }
    return out;
  }

  // Checkpoint layout: config.json, graph.json, weights.bin, bank.bin.
  void save(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
      std::ofstream os(dir + "/config.json");
      os << config_to_json(cfg_).dump(2) << "\n";
    }
    {
      std::ofstream os(dir + "/graph.json");
      os << graph_to_json(graph_).dump() << "\n";
    }
    tensorio::save_params(dir + "/weights.bin", params_);
    PrototypeBank bank = snapshot_bank();
    tensorio::save(dir + "/bank.bin", {{"h_p", &bank.h_p}, {"h_p_tilde", &bank.h_p_tilde}});
  }

  static std::unique_ptr<ProtoEmModel> load(const std::string& dir) {
    std::ifstream cfg_in(dir + "/config.json");
    if (!cfg_in) throw DataError("checkpoint missing config.json: " + dir);
    nlohmann::json cfg_json = nlohmann::json::parse(cfg_in);
    std::ifstream graph_in(dir + "/graph.json");
    if (!graph_in) throw DataError("checkpoint missing graph.json: " + dir);
    DependencyGraph graph = graph_from_json(nlohmann::json::parse(graph_in));
    auto model = std::make_unique<ProtoEmModel>(config_from_json(cfg_json), graph);
    tensorio::load_params(dir + "/weights.bin", model->params_);
    auto bank = tensorio::load(dir + "/bank.bin");
    PrototypeBank pb;
    for (int i = 0; i < model->tax_.num_nodes(); ++i)
      pb.labels.push_back(model->tax_.node_name(i));
    pb.h_p = bank.at("h_p");
    pb.h_p_tilde = bank.at("h_p_tilde");
    model->stored_bank_ = std::move(pb);
    return model;
  }

  bool has_examples() const { return examples_selected_; }
  const std::vector<Example>& examples_for(int node) const {
    return node_examples_[static_cast<std::size_t>(node)].examples;
  }

  Mat inference_bank() { return snapshot_bank().h_p_tilde; }

 private:
  struct CachedReps {
    Mat e1, e2, m1, m2;
  };
  struct NodeExamples {
    std::vector<Example> examples;
    std::vector<CachedReps> reps;
  };

  Mat adjacency_init() const {
    if (cfg_.graph == "uniform") return uniform_graph(tax_).a_norm;
    if (graph_.a_norm.rows() != tax_.num_nodes())
      throw DataError("dependency graph is not normalized for " +
                      std::to_string(tax_.num_nodes()) + " labels");
    return graph_.a_norm;
  }

  Mat offdiag_mask() const {
    const int n = tax_.num_nodes();
    Mat m = Mat::Ones(n, n);
    m.diagonal().setZero();
    return m;
  }

  void fit_example(Example& ex) const {
    const auto& tok = proto_enc_->tokenizer();
    const int budget = cfg_.max_window - 2;
    auto pieces = [&] {
      int n = 0;
      for (const auto& w : ex.text) n += tok.piece_count(w);
      return n;
    };
    while (pieces() > budget) {
      const std::size_t before = ex.text.size();
      cap_example(ex, static_cast<int>(ex.text.size()) - 1);
      if (ex.text.size() == before)
        throw DataError("example spans exceed the encoder window in document " + ex.doc_id);
    }
  }

  ExampleReps encode_example(ad::Tape& tape, const Example& ex) {
    ExampleReps r;
    ad::Var tokens = proto_enc_->encode_words(tape, ex.text);
    r.e1 = pool_event(tape, tokens, ex.e1_start, ex.e1_end);
    r.e2 = pool_event(tape, tokens, ex.e2_start, ex.e2_end);
    auto masked = mask_events(ex.text, ex.e1_start, ex.e1_end, ex.e2_start, ex.e2_end,
                              proto_enc_->tokenizer().mask_symbol());
    ad::Var masked_tokens = proto_enc_->encode_words(tape, masked);
    r.m1 = pool_event(tape, masked_tokens, ex.e1_start, ex.e1_end);
    r.m2 = pool_event(tape, masked_tokens, ex.e2_start, ex.e2_end);
    return r;
  }

  std::vector<Eigen::Index> subsample_for_task(const std::vector<LabeledPair>& pairs, Task t,
                                               bool training, Rng& rng) const {
    std::vector<Eigen::Index> kept;
    kept.reserve(pairs.size());
    if (!training || cfg_.neg_ratio <= 0.0) {
      for (std::size_t i = 0; i < pairs.size(); ++i)
        kept.push_back(static_cast<Eigen::Index>(i));
      return kept;
    }
    std::vector<Eigen::Index> pos, neg;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (pairs[i].label(t) != 0)
        pos.push_back(static_cast<Eigen::Index>(i));
      else
        neg.push_back(static_cast<Eigen::Index>(i));
    }
    const auto allowed = static_cast<std::size_t>(
        std::ceil(cfg_.neg_ratio * static_cast<double>(std::max<std::size_t>(1, pos.size()))));
    if (neg.size() > allowed) {
      rng.shuffle(neg);
      neg.resize(allowed);
    }
    kept = std::move(pos);
    kept.insert(kept.end(), neg.begin(), neg.end());
    std::sort(kept.begin(), kept.end());
    return kept;
  }

  static int predict_label(const Vec& probs) { return protoem::predict(probs); }

  ModelConfig cfg_;
  Taxonomy tax_;
  DependencyGraph graph_;
  ad::ParamSet params_;
  TextEncoder inst_enc_;
  std::unique_ptr<TextEncoder> proto_enc_storage_;
  TextEncoder* proto_enc_ = nullptr;
  ConnotationParams conn_;
  InstanceParams inst_params_;
  std::optional<InstanceParams> coref_params_;
  GcnParams gcn_;
  ad::Parameter* bank_param_ = nullptr;
  ad::Parameter* graph_param_ = nullptr;
  Mat a_norm_;
  std::vector<NodeExamples> node_examples_;
  bool examples_selected_ = false;
  std::optional<PrototypeBank> stored_bank_;
};

// [OP] apply_variant: the config's variant flags decide the constructed
// wiring; contradictions surface as config errors.
inline std::unique_ptr<ProtoEmModel> apply_variant(const ModelConfig& cfg,
                                                   const DependencyGraph& graph) {
  return std::make_unique<ProtoEmModel>(cfg, graph);
}

// Scores a prediction set against gold annotations: pooled micro P/R/F1 for
// the directional tasks, clustering metrics for coreference.
inline MetricsReport score_predictions(const Corpus& corpus,
                                       const std::vector<ProtoEmModel::DocPredictions>& preds,
                                       const Taxonomy& tax = Taxonomy()) {
  std::array<std::vector<int>, 4> pred_labels, gold_labels;
  PairCounts muc_acc, b3_acc, ceafe_acc;
  BlancCounts blanc_acc;
  for (const auto& dp : preds) {
    const Document* doc = corpus.find(dp.doc_id);
    if (doc == nullptr) throw DataError("predictions reference unknown document " + dp.doc_id);
    std::vector<std::pair<std::string, std::string>> pred_coref, gold_coref;
    for (const auto& pp : dp.pairs) {
      for (Task t : kAllTasks) {
        pred_labels[static_cast<std::size_t>(t)].push_back(
            pp.argmax[static_cast<std::size_t>(t)]);
        gold_labels[static_cast<std::size_t>(t)].push_back(pp.gold[static_cast<std::size_t>(t)]);
      }
      if (pp.argmax[static_cast<std::size_t>(Task::Coreference)] != 0)
        pred_coref.emplace_back(pp.src, pp.dst);
    }
    for (const auto& [pair, label] : doc->gold.task(Task::Coreference)) {
      (void)label;
      gold_coref.push_back(pair);
    }
    Clustering pred_clusters = cluster_from_pairs(dp.mentions, pred_coref);
    Clustering gold_clusters = cluster_from_pairs(dp.mentions, gold_coref);
    muc_acc += muc_counts(pred_clusters, gold_clusters);
    b3_acc += b_cubed_counts(pred_clusters, gold_clusters);
    ceafe_acc += ceaf_e_counts(pred_clusters, gold_clusters);
    blanc_acc += blanc_counts(pred_clusters, gold_clusters);
  }
  auto task_prf = [&](Task t) {
    return micro_prf(pred_labels[static_cast<std::size_t>(t)],
                     gold_labels[static_cast<std::size_t>(t)]);
  };
  (void)tax;
  return overall(task_prf(Task::Temporal), task_prf(Task::Causal), task_prf(Task::Subevent),
                 muc_acc.finalize(), b3_acc.finalize(), ceafe_acc.finalize(),
                 blanc_acc.finalize());
}

}  // namespace protoem
