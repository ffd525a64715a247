#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "protoem/common.hpp"
#include "protoem/config.hpp"
#include "protoem/corpus.hpp"
#include "protoem/depgraph.hpp"
#include "protoem/evalkit.hpp"
#include "protoem/model.hpp"

namespace protoem {

// Decoupled-weight-decay Adam over two parameter groups (encoder / heads)
// with linear warmup.
class AdamW {
 public:
  explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  int64_t steps() const { return t_; }

  double warmup_factor(int warmup_steps) const {
    if (warmup_steps <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(t_ + 1) / static_cast<double>(warmup_steps));
  }

  void step(ad::ParamSet& params, double lr_heads, double lr_encoder, double weight_decay,
            double lr_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& p : params) {
      if (!p.trainable) continue;
      State& s = state_[&p];
      if (s.m.size() == 0) {
        s.m = Mat::Zero(p.value.rows(), p.value.cols());
        s.v = Mat::Zero(p.value.rows(), p.value.cols());
      }
      const double lr = (p.group == kEncoderGroup ? lr_encoder : lr_heads) * lr_scale;
      s.m = beta1_ * s.m + (1.0 - beta1_) * p.grad;
      s.v = beta2_ * s.v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      Mat update = (s.m / bc1).cwiseQuotient(((s.v / bc2).cwiseSqrt().array() + eps_).matrix());
      p.value -= lr * (update + weight_decay * p.value);
    }
  }

 private:
  struct State {
    Mat m, v;
  };
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::unordered_map<const ad::Parameter*, State> state_;
};

inline double clip_global_norm(ad::ParamSet& params, double max_norm) {
  if (max_norm <= 0.0) return 0.0;
  double total = 0.0;
  for (const auto& p : params)
    if (p.trainable) total += p.grad.squaredNorm();
  const double norm = std::sqrt(total);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : params)
      if (p.trainable) p.grad *= scale;
  }
  return norm;
}

struct EpochLog {
  int epoch = 0;
  double joint_loss = 0.0;
  std::array<double, 4> task_losses = {0, 0, 0, 0};
  std::optional<double> valid_overall_f1;
  double lr_scale = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["joint_loss"] = joint_loss;
    for (Task t : kAllTasks)
      j[std::string("loss_") + task_name(t)] = task_losses[static_cast<std::size_t>(t)];
    if (valid_overall_f1) j["valid_overall_f1"] = *valid_overall_f1;
    j["lr_scale"] = lr_scale;
    return j;
  }
};

struct TrainResult {
  std::unique_ptr<ProtoEmModel> model;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_overall_f1 = 0.0;
};

// Builds the dependency graph a training run needs; graph=off/uniform paths
// work without gold co-occurrence statistics.
inline DependencyGraph graph_for_config(const ModelConfig& cfg, const Corpus& corpus,
                                        const Taxonomy& tax = Taxonomy()) {
  if (cfg.graph == "on" || cfg.graph == "learned")
    return normalize_graph(compute_cooccurrence(corpus, tax),
                           graph_norm_from_name(cfg.graph_norm));
  DependencyGraph g;
  const int n = tax.num_nodes();
  for (int i = 0; i < n; ++i) g.labels.push_back(tax.node_name(i));
  g.a_raw = Mat::Zero(n, n);
  g.a_norm = Mat::Zero(n, n);
  return g;
}

// [OP] train: joint multi-task loop with per-epoch prototype refresh and
// best-checkpoint selection on validation overall F1.
inline TrainResult train(const Corpus& train_corpus_in, const Corpus* valid_corpus,
                         const ModelConfig& cfg, const std::string& out_dir = "") {
  config_validate(cfg);
  Corpus sampled;
  const Corpus* train_corpus = &train_corpus_in;
  if (cfg.train_fraction < 1.0) {
    sampled = sample_low_resource(train_corpus_in, cfg.train_fraction, cfg.seed);
    train_corpus = &sampled;
  }
  if (train_corpus->docs.empty()) throw DataError("train: corpus is empty");

  const Taxonomy tax;
  DependencyGraph graph = graph_for_config(cfg, *train_corpus, tax);
  TrainResult result;
  result.model = apply_variant(cfg, graph);
  ProtoEmModel& model = *result.model;
  model.select_examples_from(*train_corpus);

  const bool has_out = !out_dir.empty();
  std::ofstream log_stream;
  if (has_out) {
    std::filesystem::create_directories(out_dir);
    log_stream.open(out_dir + "/log.jsonl");
  }

  Rng root(cfg.seed);
  AdamW opt;
  double best_f1 = -1.0;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    model.refresh_example_reps();
    std::vector<std::size_t> order(train_corpus->docs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root.child("shuffle/epoch" + std::to_string(epoch));
    shuffle_rng.shuffle(order);
    Rng step_rng = root.child("train/epoch" + std::to_string(epoch));

    double joint_sum = 0.0;
    std::array<double, 4> task_sums = {0, 0, 0, 0};
    std::size_t batches = 0;
    double last_lr_scale = 0.0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const Document*> batch;
      for (std::size_t i = at; i < std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size)); ++i)
        batch.push_back(&train_corpus->docs[order[i]]);

      ad::Tape tape;
      auto loss = model.batch_loss(tape, batch, true, step_rng);
      const double joint_value = loss.joint.val()(0, 0);
      if (!std::isfinite(joint_value)) {
        if (has_out) model.save(out_dir + "/last");
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch));
      }
      model.params().zero_grad();
      tape.backward(loss.joint);
      clip_global_norm(model.params(), cfg.grad_clip);
      const double lr_scale = opt.warmup_factor(cfg.warmup_steps);
      opt.step(model.params(), cfg.lr_heads, cfg.lr_encoder, cfg.weight_decay, lr_scale);
      last_lr_scale = lr_scale;

      joint_sum += joint_value;
      for (std::size_t k = 0; k < 4; ++k) task_sums[k] += loss.task_losses[k];
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.joint_loss = batches > 0 ? joint_sum / static_cast<double>(batches) : 0.0;
    for (std::size_t k = 0; k < 4; ++k)
      entry.task_losses[k] = batches > 0 ? task_sums[k] / static_cast<double>(batches) : 0.0;
    entry.lr_scale = last_lr_scale;

    if (valid_corpus != nullptr) {
      auto preds = model.predict(*valid_corpus);
      MetricsReport report = score_predictions(*valid_corpus, preds, tax);
      entry.valid_overall_f1 = report.overall_f1;
      if (report.overall_f1 > best_f1) {
        best_f1 = report.overall_f1;
        best_epoch = epoch;
        if (has_out) model.save(out_dir + "/best");
      }
    } else {
      best_epoch = epoch;
    }
    result.log.push_back(entry);
    if (log_stream) log_stream << entry.to_json().dump() << "\n";
  }

  if (has_out) {
    model.save(out_dir + "/last");
    if (valid_corpus == nullptr) model.save(out_dir + "/best");
    std::ofstream meta(out_dir + "/meta.json");
    nlohmann::json j;
    j["epochs"] = cfg.epochs;
    j["best_epoch"] = best_epoch;
    if (best_f1 >= 0.0) j["best_valid_overall_f1"] = best_f1;
    j["rng_state"] = root.state();
    meta << j.dump(2) << "\n";
  }
  result.best_epoch = best_epoch;
  result.best_overall_f1 = std::max(best_f1, 0.0);
  return result;
}

// [OP] evaluate_checkpoint.
inline MetricsReport evaluate_checkpoint(const std::string& checkpoint_dir, const Corpus& corpus) {
  auto model = ProtoEmModel::load(checkpoint_dir);
  auto preds = model->predict(corpus);
  return score_predictions(corpus, preds, model->taxonomy());
}

// Prediction dump: one line per (pair, task) with the argmax label and its
// probability.
inline void write_predictions(std::ostream& os,
                              const std::vector<ProtoEmModel::DocPredictions>& preds,
                              const Taxonomy& tax = Taxonomy()) {
  for (const auto& dp : preds) {
    for (const auto& pp : dp.pairs) {
      for (Task t : kAllTasks) {
        const int label = pp.argmax[static_cast<std::size_t>(t)];
        nlohmann::json j;
        j["doc_id"] = dp.doc_id;
        j["src"] = pp.src;
        j["dst"] = pp.dst;
        j["task"] = task_name(t);
        j["label"] = tax.task_labels(t)[static_cast<std::size_t>(label)];
        j["probability"] = pp.probs[static_cast<std::size_t>(t)](label);
        os << j.dump() << "\n";
      }
    }
  }
}

// Coreference clusters in submission-style form, one document per line.
inline void write_clusters(std::ostream& os,
                           const std::vector<ProtoEmModel::DocPredictions>& preds) {
  for (const auto& dp : preds) {
    std::vector<std::pair<std::string, std::string>> positive;
    for (const auto& pp : dp.pairs)
      if (pp.argmax[static_cast<std::size_t>(Task::Coreference)] != 0)
        positive.emplace_back(pp.src, pp.dst);
    Clustering clusters = cluster_from_pairs(dp.mentions, positive);
    nlohmann::json j;
    j["doc_id"] = dp.doc_id;
    j["clusters"] = clusters.clusters;
    os << j.dump() << "\n";
  }
}

// Mean and (sample) standard deviation across per-seed reports.
inline nlohmann::json aggregate_reports(const std::vector<MetricsReport>& reports) {
  auto collect = [&](auto&& get) {
    std::vector<double> xs;
    for (const auto& r : reports) xs.push_back(get(r));
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    if (xs.size() > 1) {
      for (double x : xs) var += (x - mean) * (x - mean);
      var /= static_cast<double>(xs.size() - 1);
    }
    return nlohmann::json{{"mean", mean}, {"std", std::sqrt(var)}};
  };
  if (reports.empty()) throw DataError("aggregate_reports: no reports");
  nlohmann::json j;
  j["runs"] = reports.size();
  j["temporal_f1"] = collect([](const MetricsReport& r) { return r.temporal.f1; });
  j["causal_f1"] = collect([](const MetricsReport& r) { return r.causal.f1; });
  j["subevent_f1"] = collect([](const MetricsReport& r) { return r.subevent.f1; });
  j["coreference_f1"] = collect([](const MetricsReport& r) { return r.coref_avg_f1; });
  j["overall_f1"] = collect([](const MetricsReport& r) { return r.overall_f1; });
  return j;
}

}  // namespace protoem
