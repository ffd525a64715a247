#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "protoem/autodiff.hpp"
#include "protoem/common.hpp"
#include "protoem/corpus.hpp"

namespace protoem {

struct EncoderConfig {
  int dim = 768;
  int max_window = 512;  // token budget per window, boundary markers included
  std::string mode = "tiny-random";  // tiny-random | pretrained
  std::string weights_path;          // pretrained weight file
  int layers = 2;
  int ff_mult = 4;
  int vocab_buckets = 4096;
  int subword_chunk = 16;  // max characters per subword piece
  std::string mask_symbol = "[MASK]";
  std::uint64_t init_seed = 1;
};

// Hashing subword tokenizer: words split into fixed-size character chunks,
// each mapped to a bucket id. Ids 0..2 are reserved for [CLS]/[SEP]/[MASK].
class SubwordTokenizer {
 public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kMask = 2;
  static constexpr int kReserved = 3;

  SubwordTokenizer(int vocab_buckets, int chunk, std::string mask_symbol)
      : buckets_(vocab_buckets), chunk_(std::max(1, chunk)), mask_symbol_(std::move(mask_symbol)) {}

  int vocab_size() const { return kReserved + buckets_; }
  const std::string& mask_symbol() const { return mask_symbol_; }

  std::vector<int> pieces(const std::string& word) const {
    if (word == mask_symbol_) return {kMask};
    std::vector<int> out;
    if (word.empty()) {
      out.push_back(bucket(""));
      return out;
    }
    for (std::size_t at = 0; at < word.size(); at += static_cast<std::size_t>(chunk_))
      out.push_back(bucket(word.substr(at, static_cast<std::size_t>(chunk_))));
    return out;
  }

  int piece_count(const std::string& word) const {
    if (word == mask_symbol_ || word.size() <= static_cast<std::size_t>(chunk_)) return 1;
    return static_cast<int>((word.size() + static_cast<std::size_t>(chunk_) - 1) /
                            static_cast<std::size_t>(chunk_));
  }

 private:
  int bucket(const std::string& piece) const {
    return kReserved + static_cast<int>(hash_str(piece) % static_cast<std::uint64_t>(buckets_));
  }
  int buckets_;
  int chunk_;
  std::string mask_symbol_;
};

// Sentence-packing plan. Normally a window holds whole sentences; a sentence
// whose subword expansion exceeds the budget is hard-split at word
// boundaries, and the plan records a warning.
struct WindowPlan {
  struct Segment {
    int sent_idx;
    int word_begin;  // token interval within the sentence, half open
    int word_end;
  };
  struct Window {
    std::vector<Segment> segments;
    int subword_count = 0;
  };
  std::vector<Window> windows;
  std::vector<std::string> warnings;

  int window_of_sentence(int sent_idx) const {
    for (std::size_t w = 0; w < windows.size(); ++w)
      for (const auto& seg : windows[w].segments)
        if (seg.sent_idx == sent_idx) return static_cast<int>(w);
    return -1;
  }
};

// [OP] split_windows: greedy in-order sentence packing under
// max_window - 2 subwords (room for the boundary markers).
inline WindowPlan split_windows(const Document& doc, int max_window,
                                const SubwordTokenizer& tok) {
  if (max_window <= 2) throw ConfigError("split_windows: window budget too small");
  const int budget = max_window - 2;
  WindowPlan plan;
  WindowPlan::Window current;
  auto flush = [&]() {
    if (!current.segments.empty()) {
      plan.windows.push_back(std::move(current));
      current = WindowPlan::Window{};
    }
  };
  for (int s = 0; s < static_cast<int>(doc.sentences.size()); ++s) {
    const auto& sent = doc.sentences[static_cast<std::size_t>(s)];
    int sent_subwords = 0;
    for (const auto& w : sent) sent_subwords += tok.piece_count(w);
    if (sent_subwords <= budget) {
      if (current.subword_count + sent_subwords > budget) flush();
      current.segments.push_back({s, 0, static_cast<int>(sent.size())});
      current.subword_count += sent_subwords;
      continue;
    }
    // Oversized sentence: close the open window, then emit budget-sized
    // chunks split at word boundaries.
    flush();
    plan.warnings.push_back("document " + doc.doc_id + ": sentence " + std::to_string(s) +
                            " exceeds the window budget (" + std::to_string(sent_subwords) +
                            " > " + std::to_string(budget) + "), hard-split");
    int begin = 0;
    int fill = 0;
    for (int wdx = 0; wdx < static_cast<int>(sent.size()); ++wdx) {
      int pieces = tok.piece_count(sent[static_cast<std::size_t>(wdx)]);
      if (pieces > budget)
        throw DataError("document " + doc.doc_id + ": single word exceeds the window budget");
      if (fill + pieces > budget) {
        plan.windows.push_back({{{s, begin, wdx}}, fill});
        begin = wdx;
        fill = 0;
      }
      fill += pieces;
    }
    if (begin < static_cast<int>(sent.size())) plan.windows.push_back({{{s, begin, static_cast<int>(sent.size())}}, fill});
  }
  flush();
  return plan;
}

// Transformer text encoder; tiny-random mode draws fixed-seed weights,
// pretrained mode loads the same tensor layout from a weight file.
class TextEncoder {
 public:
  TextEncoder() = default;

  // Registers parameters into `params` under `prefix`.
  TextEncoder(const EncoderConfig& cfg, ad::ParamSet& params, const std::string& prefix,
              int group, bool trainable)
      : cfg_(cfg), tok_(cfg.vocab_buckets, cfg.subword_chunk, cfg.mask_symbol) {
    // Weight init depends on the seed only, so two encoder instances start
    // from identical weights, like two copies of one pretrained model.
    Rng rng = Rng(cfg.init_seed).child("textenc/weights");
    const int d = cfg.dim;
    auto add = [&](const std::string& name, int rows, int cols, double stddev) {
      Mat init = stddev > 0.0 ? rng.gaussian(rows, cols, stddev) : Mat::Zero(rows, cols);
      return &params.add(prefix + "." + name, std::move(init), group, trainable);
    };
    tok_emb_ = add("tok_emb", tok_.vocab_size(), d, 0.02);
    pos_emb_ = add("pos_emb", cfg.max_window, d, 0.02);
    layers_.resize(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
      auto& L = layers_[static_cast<std::size_t>(l)];
      const std::string p = "layer" + std::to_string(l);
      L.wq = add(p + ".wq", d, d, 0.02);
      L.bq = add(p + ".bq", 1, d, 0.0);
      L.wk = add(p + ".wk", d, d, 0.02);
      L.bk = add(p + ".bk", 1, d, 0.0);
      L.wv = add(p + ".wv", d, d, 0.02);
      L.bv = add(p + ".bv", 1, d, 0.0);
      L.wo = add(p + ".wo", d, d, 0.02);
      L.bo = add(p + ".bo", 1, d, 0.0);
      L.ln1_g = &params.add(prefix + "." + p + ".ln1_g", Mat::Ones(1, d), group, trainable);
      L.ln1_b = add(p + ".ln1_b", 1, d, 0.0);
      L.w1 = add(p + ".ff1", d * cfg.ff_mult, d, 0.02);
      L.b1 = add(p + ".ff1_b", 1, d * cfg.ff_mult, 0.0);
      L.w2 = add(p + ".ff2", d, d * cfg.ff_mult, 0.02);
      L.b2 = add(p + ".ff2_b", 1, d, 0.0);
      L.ln2_g = &params.add(prefix + "." + p + ".ln2_g", Mat::Ones(1, d), group, trainable);
      L.ln2_b = add(p + ".ln2_b", 1, d, 0.0);
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  const SubwordTokenizer& tokenizer() const { return tok_; }

  // Pretrained mode: overwrite this encoder's tensors from a weight file
  // whose entries are unprefixed ("tok_emb", "layer0.wq", ...).
  void load_weights(ad::ParamSet& params, const std::string& prefix,
                    const std::map<std::string, Mat>& tensors) {
    for (auto& p : params) {
      if (p.name.rfind(prefix + ".", 0) != 0) continue;
      const std::string key = p.name.substr(prefix.size() + 1);
      auto it = tensors.find(key);
      if (it == tensors.end()) throw DataError("encoder weight file missing tensor: " + key);
      if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
        throw DataError("encoder weight shape mismatch for " + key);
      p.value = it->second;
    }
  }

  // Forward over one window's subword ids, boundary markers added here.
  // Returns a (2 + #ids) x dim matrix of contextual vectors.
  ad::Var forward_window(ad::Tape& tape, const std::vector<int>& ids) const {
    std::vector<Eigen::Index> full;
    full.reserve(ids.size() + 2);
    full.push_back(SubwordTokenizer::kCls);
    for (int id : ids) full.push_back(id);
    full.push_back(SubwordTokenizer::kSep);
    if (static_cast<int>(full.size()) > cfg_.max_window)
      throw DataError("encoder window overflow: " + std::to_string(full.size()) + " > " +
                      std::to_string(cfg_.max_window));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.dim));

    ad::Var emb = tape.param(*tok_emb_);
    ad::Var pos = tape.param(*pos_emb_);
    ad::Var x = tape.add(tape.gather_rows(emb, full),
                         tape.rows_range(pos, 0, static_cast<Eigen::Index>(full.size())));
    for (const auto& L : layers_) {
      auto lin = [&](ad::Var in, ad::Parameter* w, ad::Parameter* b) {
        return tape.add_row_broadcast(tape.matmul(in, tape.transpose(tape.param(*w))),
                                      tape.param(*b));
      };
      ad::Var q = lin(x, L.wq, L.bq);
      ad::Var k = lin(x, L.wk, L.bk);
      ad::Var v = lin(x, L.wv, L.bv);
      ad::Var attn = tape.softmax_rows(tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_d));
      ad::Var ctx = lin(tape.matmul(attn, v), L.wo, L.bo);
      x = tape.layer_norm_rows(tape.add(x, ctx), tape.param(*L.ln1_g), tape.param(*L.ln1_b));
      ad::Var f = tape.add_row_broadcast(
          tape.matmul(tape.relu(lin(x, L.w1, L.b1)), tape.transpose(tape.param(*L.w2))),
          tape.param(*L.b2));
      x = tape.layer_norm_rows(tape.add(x, f), tape.param(*L.ln2_g), tape.param(*L.ln2_b));
    }
    return x;
  }

  // Encode a word sequence in one window; rows are word vectors (mean of
  // each word's subword vectors).
  ad::Var encode_words(ad::Tape& tape, const std::vector<std::string>& words) const {
    std::vector<int> ids;
    std::vector<std::pair<int, int>> word_spans;  // subword interval per word
    for (const auto& w : words) {
      int at = static_cast<int>(ids.size());
      for (int id : tok_.pieces(w)) ids.push_back(id);
      word_spans.emplace_back(at, static_cast<int>(ids.size()));
    }
    ad::Var out = forward_window(tape, ids);
    Mat pool = Mat::Zero(static_cast<Eigen::Index>(words.size()), out.val().rows());
    for (std::size_t wdx = 0; wdx < word_spans.size(); ++wdx) {
      auto [b, e] = word_spans[wdx];
      const double inv = 1.0 / static_cast<double>(e - b);
      for (int i = b; i < e; ++i)
        pool(static_cast<Eigen::Index>(wdx), 1 + i) = inv;  // +1 skips [CLS]
    }
    return tape.matmul(tape.constant(std::move(pool)), out);
  }

 private:
  struct Layer {
    ad::Parameter *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    ad::Parameter *ln1_g, *ln1_b, *w1, *b1, *w2, *b2, *ln2_g, *ln2_b;
  };
  EncoderConfig cfg_;
  SubwordTokenizer tok_{4096, 16, "[MASK]"};
  ad::Parameter* tok_emb_ = nullptr;
  ad::Parameter* pos_emb_ = nullptr;
  std::vector<Layer> layers_;
};

// [OP] encode_document: sliding-window encoding; every original token gets
// exactly one dim-width vector from the window containing it.
inline ad::Var encode_document(ad::Tape& tape, const Document& doc, const TextEncoder& enc,
                               const WindowPlan& plan) {
  std::vector<ad::Var> parts;
  for (std::size_t w = 0; w < plan.windows.size(); ++w) {
    const auto& win = plan.windows[w];
    std::vector<std::string> words;
    for (const auto& seg : win.segments) {
      const auto& sent = doc.sentences[static_cast<std::size_t>(seg.sent_idx)];
      for (int i = seg.word_begin; i < seg.word_end; ++i)
        words.push_back(sent[static_cast<std::size_t>(i)]);
    }
    if (words.empty()) continue;
    try {
      parts.push_back(enc.encode_words(tape, words));
    } catch (const DataError& e) {
      throw DataError("document " + doc.doc_id + " window " + std::to_string(w) + ": " +
                      e.what());
    }
  }
  if (parts.empty()) return tape.constant(Mat::Zero(0, enc.config().dim));
  // Window plans are in-order partitions, so stacking restores document order.
  return tape.stack_rows(parts);
}

inline ad::Var encode_document(ad::Tape& tape, const Document& doc, const TextEncoder& enc) {
  WindowPlan plan = split_windows(doc, enc.config().max_window, enc.tokenizer());
  return encode_document(tape, doc, enc, plan);
}

// [OP] pool_event: arithmetic mean of the span's token vectors.
inline ad::Var pool_event(ad::Tape& tape, ad::Var token_vectors, int start, int end) {
  if (start >= end) throw DataError("pool_event: empty span");
  if (start < 0 || end > token_vectors.val().rows())
    throw DataError("pool_event: span out of range");
  return tape.mean_rows(tape.rows_range(token_vectors, start, end - start));
}

inline Vec pool_event(const Mat& token_vectors, int start, int end) {
  ad::Tape tape;
  return pool_event(tape, tape.constant(token_vectors), start, end).val().row(0);
}

// [OP] mask_events: replace every token inside either span by the mask
// symbol; all other tokens and the sequence length are preserved.
inline std::vector<std::string> mask_events(const std::vector<std::string>& text, int s1_start,
                                            int s1_end, int s2_start, int s2_end,
                                            const std::string& mask_symbol) {
  auto check = [&](int b, int e) {
    if (b >= e) throw DataError("mask_events: empty span");
    if (b < 0 || e > static_cast<int>(text.size()))
      throw DataError("mask_events: span out of range");
  };
  check(s1_start, s1_end);
  check(s2_start, s2_end);
  if (s1_start < s2_end && s2_start < s1_end)
    throw DataError("mask_events: overlapping spans");
  std::vector<std::string> out = text;
  for (int i = s1_start; i < s1_end; ++i) out[static_cast<std::size_t>(i)] = mask_symbol;
  for (int i = s2_start; i < s2_end; ++i) out[static_cast<std::size_t>(i)] = mask_symbol;
  return out;
}

}  // namespace protoem
