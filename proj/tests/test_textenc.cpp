#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "protoem/serialize.hpp"
#include "protoem/textenc.hpp"
#include "support/test_support.hpp"

using namespace protoem;

namespace {

EncoderConfig tiny_config(int dim = 16, int max_window = 64) {
  EncoderConfig ec;
  ec.dim = dim;
  ec.max_window = max_window;
  ec.layers = 2;
  ec.vocab_buckets = 97;
  ec.subword_chunk = 4;
  ec.init_seed = 3;
  return ec;
}

Document doc_with_sentences(const std::vector<std::vector<std::string>>& sents) {
  Document d;
  d.doc_id = "t";
  d.sentences = sents;
  return d;
}

}  // namespace

TEST_CASE("subword tokenizer splits long words and reserves the mask id") {
  SubwordTokenizer tok(97, 4, "[MASK]");
  CHECK(tok.pieces("[MASK]") == std::vector<int>{SubwordTokenizer::kMask});
  CHECK(tok.piece_count("cat") == 1);
  CHECK(tok.piece_count("catfishing") == 3);  // 10 chars / 4-char chunks
  CHECK(tok.pieces("catfishing").size() == 3);
  // ids stay within [reserved, reserved + buckets)
  for (int id : tok.pieces("catfishing")) {
    CHECK(id >= SubwordTokenizer::kReserved);
    CHECK(id < tok.vocab_size());
  }
}

TEST_CASE("split_windows packs greedily: 10 x 100 subwords at budget 510 gives 5+5") {
  // single-char words expand to one subword each
  std::vector<std::vector<std::string>> sents;
  for (int s = 0; s < 10; ++s) sents.push_back(std::vector<std::string>(100, "w"));
  Document d = doc_with_sentences(sents);
  SubwordTokenizer tok(97, 4, "[MASK]");
  WindowPlan plan = split_windows(d, 510, tok);
  REQUIRE(plan.windows.size() == 2);
  CHECK(plan.windows[0].segments.size() == 5);
  CHECK(plan.windows[1].segments.size() == 5);
  CHECK(plan.windows[0].subword_count == 500);
  CHECK(plan.warnings.empty());
}

TEST_CASE("split_windows: short and empty documents") {
  SubwordTokenizer tok(97, 4, "[MASK]");
  Document d = doc_with_sentences({{"a", "b"}, {"c"}});
  WindowPlan plan = split_windows(d, 64, tok);
  CHECK(plan.windows.size() == 1);
  Document empty = doc_with_sentences({});
  CHECK(split_windows(empty, 64, tok).windows.empty());
}

TEST_CASE("oversized sentence is hard-split at word boundaries with a warning") {
  SubwordTokenizer tok(97, 4, "[MASK]");
  Document d = doc_with_sentences({std::vector<std::string>(25, "w"), {"x", "y"}});
  WindowPlan plan = split_windows(d, 12, tok);  // budget 10
  REQUIRE(plan.warnings.size() == 1);
  int covered = 0;
  for (const auto& w : plan.windows) {
    CHECK(w.subword_count <= 10);
    for (const auto& seg : w.segments) covered += seg.word_end - seg.word_begin;
  }
  CHECK(covered == 27);  // every word lands in exactly one window
}

TEST_CASE("encode_document: one vector per token, any window plan") {
  ad::ParamSet params;
  TextEncoder enc(tiny_config(12, 16), params, "enc", 0, false);
  Document d = doc_with_sentences({{"alpha", "beta", "gamma"},
                                   {"delta", "extra", "words", "here"},
                                   {"zeta", "eta"}});
  ad::Tape tape;
  ad::Var out = encode_document(tape, d, enc);
  CHECK(out.val().rows() == d.word_count());
  CHECK(out.val().cols() == 12);
  // forcing multiple windows must not change the output shape
  WindowPlan plan = split_windows(d, 8, enc.tokenizer());
  CHECK(plan.windows.size() >= 2);
  ad::Var out2 = encode_document(tape, d, enc, plan);
  CHECK(out2.val().rows() == d.word_count());
}

TEST_CASE("tiny-random encoding is deterministic under a fixed seed") {
  Document d = doc_with_sentences({{"alpha", "beta", "gamma"}});
  Mat first, second;
  {
    ad::ParamSet params;
    TextEncoder enc(tiny_config(), params, "enc", 0, false);
    ad::Tape tape;
    first = encode_document(tape, d, enc).val();
  }
  {
    ad::ParamSet params;
    TextEncoder enc(tiny_config(), params, "enc", 0, false);
    ad::Tape tape;
    second = encode_document(tape, d, enc).val();
  }
  CHECK((first - second).norm() == doctest::Approx(0.0));
}

TEST_CASE("pool_event: mean over the span") {
  ad::Tape tape;
  Mat rows(3, 2);
  rows << 0, 0, 2, 4, 4, 8;
  ad::Var v = tape.constant(rows);
  // span {(0,0),(2,4)} -> (1,2)
  Vec pooled = pool_event(rows, 0, 2);
  CHECK(pooled(0) == doctest::Approx(1.0));
  CHECK(pooled(1) == doctest::Approx(2.0));
  // identical vectors pool to themselves
  Mat same = Mat::Ones(4, 3) * 2.5;
  Vec p2 = pool_event(same, 0, 4);
  CHECK(p2(0) == doctest::Approx(2.5));
  // random span against an independent summation oracle
  Rng rng(5);
  Mat r = rng.gaussian(8, 4, 1.0);
  Vec pooled_r = pool_event(r, 2, 7);
  Vec oracle = Vec::Zero(4);
  for (int i = 2; i < 7; ++i) oracle += r.row(i).transpose();
  oracle /= 5.0;
  CHECK((pooled_r - oracle).norm() < 1e-12);
  CHECK_THROWS_AS(pool_event(tape, v, 1, 1), DataError);
  CHECK_THROWS_AS(pool_event(tape, v, 0, 9), DataError);
}

TEST_CASE("mask_events replaces exactly the span tokens") {
  std::vector<std::string> text = {"t0", "t1", "t2", "t3", "t4", "t5", "t6"};
  auto masked = mask_events(text, 2, 3, 5, 6, "[MASK]");
  CHECK(masked.size() == text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i == 2 || i == 5)
      CHECK(masked[i] == "[MASK]");
    else
      CHECK(masked[i] == text[i]);
  }
  CHECK_THROWS_WITH_AS(mask_events(text, 1, 4, 3, 6, "[MASK]"),
                       doctest::Contains("overlapping"), DataError);
  CHECK_THROWS_AS(mask_events(text, 2, 2, 5, 6, "[MASK]"), DataError);
}

TEST_CASE("masked context representation is independent of the event surface form") {
  ad::ParamSet params;
  TextEncoder enc(tiny_config(), params, "enc", 0, false);
  std::vector<std::string> a = {"the", "flood", "ruined", "the", "harvest", "badly"};
  std::vector<std::string> b = {"the", "earthquake", "ruined", "the", "landslide", "badly"};
  auto ma = mask_events(a, 1, 2, 4, 5, enc.tokenizer().mask_symbol());
  auto mb = mask_events(b, 1, 2, 4, 5, enc.tokenizer().mask_symbol());
  ad::Tape tape;
  Mat ea = enc.encode_words(tape, ma).val();
  Mat eb = enc.encode_words(tape, mb).val();
  CHECK((ea - eb).norm() == doctest::Approx(0.0));
  Vec pa = pool_event(ea, 1, 2), pb = pool_event(eb, 1, 2);
  CHECK((pa - pb).norm() == doctest::Approx(0.0));
}

TEST_CASE("window partition invariant: union of segments covers each sentence once") {
  SubwordTokenizer tok(53, 3, "[MASK]");
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<std::string>> sents;
    const int n_sents = 1 + static_cast<int>(rng.integer(6));
    for (int s = 0; s < n_sents; ++s) {
      std::vector<std::string> words;
      const int n_words = 1 + static_cast<int>(rng.integer(12));
      for (int w = 0; w < n_words; ++w)
        words.push_back(std::string(1 + rng.integer(9), static_cast<char>('a' + rng.integer(26))));
      sents.push_back(words);
    }
    Document d = doc_with_sentences(sents);
    WindowPlan plan = split_windows(d, 14, tok);
    std::map<std::pair<int, int>, int> coverage;
    for (std::size_t w = 0; w < plan.windows.size(); ++w) {
      int prev_sent = -1;
      for (const auto& seg : plan.windows[w].segments) {
        CHECK(seg.sent_idx >= prev_sent);  // order preserved
        prev_sent = seg.sent_idx;
        for (int i = seg.word_begin; i < seg.word_end; ++i) ++coverage[{seg.sent_idx, i}];
      }
    }
    for (int s = 0; s < n_sents; ++s)
      for (int i = 0; i < static_cast<int>(sents[static_cast<std::size_t>(s)].size()); ++i)
        CHECK(coverage[{s, i}] == 1);
  }
}

TEST_CASE("encoder gradients flow when trainable") {
  ad::ParamSet params;
  TextEncoder enc(tiny_config(8, 32), params, "enc", 0, true);
  std::vector<std::string> words = {"alpha", "beta", "gamma"};
  auto forward = [&](bool with_grad) {
    ad::Tape tape;
    ad::Var out = enc.encode_words(tape, words);
    ad::Var loss = tape.mean_all(tape.cwise_mul(out, out));
    if (with_grad) tape.backward(loss);
    return loss.val()(0, 0);
  };
  // spot-check a subset of entries per tensor to keep runtime small
  auto result = testing::check_gradients(params, forward, 1e-5, 6);
  CHECK(result.entries > 0);
  CHECK(result.max_rel_err < 1e-4);
}

TEST_CASE("pretrained mode loads weights from a file and reproduces the source encoder") {
  EncoderConfig ec = tiny_config(12, 32);
  // source encoder with random weights
  ad::ParamSet src_params;
  TextEncoder src(ec, src_params, "enc", 0, false);
  // dump unprefixed tensors the way a weight file stores them
  std::vector<std::pair<std::string, const Mat*>> tensors;
  for (const auto& p : src_params)
    tensors.emplace_back(p.name.substr(std::string("enc.").size()), &p.value);
  const std::string path = "textenc_pretrained_test.bin";
  tensorio::save(path, tensors);

  EncoderConfig pc = ec;
  pc.mode = "pretrained";
  pc.weights_path = path;
  pc.init_seed = 999;  // different init; the file must win
  ad::ParamSet dst_params;
  TextEncoder dst(pc, dst_params, "other", 0, false);
  dst.load_weights(dst_params, "other", tensorio::load(path));

  std::vector<std::string> words = {"alpha", "beta", "gamma", "delta"};
  ad::Tape tape;
  Mat a = src.encode_words(tape, words).val();
  Mat b = dst.encode_words(tape, words).val();
  CHECK((a - b).norm() == doctest::Approx(0.0));
  std::remove(path.c_str());
}

TEST_CASE("pool_event is permutation invariant within the span and linear") {
  Rng rng(61);
  Mat rows = rng.gaussian(6, 3, 1.0);
  Vec base = pool_event(rows, 1, 5);
  Mat permuted = rows;
  permuted.row(1).swap(permuted.row(4));
  permuted.row(2).swap(permuted.row(3));
  CHECK((pool_event(permuted, 1, 5) - base).norm() < 1e-12);
  CHECK((pool_event((2.0 * rows).eval(), 1, 5) - 2.0 * base).norm() < 1e-12);
  Mat other = rng.gaussian(6, 3, 1.0);
  CHECK((pool_event((rows + other).eval(), 1, 5) -
         (base + pool_event(other, 1, 5))).norm() < 1e-12);
}

TEST_CASE("600-token document at budget 512 spans two windows, one vector per token") {
  std::vector<std::vector<std::string>> sents;
  for (int s = 0; s < 6; ++s) sents.push_back(std::vector<std::string>(100, "w"));
  Document d = doc_with_sentences(sents);
  ad::ParamSet params;
  TextEncoder enc(tiny_config(8, 512), params, "enc", 0, false);
  WindowPlan plan = split_windows(d, 512, enc.tokenizer());
  CHECK(plan.windows.size() == 2);  // 5 x 100 fits in 510, the 6th overflows
  ad::Tape tape;
  ad::Var out = encode_document(tape, d, enc, plan);
  CHECK(out.val().rows() == 600);
  CHECK(out.val().cols() == 8);
}
