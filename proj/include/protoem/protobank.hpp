#pragma once

#include <string>
#include <vector>

#include "protoem/autodiff.hpp"
#include "protoem/common.hpp"
#include "protoem/taxonomy.hpp"
#include "protoem/textenc.hpp"

namespace protoem {

// Learned heads of the prototype encoder: the shared event-pair transform
// (optionally untied for the masked-context path) and the fusion layer.
struct ConnotationParams {
  int dim = 0;
  ad::Parameter* w_s = nullptr;  // dim x 3*dim
  ad::Parameter* b_s = nullptr;  // 1 x dim
  ad::Parameter* w_ctx = nullptr;  // non-null only when untied
  ad::Parameter* b_ctx = nullptr;
  ad::Parameter* w_p = nullptr;  // dim x 2*dim
  ad::Parameter* b_p = nullptr;  // 1 x dim
  double dropout_rate = 0.2;

  const ad::Parameter* context_w() const { return w_ctx != nullptr ? w_ctx : w_s; }
  const ad::Parameter* context_b() const { return b_ctx != nullptr ? b_ctx : b_s; }
};

inline double glorot_stddev(int fan_in, int fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

inline ConnotationParams make_connotation_params(ad::ParamSet& params, const std::string& prefix,
                                                 int dim, Rng rng, double dropout_rate,
                                                 bool tie_context, int group) {
  ConnotationParams p;
  p.dim = dim;
  p.dropout_rate = dropout_rate;
  p.w_s = &params.add(prefix + ".w_s", rng.gaussian(dim, 3 * dim, glorot_stddev(3 * dim, dim)),
                      group);
  p.b_s = &params.add(prefix + ".b_s", Mat::Zero(1, dim), group);
  if (!tie_context) {
    p.w_ctx = &params.add(prefix + ".w_ctx",
                          rng.gaussian(dim, 3 * dim, glorot_stddev(3 * dim, dim)), group);
    p.b_ctx = &params.add(prefix + ".b_ctx", Mat::Zero(1, dim), group);
  }
  p.w_p = &params.add(prefix + ".w_p", rng.gaussian(dim, 2 * dim, glorot_stddev(2 * dim, dim)),
                      group);
  p.b_p = &params.add(prefix + ".b_p", Mat::Zero(1, dim), group);
  return p;
}

namespace detail {

inline ad::Var affine_relu(ad::Tape& tape, ad::Var x, const ad::Parameter& w,
                           const ad::Parameter& b, double dropout_rate, Rng* rng,
                           bool training) {
  ad::Var wt = tape.transpose(tape.param(const_cast<ad::Parameter&>(w)));
  ad::Var h = tape.relu(tape.add_row_broadcast(tape.matmul(x, wt),
                                               tape.param(const_cast<ad::Parameter&>(b))));
  if (training && rng != nullptr) h = tape.dropout(h, dropout_rate, *rng, training);
  return h;
}

}  // namespace detail

// [OP] pair_rep: sigma(W_s [h1 || h2 || h1 o h2] + b_s).
inline ad::Var pair_rep(ad::Tape& tape, ad::Var h1, ad::Var h2, const ConnotationParams& p,
                        bool training = false, Rng* rng = nullptr) {
  if (h1.cols() != p.dim || h2.cols() != p.dim)
    throw NumericError("pair_rep: vector width mismatch");
  ad::Var feat = tape.concat_cols({h1, h2, tape.cwise_mul(h1, h2)});
  return detail::affine_relu(tape, feat, *p.w_s, *p.b_s, p.dropout_rate, rng, training);
}

inline Vec pair_rep(const Vec& h1, const Vec& h2, const Mat& w_s, const Vec& b_s) {
  ad::Tape tape;
  ad::ParamSet ps;
  ConnotationParams p;
  p.dim = static_cast<int>(h1.size());
  p.w_s = &ps.add("w_s", w_s);
  p.b_s = &ps.add("b_s", b_s.transpose());
  p.w_p = p.w_s;
  p.b_p = p.b_s;
  return pair_rep(tape, tape.constant(h1.transpose()), tape.constant(h2.transpose()), p)
      .val()
      .row(0);
}

// [OP] average_examples: arithmetic mean of per-example representations.
inline ad::Var average_examples(ad::Tape& tape, const std::vector<ad::Var>& reps) {
  if (reps.empty()) throw DataError("average_examples: empty example list");
  return tape.mean_rows(tape.stack_rows(reps));
}

// [OP] context_rep: the masked-path transform per example (shared weights
// with pair_rep unless untied) followed by the example average.
inline ad::Var context_rep(ad::Tape& tape, const std::vector<std::pair<ad::Var, ad::Var>>& masked,
                           const ConnotationParams& p, bool training = false,
                           Rng* rng = nullptr) {
  if (masked.empty()) throw DataError("context_rep: empty example list");
  std::vector<ad::Var> reps;
  reps.reserve(masked.size());
  for (const auto& [m1, m2] : masked) {
    if (m1.cols() != p.dim || m2.cols() != p.dim)
      throw NumericError("context_rep: vector width mismatch");
    ad::Var feat = tape.concat_cols({m1, m2, tape.cwise_mul(m1, m2)});
    reps.push_back(detail::affine_relu(tape, feat, *p.context_w(), *p.context_b(),
                                       p.dropout_rate, rng, training));
  }
  return average_examples(tape, reps);
}

// [OP] fuse: sigma(W_p [h_s || h_c] + b_p).
inline ad::Var fuse(ad::Tape& tape, ad::Var h_s, ad::Var h_c, const ConnotationParams& p,
                    bool training = false, Rng* rng = nullptr) {
  if (h_s.cols() != p.dim || h_c.cols() != p.dim)
    throw NumericError("fuse: vector width mismatch");
  ad::Var feat = tape.concat_cols({h_s, h_c});
  return detail::affine_relu(tape, feat, *p.w_p, *p.b_p, p.dropout_rate, rng, training);
}

// [OP] build_none_prototype: the literal text "None" stands in for both the
// event pair and the masked context; no examples are consumed.
inline ad::Var build_none_prototype(ad::Tape& tape, const TextEncoder& enc,
                                    const ConnotationParams& p, bool training = false,
                                    Rng* rng = nullptr) {
  ad::Var v = enc.encode_words(tape, {"None"});
  ad::Var h_s = pair_rep(tape, v, v, p, training, rng);
  ad::Var h_c = context_rep(tape, {{v, v}}, p, training, rng);
  return fuse(tape, h_s, h_c, p, training, rng);
}

enum class GcnActivation { Relu, Identity };

struct GcnLayerParams {
  ad::Parameter* w = nullptr;   // neighbor transform, dim x dim
  ad::Parameter* w0 = nullptr;  // self-loop transform, dim x dim
};

struct GcnParams {
  std::vector<GcnLayerParams> layers;  // empty means bypass (the -Graph ablation)
  GcnActivation activation = GcnActivation::Relu;
};

inline GcnParams make_gcn_params(ad::ParamSet& params, const std::string& prefix, int dim,
                                 int num_layers, Rng rng, int group) {
  GcnParams g;
  for (int l = 0; l < num_layers; ++l) {
    GcnLayerParams layer;
    layer.w = &params.add(prefix + ".layer" + std::to_string(l) + ".w",
                          rng.gaussian(dim, dim, glorot_stddev(dim, dim)), group);
    layer.w0 = &params.add(prefix + ".layer" + std::to_string(l) + ".w0",
                           rng.gaussian(dim, dim, glorot_stddev(dim, dim)), group);
    g.layers.push_back(layer);
  }
  return g;
}

// [OP] gcn_layer: row i of the output is
// sigma( sum_j A[i][j] W h_j + W_0 h_i ), computed densely.
inline ad::Var gcn_layer(ad::Tape& tape, ad::Var h, ad::Var a_norm, const GcnLayerParams& layer,
                         GcnActivation activation = GcnActivation::Relu) {
  if (a_norm.rows() != h.rows() || a_norm.cols() != h.rows())
    throw NumericError("gcn_layer: adjacency shape mismatch");
  ad::Var wt = tape.transpose(tape.param(*layer.w));
  ad::Var w0t = tape.transpose(tape.param(*layer.w0));
  ad::Var pre = tape.add(tape.matmul(a_norm, tape.matmul(h, wt)), tape.matmul(h, w0t));
  return activation == GcnActivation::Relu ? tape.relu(pre) : pre;
}

inline Mat gcn_layer(const Mat& h, const Mat& a_norm, const Mat& w, const Mat& w0,
                     GcnActivation activation = GcnActivation::Relu) {
  ad::Tape tape;
  ad::ParamSet ps;
  GcnLayerParams layer{&ps.add("w", w), &ps.add("w0", w0)};
  return gcn_layer(tape, tape.constant(h), tape.constant(a_norm), layer, activation).val();
}

inline ad::Var apply_gcn(ad::Tape& tape, ad::Var h, ad::Var a_norm, const GcnParams& gcn) {
  ad::Var out = h;
  for (const auto& layer : gcn.layers) out = gcn_layer(tape, out, a_norm, layer, gcn.activation);
  return out;
}

// Snapshot of the prototype bank for checkpoints: rows follow taxonomy
// order; h_p is the connotation output, h_p_tilde the post-GCN bank.
struct PrototypeBank {
  std::vector<std::string> labels;
  Mat h_p;
  Mat h_p_tilde;
};

enum class PrototypeVariant { Full, Random, EventOnly, ContextOnly };

inline PrototypeVariant prototype_variant_from_name(const std::string& s) {
  if (s == "full") return PrototypeVariant::Full;
  if (s == "random") return PrototypeVariant::Random;
  if (s == "event") return PrototypeVariant::EventOnly;
  if (s == "context") return PrototypeVariant::ContextOnly;
  throw ConfigError("unknown prototypes variant: " + s);
}

// Pooled example vectors feeding the pair and masked-context transforms.
struct ExampleReps {
  ad::Var e1, e2, m1, m2;
};

// Connotation component for one non-None label.
inline ad::Var prototype_row(ad::Tape& tape, const std::vector<ExampleReps>& examples,
                             const ConnotationParams& p, PrototypeVariant variant,
                             bool training = false, Rng* rng = nullptr) {
  if (examples.empty()) throw DataError("prototype_row: no examples");
  ad::Var zero = tape.constant(Mat::Zero(1, p.dim));
  ad::Var h_s = zero, h_c = zero;
  if (variant != PrototypeVariant::ContextOnly) {
    std::vector<ad::Var> reps;
    for (const auto& ex : examples) reps.push_back(pair_rep(tape, ex.e1, ex.e2, p, training, rng));
    h_s = average_examples(tape, reps);
  }
  if (variant != PrototypeVariant::EventOnly) {
    std::vector<std::pair<ad::Var, ad::Var>> masked;
    for (const auto& ex : examples) masked.emplace_back(ex.m1, ex.m2);
    h_c = context_rep(tape, masked, p, training, rng);
  }
  return fuse(tape, h_s, h_c, p, training, rng);
}

}  // namespace protoem
