#pragma once

#include <string>
#include <vector>

#include "protoem/autodiff.hpp"
#include "protoem/common.hpp"
#include "protoem/corpus.hpp"
#include "protoem/protobank.hpp"
#include "protoem/textenc.hpp"

namespace protoem {

// Multi-layer FNN over the event-pair feature concatenation. A rectifier
// (and dropout during training) follows every layer.
struct InstanceParams {
  int dim = 0;
  double dropout_rate = 0.2;
  struct Layer {
    ad::Parameter* w = nullptr;
    ad::Parameter* b = nullptr;
  };
  std::vector<Layer> layers;
};

inline InstanceParams make_instance_params(ad::ParamSet& params, const std::string& prefix,
                                           int dim, int depth, Rng rng, double dropout_rate,
                                           int group) {
  if (depth < 1) throw ConfigError("instance FNN depth must be >= 1");
  InstanceParams p;
  p.dim = dim;
  p.dropout_rate = dropout_rate;
  int in = 3 * dim;
  for (int l = 0; l < depth; ++l) {
    InstanceParams::Layer layer;
    layer.w = &params.add(prefix + ".fnn" + std::to_string(l) + ".w",
                          rng.gaussian(dim, in, glorot_stddev(in, dim)), group);
    layer.b = &params.add(prefix + ".fnn" + std::to_string(l) + ".b", Mat::Zero(1, dim), group);
    p.layers.push_back(layer);
    in = dim;
  }
  return p;
}

// [OP] instance_pair_rep: FNN(h1 || h2 || h1 o h2). Accepts a batch of pairs
// as rows.
inline ad::Var instance_pair_rep(ad::Tape& tape, ad::Var h1, ad::Var h2,
                                 const InstanceParams& p, bool training = false,
                                 Rng* rng = nullptr) {
  if (h1.cols() != p.dim || h2.cols() != p.dim)
    throw NumericError("instance_pair_rep: vector width mismatch");
  if (h1.rows() != h2.rows()) throw NumericError("instance_pair_rep: batch size mismatch");
  ad::Var x = tape.concat_cols({h1, h2, tape.cwise_mul(h1, h2)});
  for (const auto& layer : p.layers)
    x = detail::affine_relu(tape, x, *layer.w, *layer.b, p.dropout_rate, rng, training);
  return x;
}

// [OP] encode_instances: one representation per ordered pair, built from the
// pooled mention vectors of an encoded document.
inline ad::Var encode_instances(ad::Tape& tape, const Document& doc, ad::Var token_vectors,
                                const std::vector<LabeledPair>& pairs, const InstanceParams& p,
                                bool training = false, Rng* rng = nullptr) {
  if (pairs.empty()) return tape.constant(Mat::Zero(0, p.dim));
  // Pool every mention once, then gather per pair.
  std::vector<Eigen::Index> mention_row;
  std::vector<ad::Var> pooled;
  std::unordered_map<std::string, Eigen::Index> index;
  for (const auto& m : doc.mentions) {
    int begin = doc.global_index(m.sent_idx, m.start);
    int end = doc.global_index(m.sent_idx, m.end);
    index[m.mention_id] = static_cast<Eigen::Index>(pooled.size());
    pooled.push_back(pool_event(tape, token_vectors, begin, end));
  }
  ad::Var mention_mat = tape.stack_rows(pooled);
  std::vector<Eigen::Index> src_rows, dst_rows;
  src_rows.reserve(pairs.size());
  dst_rows.reserve(pairs.size());
  for (const auto& pr : pairs) {
    src_rows.push_back(index.at(pr.src));
    dst_rows.push_back(index.at(pr.dst));
  }
  ad::Var h1 = tape.gather_rows(mention_mat, std::move(src_rows));
  ad::Var h2 = tape.gather_rows(mention_mat, std::move(dst_rows));
  return instance_pair_rep(tape, h1, h2, p, training, rng);
}

}  // namespace protoem
