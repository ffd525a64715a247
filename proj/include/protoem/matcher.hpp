#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "protoem/autodiff.hpp"
#include "protoem/common.hpp"
#include "protoem/taxonomy.hpp"

namespace protoem {

struct TaskHeadConfig {
  Task task;
  int bank_row_begin = 0;  // task's contiguous block within the bank
  int num_labels = 0;
  double lambda = 1.0;
};

// [OP] similarity: negative Euclidean distance.
inline double similarity(const Vec& x, const Vec& p) {
  if (x.size() != p.size()) throw NumericError("similarity: width mismatch");
  return -(x - p).norm();
}

// [OP] probabilities: softmax over similarities to each prototype row.
inline Vec probabilities(const Vec& x, const Mat& prototype_rows) {
  if (prototype_rows.rows() < 1) throw NumericError("probabilities: no prototypes");
  Vec scores(prototype_rows.rows());
  for (Eigen::Index i = 0; i < prototype_rows.rows(); ++i)
    scores(i) = similarity(x, prototype_rows.row(i));
  double m = scores.maxCoeff();
  Vec e = (scores.array() - m).exp();
  return e / e.sum();
}

inline Vec softmax(const Vec& scores) {
  double m = scores.maxCoeff();
  Vec e = (scores.array() - m).exp();
  return e / e.sum();
}

// [OP] predict: argmax label index; exact ties resolve to the first label in
// taxonomy order.
inline int predict(const Vec& probs) {
  int best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i)
    if (probs(i) > probs(best)) best = static_cast<int>(i);
  return best;
}

// [OP] task_loss: cross entropy of the gold label. Mean reduction by
// default; the summed form is a flag away.
inline double task_loss(const std::vector<Vec>& probability_rows, const std::vector<int>& gold,
                        bool mean_reduce = true, double eps = 1e-12) {
  if (probability_rows.size() != gold.size())
    throw NumericError("task_loss: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const Vec& p = probability_rows[i];
    if (gold[i] < 0 || gold[i] >= p.size()) throw DataError("task_loss: gold label out of range");
    total += -std::log(std::max(p(gold[i]), eps));
  }
  if (mean_reduce && !probability_rows.empty())
    total /= static_cast<double>(probability_rows.size());
  return total;
}

// [OP] joint_loss: lambda-weighted sum over the four task losses.
inline double joint_loss(const std::array<double, 4>& task_losses,
                         const std::array<double, 4>& lambda) {
  double total = 0.0;
  for (std::size_t k = 0; k < 4; ++k) total += lambda[k] * task_losses[k];
  return total;
}

// Training-path scores for one task: logits S[i][c] = -||x_i - p_c||.
inline ad::Var task_logits(ad::Tape& tape, ad::Var instances, ad::Var bank,
                           const TaskHeadConfig& head) {
  ad::Var rows = tape.rows_range(bank, head.bank_row_begin, head.num_labels);
  return tape.pairwise_neg_dist(instances, rows);
}

}  // namespace protoem
