#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoem/common.hpp"
#include "protoem/corpus.hpp"
#include "protoem/taxonomy.hpp"

namespace protoem {

// Complete weighted directed graph over the 14 relation labels.
// a_raw[i][j] = fraction of ordered pairs labeled i that are also labeled j;
// a_norm is the message-passing matrix (zero diagonal, rows summing to 1).
struct DependencyGraph {
  std::vector<std::string> labels;
  Mat a_raw;
  Mat a_norm;
};

enum class GraphNorm { Row, DoublyStochastic };

inline GraphNorm graph_norm_from_name(const std::string& s) {
  if (s == "row") return GraphNorm::Row;
  if (s == "doubly") return GraphNorm::DoublyStochastic;
  throw ConfigError("unknown graph normalization: " + s);
}

// [OP] compute_cooccurrence over all enumerated ordered pairs. Every pair
// carries exactly one label per task, so within-task blocks come out as
// identity rows.
inline DependencyGraph compute_cooccurrence(const Corpus& corpus,
                                            const Taxonomy& tax = Taxonomy()) {
  const int n = tax.num_nodes();
  Eigen::MatrixXd joint = Mat::Zero(n, n);
  Eigen::VectorXd support = Vec::Zero(n);
  std::size_t total_pairs = 0;
  for (const auto& doc : corpus.docs) {
    for (const auto& pair : enumerate_pairs(doc, tax)) {
      ++total_pairs;
      std::array<int, 4> nodes{};
      for (Task t : kAllTasks) {
        auto [begin, end] = tax.task_block(t);
        (void)end;
        nodes[static_cast<std::size_t>(t)] = begin + pair.label(t);
      }
      for (int a : nodes) {
        support(a) += 1.0;
        for (int b : nodes) joint(a, b) += 1.0;
      }
    }
  }
  if (total_pairs == 0) throw DataError("compute_cooccurrence: no pairs");

  DependencyGraph g;
  for (int i = 0; i < n; ++i) g.labels.push_back(tax.node_name(i));
  g.a_raw = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (support(i) > 0.0)
      g.a_raw.row(i) = joint.row(i) / support(i);
    else
      g.a_raw(i, i) = 1.0;  // unsupported label keeps only its self-loop
  }
  return g;
}

// [OP] normalize_graph. Row mode zeroes the diagonal (self-influence is the
// GCN's W_0 term) and rescales each row with off-diagonal mass to sum to 1.
// The doubly-stochastic mode runs iterative proportional fitting instead.
inline DependencyGraph normalize_graph(DependencyGraph g, GraphNorm mode = GraphNorm::Row) {
  const Eigen::Index n = g.a_raw.rows();
  Mat a = g.a_raw;
  a.diagonal().setZero();
  if (mode == GraphNorm::Row) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = a.row(i).sum();
      if (s > 0.0) a.row(i) /= s;
    }
  } else {
    for (int iter = 0; iter < 1000; ++iter) {
      double dev = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double s = a.row(i).sum();
        if (s > 0.0) {
          a.row(i) /= s;
          dev = std::max(dev, std::abs(s - 1.0));
        }
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        double s = a.col(j).sum();
        if (s > 0.0) {
          a.col(j) /= s;
          dev = std::max(dev, std::abs(s - 1.0));
        }
      }
      if (dev < 1e-12) break;
    }
  }
  g.a_norm = std::move(a);
  return g;
}

// Uniform-weight variant: every off-diagonal entry 1, then row-normalized.
inline DependencyGraph uniform_graph(const Taxonomy& tax = Taxonomy()) {
  const int n = tax.num_nodes();
  DependencyGraph g;
  for (int i = 0; i < n; ++i) g.labels.push_back(tax.node_name(i));
  g.a_raw = Mat::Ones(n, n);
  return normalize_graph(std::move(g), GraphNorm::Row);
}

inline std::string render_matrix_table(const std::vector<std::string>& labels, const Mat& a) {
  std::size_t width = 0;
  for (const auto& l : labels) width = std::max(width, l.size());
  std::ostringstream os;
  os << std::string(width, ' ');
  for (const auto& l : labels) os << "  " << std::setw(static_cast<int>(width)) << l;
  os << "\n";
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    os << std::setw(static_cast<int>(width)) << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      os << "  " << std::setw(static_cast<int>(width)) << std::fixed << std::setprecision(2)
         << a(i, j);
    os << "\n";
  }
  return os.str();
}

inline std::string render_matrix_tsv(const std::vector<std::string>& labels, const Mat& a) {
  std::ostringstream os;
  os << "label";
  for (const auto& l : labels) os << "\t" << l;
  os << "\n";
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    os << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < a.cols(); ++j) os << "\t" << a(i, j);
    os << "\n";
  }
  return os.str();
}

inline nlohmann::json graph_to_json(const DependencyGraph& g) {
  nlohmann::json j;
  j["labels"] = g.labels;
  auto mat = [](const Mat& a) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      std::vector<double> r;
      for (Eigen::Index jj = 0; jj < a.cols(); ++jj) r.push_back(a(i, jj));
      rows.push_back(std::move(r));
    }
    return rows;
  };
  j["a_raw"] = mat(g.a_raw);
  j["a_norm"] = mat(g.a_norm);
  return j;
}

inline DependencyGraph graph_from_json(const nlohmann::json& j) {
  DependencyGraph g;
  g.labels = j.at("labels").get<std::vector<std::string>>();
  auto mat = [](const nlohmann::json& rows) {
    Mat a(rows.size(), rows.empty() ? 0 : rows.at(0).size());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index jj = 0; jj < a.cols(); ++jj)
        a(i, jj) = rows.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(jj)).get<double>();
    return a;
  };
  g.a_raw = mat(j.at("a_raw"));
  g.a_norm = mat(j.at("a_norm"));
  return g;
}

}  // namespace protoem
