#pragma once

#include <algorithm>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "protoem/common.hpp"
#include "protoem/taxonomy.hpp"

namespace protoem {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

inline PRF make_prf(double p, double r) {
  PRF out;
  out.precision = p;
  out.recall = r;
  out.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  return out;
}

// Generic numerator/denominator accumulator; sums across documents before
// the final division (corpus-level micro scoring).
struct PairCounts {
  double num_p = 0.0, den_p = 0.0, num_r = 0.0, den_r = 0.0;

  PairCounts& operator+=(const PairCounts& o) {
    num_p += o.num_p;
    den_p += o.den_p;
    num_r += o.num_r;
    den_r += o.den_r;
    return *this;
  }
  PRF finalize() const { return make_prf(safe_div(num_p, den_p), safe_div(num_r, den_r)); }
};

// [OP] micro_prf: pooled TP/FP/FN over non-None labels only. Predictions and
// golds are label indices within one task (0 = None).
inline PRF micro_prf(const std::vector<int>& pred, const std::vector<int>& gold,
                     int none_index = 0) {
  if (pred.size() != gold.size()) throw DataError("micro_prf: length mismatch");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool pred_pos = pred[i] != none_index;
    const bool gold_pos = gold[i] != none_index;
    if (pred_pos && gold_pos && pred[i] == gold[i]) {
      ++tp;
    } else {
      if (pred_pos) ++fp;
      if (gold_pos) ++fn;
    }
  }
  return make_prf(safe_div(tp, tp + fp), safe_div(tp, tp + fn));
}

// Partition of a document's mentions into disjoint entities.
struct Clustering {
  std::vector<std::vector<std::string>> clusters;

  std::vector<std::string> mentions() const {
    std::vector<std::string> out;
    for (const auto& c : clusters) out.insert(out.end(), c.begin(), c.end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

// [OP] cluster_from_pairs: connected components over positive decisions
// (edges are undirected); unlinked mentions become singletons.
inline Clustering cluster_from_pairs(
    const std::vector<std::string>& mentions,
    const std::vector<std::pair<std::string, std::string>>& positive_pairs) {
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& m : mentions)
    if (!index.emplace(m, index.size()).second)
      throw DataError("cluster_from_pairs: duplicate mention " + m);
  std::vector<std::size_t> parent(mentions.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& [a, b] : positive_pairs) {
    auto ia = index.find(a), ib = index.find(b);
    if (ia == index.end() || ib == index.end())
      throw DataError("cluster_from_pairs: decision over unknown mention");
    std::size_t ra = find(ia->second), rb = find(ib->second);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::map<std::size_t, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < mentions.size(); ++i) groups[find(i)].push_back(mentions[i]);
  Clustering out;
  for (auto& [root, members] : groups) {
    (void)root;
    out.clusters.push_back(std::move(members));
  }
  return out;
}

namespace detail {

inline void check_same_universe(const Clustering& a, const Clustering& b) {
  if (a.mentions() != b.mentions()) throw DataError("coreference scorers: mention universe mismatch");
}

inline std::unordered_map<std::string, int> membership(const Clustering& c) {
  std::unordered_map<std::string, int> m;
  for (std::size_t i = 0; i < c.clusters.size(); ++i)
    for (const auto& x : c.clusters[i]) m[x] = static_cast<int>(i);
  return m;
}

// Number of distinct `other`-side clusters intersecting this cluster,
// counting unaligned mentions as singleton partitions.
inline int partition_count(const std::vector<std::string>& cluster,
                           const std::unordered_map<std::string, int>& other) {
  std::set<int> seen;
  int missing = 0;
  for (const auto& m : cluster) {
    auto it = other.find(m);
    if (it == other.end())
      ++missing;
    else
      seen.insert(it->second);
  }
  return static_cast<int>(seen.size()) + missing;
}

// Exact maximum-weight assignment (Hungarian with potentials, O(k^3)).
inline double max_weight_assignment(const Mat& w) {
  const int n = static_cast<int>(w.rows());
  const int m = static_cast<int>(w.cols());
  if (n == 0 || m == 0) return 0.0;
  const int k = std::max(n, m);
  const double big = w.maxCoeff();
  // Min-cost square matrix; padded cells cost `big` (weight 0).
  Mat a(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) a(i, j) = (i < n && j < m) ? big - w(i, j) : big;

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(k) + 1, 0.0), v(static_cast<std::size_t>(k) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(k) + 1, 0), way(static_cast<std::size_t>(k) + 1, 0);
  for (int i = 1; i <= k; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(k) + 1, kInf);
    std::vector<bool> used(static_cast<std::size_t>(k) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      int i0 = p[static_cast<std::size_t>(j0)], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= k; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= k; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= k; ++j) {
    int i = p[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= n && j <= m) total += w(i - 1, j - 1);
  }
  return total;
}

inline double phi4(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::set<std::string> sa(a.begin(), a.end());
  int common = 0;
  for (const auto& x : b) common += sa.count(x) ? 1 : 0;
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

}  // namespace detail

inline PairCounts muc_counts(const Clustering& pred, const Clustering& gold) {
  auto pred_member = detail::membership(pred);
  auto gold_member = detail::membership(gold);
  PairCounts c;
  for (const auto& g : gold.clusters) {
    c.num_r += static_cast<double>(g.size()) - detail::partition_count(g, pred_member);
    c.den_r += static_cast<double>(g.size()) - 1.0;
  }
  for (const auto& s : pred.clusters) {
    c.num_p += static_cast<double>(s.size()) - detail::partition_count(s, gold_member);
    c.den_p += static_cast<double>(s.size()) - 1.0;
  }
  return c;
}

inline PairCounts b_cubed_counts(const Clustering& pred, const Clustering& gold) {
  auto pred_member = detail::membership(pred);
  auto gold_member = detail::membership(gold);
  PairCounts c;
  auto overlap = [&](const std::vector<std::string>& cluster,
                     const std::unordered_map<std::string, int>& other,
                     const Clustering& other_clusters) {
    double acc = 0.0;
    for (const auto& m : cluster) {
      auto it = other.find(m);
      if (it == other.end()) continue;
      const auto& oc = other_clusters.clusters[static_cast<std::size_t>(it->second)];
      int common = 0;
      for (const auto& x : cluster)
        if (std::find(oc.begin(), oc.end(), x) != oc.end()) ++common;
      acc += static_cast<double>(common) / static_cast<double>(cluster.size());
    }
    return acc;
  };
  for (const auto& s : pred.clusters) {
    c.num_p += overlap(s, gold_member, gold);
    c.den_p += static_cast<double>(s.size());
  }
  for (const auto& g : gold.clusters) {
    c.num_r += overlap(g, pred_member, pred);
    c.den_r += static_cast<double>(g.size());
  }
  return c;
}

inline PairCounts ceaf_e_counts(const Clustering& pred, const Clustering& gold) {
  PairCounts c;
  const auto ng = gold.clusters.size();
  const auto np = pred.clusters.size();
  if (ng > 0 && np > 0) {
    Mat w(static_cast<Eigen::Index>(ng), static_cast<Eigen::Index>(np));
    for (std::size_t i = 0; i < ng; ++i)
      for (std::size_t j = 0; j < np; ++j)
        w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            detail::phi4(gold.clusters[i], pred.clusters[j]);
    double phi = detail::max_weight_assignment(w);
    c.num_p = c.num_r = phi;
  }
  c.den_p = static_cast<double>(np);
  c.den_r = static_cast<double>(ng);
  return c;
}

// BLANC link counts; finalized with the Rand-style averaging over the coref
// and non-coref link classes.
struct BlancCounts {
  double right_coref = 0, pred_coref = 0, gold_coref = 0;
  double right_non = 0, pred_non = 0, gold_non = 0;

  BlancCounts& operator+=(const BlancCounts& o) {
    right_coref += o.right_coref;
    pred_coref += o.pred_coref;
    gold_coref += o.gold_coref;
    right_non += o.right_non;
    pred_non += o.pred_non;
    gold_non += o.gold_non;
    return *this;
  }

  PRF finalize() const {
    PRF coref = make_prf(safe_div(right_coref, pred_coref), safe_div(right_coref, gold_coref));
    PRF non = make_prf(safe_div(right_non, pred_non), safe_div(right_non, gold_non));
    if (gold_coref + pred_coref == 0.0) return non;
    if (gold_non + pred_non == 0.0) return coref;
    PRF out;
    out.precision = 0.5 * (coref.precision + non.precision);
    out.recall = 0.5 * (coref.recall + non.recall);
    out.f1 = 0.5 * (coref.f1 + non.f1);
    return out;
  }
};

inline BlancCounts blanc_counts(const Clustering& pred, const Clustering& gold) {
  auto pred_member = detail::membership(pred);
  auto gold_member = detail::membership(gold);
  auto mentions = gold.mentions();
  BlancCounts c;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    for (std::size_t j = i + 1; j < mentions.size(); ++j) {
      const bool in_pred = pred_member.at(mentions[i]) == pred_member.at(mentions[j]);
      const bool in_gold = gold_member.at(mentions[i]) == gold_member.at(mentions[j]);
      if (in_pred) ++c.pred_coref;
      else ++c.pred_non;
      if (in_gold) ++c.gold_coref;
      else ++c.gold_non;
      if (in_pred && in_gold) ++c.right_coref;
      if (!in_pred && !in_gold) ++c.right_non;
    }
  }
  return c;
}

// [OP] per-document scorers.
inline PRF muc(const Clustering& pred, const Clustering& gold) {
  detail::check_same_universe(pred, gold);
  return muc_counts(pred, gold).finalize();
}
inline PRF b_cubed(const Clustering& pred, const Clustering& gold) {
  detail::check_same_universe(pred, gold);
  return b_cubed_counts(pred, gold).finalize();
}
inline PRF ceaf_e(const Clustering& pred, const Clustering& gold) {
  detail::check_same_universe(pred, gold);
  return ceaf_e_counts(pred, gold).finalize();
}
inline PRF blanc(const Clustering& pred, const Clustering& gold) {
  detail::check_same_universe(pred, gold);
  return blanc_counts(pred, gold).finalize();
}

struct MetricsReport {
  PRF temporal, causal, subevent;
  PRF coref_muc, coref_b3, coref_ceafe, coref_blanc;
  double coref_avg_f1 = 0.0;
  double overall_f1 = 0.0;
};

// [OP] overall: coreference averages its four metric F1s; overall averages
// the four task F1s.
inline MetricsReport overall(const PRF& temporal, const PRF& causal, const PRF& subevent,
                             const PRF& muc_score, const PRF& b3, const PRF& ceafe,
                             const PRF& blanc_score) {
  MetricsReport r;
  r.temporal = temporal;
  r.causal = causal;
  r.subevent = subevent;
  r.coref_muc = muc_score;
  r.coref_b3 = b3;
  r.coref_ceafe = ceafe;
  r.coref_blanc = blanc_score;
  r.coref_avg_f1 = (muc_score.f1 + b3.f1 + ceafe.f1 + blanc_score.f1) / 4.0;
  r.overall_f1 = (temporal.f1 + causal.f1 + subevent.f1 + r.coref_avg_f1) / 4.0;
  return r;
}

inline nlohmann::json prf_to_json(const PRF& p) {
  return nlohmann::json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["temporal"] = prf_to_json(r.temporal);
  j["causal"] = prf_to_json(r.causal);
  j["subevent"] = prf_to_json(r.subevent);
  j["coreference"] = {{"muc", prf_to_json(r.coref_muc)},
                      {"b3", prf_to_json(r.coref_b3)},
                      {"ceaf_e", prf_to_json(r.coref_ceafe)},
                      {"blanc", prf_to_json(r.coref_blanc)},
                      {"avg_f1", r.coref_avg_f1}};
  j["overall_f1"] = r.overall_f1;
  return j;
}

inline std::string render_report(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  auto row = [&](const std::string& name, const PRF& p) {
    os << "  " << std::left << std::setw(12) << name << "P=" << p.precision << "  R=" << p.recall
       << "  F1=" << p.f1 << "\n";
  };
  os << "task scores (micro, non-None):\n";
  row("temporal", r.temporal);
  row("causal", r.causal);
  row("subevent", r.subevent);
  os << "coreference:\n";
  row("MUC", r.coref_muc);
  row("B3", r.coref_b3);
  row("CEAF_e", r.coref_ceafe);
  row("BLANC", r.coref_blanc);
  os << "  coref avg F1 = " << r.coref_avg_f1 << "\n";
  os << "  overall F1   = " << r.overall_f1 << "\n";
  return os.str();
}

}  // namespace protoem
