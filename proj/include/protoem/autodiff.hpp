#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "protoem/common.hpp"

// Reverse-mode automatic differentiation over dense double matrices.
// A Tape owns the forward values; Parameters live outside the tape and
// accumulate gradients across backward() calls until zero_grad().

namespace protoem::ad {

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;
  int group = 0;  // optimizer group (e.g. encoder vs heads)

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Stable-address container of named parameters.
class ParamSet {
 public:
  Parameter& add(const std::string& name, Mat init, int group = 0, bool trainable = true) {
    for (const auto& p : params_)
      if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
    params_.push_back(Parameter{name, std::move(init), Mat(), trainable, group});
    Parameter& p = params_.back();
    p.zero_grad();
    return p;
  }

  Parameter* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::deque<Parameter> params_;
};

class Tape;

class Var {
 public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  const Mat& val() const;
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }

 private:
  friend class Tape;
  Var(Tape* t, int i) : tape_(t), idx_(i) {}
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

class Tape {
 public:
  // Leaf with no gradient tracking.
  Var constant(Mat v) { return make(std::move(v), false, {}, nullptr); }

  // Leaf that flushes its gradient into an external Parameter. Frozen
  // parameters join the tape as constants.
  Var param(Parameter& p) {
    if (!p.trainable) return constant(p.value);
    Var out = make(p.value, true, {}, nullptr);
    node(out).param = &p;
    return out;
  }

  Var matmul(Var a, Var b) {
    check_inner(a.val().cols(), b.val().rows(), "matmul");
    Mat v = a.val() * b.val();
    return make(std::move(v), needs(a) || needs(b), {a, b},
                [](Tape& t, Node& n) {
                  const Mat& g = n.grad;
                  t.accumulate(n.parents[0], g * t.node(n.parents[1]).value.transpose());
                  t.accumulate(n.parents[1], t.node(n.parents[0]).value.transpose() * g);
                });
  }

  Var transpose(Var a) {
    return make(a.val().transpose(), needs(a), {a}, [](Tape& t, Node& n) {
      t.accumulate(n.parents[0], n.grad.transpose());
    });
  }

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    return make(a.val() + b.val(), needs(a) || needs(b), {a, b},
                [](Tape& t, Node& n) {
                  t.accumulate(n.parents[0], n.grad);
                  t.accumulate(n.parents[1], n.grad);
                });
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    return make(a.val() - b.val(), needs(a) || needs(b), {a, b},
                [](Tape& t, Node& n) {
                  t.accumulate(n.parents[0], n.grad);
                  t.accumulate(n.parents[1], -n.grad);
                });
  }

  // a is n x d, row is 1 x d, broadcast-added to every row of a.
  Var add_row_broadcast(Var a, Var row) {
    if (row.val().rows() != 1 || row.val().cols() != a.val().cols())
      throw NumericError("add_row_broadcast: shape mismatch");
    Mat v = a.val().rowwise() + Eigen::RowVectorXd(row.val().row(0));
    return make(std::move(v), needs(a) || needs(row), {a, row},
                [](Tape& t, Node& n) {
                  t.accumulate(n.parents[0], n.grad);
                  t.accumulate(n.parents[1], n.grad.colwise().sum());
                });
  }

  Var cwise_mul(Var a, Var b) {
    check_same_shape(a, b, "cwise_mul");
    return make(a.val().cwiseProduct(b.val()), needs(a) || needs(b), {a, b},
                [](Tape& t, Node& n) {
                  t.accumulate(n.parents[0], n.grad.cwiseProduct(t.node(n.parents[1]).value));
                  t.accumulate(n.parents[1], n.grad.cwiseProduct(t.node(n.parents[0]).value));
                });
  }

  Var scale(Var a, double c) {
    return make(a.val() * c, needs(a), {a}, [c](Tape& t, Node& n) {
      t.accumulate(n.parents[0], n.grad * c);
    });
  }

  Var relu(Var a) {
    Mat v = a.val().cwiseMax(0.0);
    return make(std::move(v), needs(a), {a}, [](Tape& t, Node& n) {
      const Mat& x = t.node(n.parents[0]).value;
      Mat g = ((x.array() > 0.0).cast<double>() * n.grad.array()).matrix();
      t.accumulate(n.parents[0], std::move(g));
    });
  }

  // Concatenate along columns (feature dimension).
  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw NumericError("concat_cols: empty");
    Eigen::Index rows = parts[0].val().rows(), cols = 0;
    bool any = false;
    for (const Var& p : parts) {
      if (p.val().rows() != rows) throw NumericError("concat_cols: row mismatch");
      cols += p.val().cols();
      any = any || needs(p);
    }
    Mat v(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
      v.middleCols(at, p.val().cols()) = p.val();
      at += p.val().cols();
    }
    return make(std::move(v), any, parts, [](Tape& t, Node& n) {
      Eigen::Index at = 0;
      for (const Var& p : n.parents) {
        Eigen::Index w = t.node(p).value.cols();
        t.accumulate(p, n.grad.middleCols(at, w));
        at += w;
      }
    });
  }

  // Stack 1-or-more row blocks vertically.
  Var stack_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw NumericError("stack_rows: empty");
    Eigen::Index cols = parts[0].val().cols(), rows = 0;
    bool any = false;
    for (const Var& p : parts) {
      if (p.val().cols() != cols) throw NumericError("stack_rows: col mismatch");
      rows += p.val().rows();
      any = any || needs(p);
    }
    Mat v(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
      v.middleRows(at, p.val().rows()) = p.val();
      at += p.val().rows();
    }
    return make(std::move(v), any, parts, [](Tape& t, Node& n) {
      Eigen::Index at = 0;
      for (const Var& p : n.parents) {
        Eigen::Index h = t.node(p).value.rows();
        t.accumulate(p, n.grad.middleRows(at, h));
        at += h;
      }
    });
  }

  Var rows_range(Var a, Eigen::Index begin, Eigen::Index count) {
    Mat v = a.val().middleRows(begin, count);
    return make(std::move(v), needs(a), {a}, [begin, count](Tape& t, Node& n) {
      Node& pn = t.node(n.parents[0]);
      Mat g = Mat::Zero(pn.value.rows(), pn.value.cols());
      g.middleRows(begin, count) = n.grad;
      t.accumulate(n.parents[0], std::move(g));
    });
  }

  // Gather rows by index; duplicate indices accumulate on backward.
  Var gather_rows(Var a, std::vector<Eigen::Index> idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), a.val().cols());
    for (std::size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = a.val().row(idx[i]);
    return make(std::move(v), needs(a), {a},
                [idx = std::move(idx)](Tape& t, Node& n) {
                  Node& pn = t.node(n.parents[0]);
                  Mat g = Mat::Zero(pn.value.rows(), pn.value.cols());
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
                  t.accumulate(n.parents[0], std::move(g));
                });
  }

  Var mean_rows(Var a) {
    Mat v = a.val().colwise().mean();
    return make(std::move(v), needs(a), {a}, [](Tape& t, Node& n) {
      Node& pn = t.node(n.parents[0]);
      double inv = 1.0 / static_cast<double>(pn.value.rows());
      Mat g = (n.grad * inv).replicate(pn.value.rows(), 1);
      t.accumulate(n.parents[0], std::move(g));
    });
  }

  Var sum_all(Var a) {
    Mat v(1, 1);
    v(0, 0) = a.val().sum();
    return make(std::move(v), needs(a), {a}, [](Tape& t, Node& n) {
      Node& pn = t.node(n.parents[0]);
      t.accumulate(n.parents[0], Mat::Constant(pn.value.rows(), pn.value.cols(), n.grad(0, 0)));
    });
  }

  Var mean_all(Var a) {
    double inv = 1.0 / static_cast<double>(a.val().size());
    return scale(sum_all(a), inv);
  }

  // S[i][c] = -||X.row(i) - P.row(c)||_2. Gradient at zero distance is 0.
  Var pairwise_neg_dist(Var x, Var p) {
    if (x.val().cols() != p.val().cols())
      throw NumericError("pairwise_neg_dist: width mismatch");
    const Eigen::Index n = x.val().rows(), c = p.val().rows();
    Mat v(n, c);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < c; ++j)
        v(i, j) = -(x.val().row(i) - p.val().row(j)).norm();
    return make(std::move(v), needs(x) || needs(p), {x, p},
                [](Tape& t, Node& n_) {
                  const Mat& X = t.node(n_.parents[0]).value;
                  const Mat& P = t.node(n_.parents[1]).value;
                  Mat gx = Mat::Zero(X.rows(), X.cols());
                  Mat gp = Mat::Zero(P.rows(), P.cols());
                  for (Eigen::Index i = 0; i < X.rows(); ++i) {
                    for (Eigen::Index j = 0; j < P.rows(); ++j) {
                      Eigen::RowVectorXd diff = X.row(i) - P.row(j);
                      double d = diff.norm();
                      if (d <= 0.0) continue;
                      Eigen::RowVectorXd contrib = (n_.grad(i, j) / d) * diff;
                      gx.row(i) -= contrib;
                      gp.row(j) += contrib;
                    }
                  }
                  t.accumulate(n_.parents[0], std::move(gx));
                  t.accumulate(n_.parents[1], std::move(gp));
                });
  }

  Var softmax_rows(Var a) {
    Mat v = a.val();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      Eigen::RowVectorXd r = v.row(i);
      double m = r.maxCoeff();
      r = (r.array() - m).exp();
      v.row(i) = r / r.sum();
    }
    return make(std::move(v), needs(a), {a}, [](Tape& t, Node& n) {
      const Mat& p = n.value;
      Mat g(p.rows(), p.cols());
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        double dot = n.grad.row(i).dot(p.row(i));
        g.row(i) = p.row(i).cwiseProduct((n.grad.row(i).array() - dot).matrix());
      }
      t.accumulate(n.parents[0], std::move(g));
    });
  }

  // Mean (or sum) over rows of -log softmax(S.row(i))[gold[i]].
  Var cross_entropy_with_logits(Var logits, std::vector<int> gold, bool mean_reduce = true) {
    const Mat& s = logits.val();
    if (static_cast<Eigen::Index>(gold.size()) != s.rows())
      throw NumericError("cross_entropy_with_logits: gold size mismatch");
    double total = 0.0;
    Mat soft(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      double m = s.row(i).maxCoeff();
      Eigen::RowVectorXd e = (s.row(i).array() - m).exp();
      double z = e.sum();
      soft.row(i) = e / z;
      total += std::log(z) + m - s(i, gold[static_cast<std::size_t>(i)]);
    }
    double w = mean_reduce ? 1.0 / static_cast<double>(s.rows()) : 1.0;
    Mat v(1, 1);
    v(0, 0) = total * w;
    return make(std::move(v), needs(logits), {logits},
                [soft = std::move(soft), gold = std::move(gold), w](Tape& t, Node& n) {
                  Mat g = soft;
                  for (Eigen::Index i = 0; i < g.rows(); ++i)
                    g(i, gold[static_cast<std::size_t>(i)]) -= 1.0;
                  t.accumulate(n.parents[0], g * (n.grad(0, 0) * w));
                });
  }

  // Row-wise layer norm with learned gain/shift (1 x d each).
  Var layer_norm_rows(Var a, Var gamma, Var beta, double eps = 1e-5) {
    const Mat& x = a.val();
    const Eigen::Index d = x.cols();
    if (gamma.val().cols() != d || beta.val().cols() != d)
      throw NumericError("layer_norm_rows: width mismatch");
    Mat xhat(x.rows(), d);
    Vec inv_sigma(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double mu = x.row(i).mean();
      double var = (x.row(i).array() - mu).square().mean();
      double is = 1.0 / std::sqrt(var + eps);
      inv_sigma(i) = is;
      xhat.row(i) = (x.row(i).array() - mu) * is;
    }
    Mat v = xhat;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      v.row(i) = v.row(i).cwiseProduct(gamma.val().row(0)) + beta.val().row(0);
    return make(std::move(v), needs(a) || needs(gamma) || needs(beta), {a, gamma, beta},
                [xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Tape& t, Node& n) {
                  const Mat& gamma_v = t.node(n.parents[1]).value;
                  const Eigen::Index d = xhat.cols();
                  Mat gx(xhat.rows(), d);
                  Eigen::RowVectorXd ggamma = Eigen::RowVectorXd::Zero(d);
                  Eigen::RowVectorXd gbeta = Eigen::RowVectorXd::Zero(d);
                  for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
                    Eigen::RowVectorXd dy = n.grad.row(i);
                    ggamma += dy.cwiseProduct(xhat.row(i));
                    gbeta += dy;
                    Eigen::RowVectorXd dxhat = dy.cwiseProduct(gamma_v.row(0));
                    double m1 = dxhat.mean();
                    double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
                    gx.row(i) = (dxhat.array() - m1 - xhat.row(i).array() * m2) * inv_sigma(i);
                  }
                  t.accumulate(n.parents[0], std::move(gx));
                  t.accumulate(n.parents[1], ggamma);
                  t.accumulate(n.parents[2], gbeta);
                });
  }

  // Inverted dropout; identity when not training.
  Var dropout(Var a, double rate, Rng& rng, bool training) {
    if (!training || rate <= 0.0) return a;
    if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    Mat mask(a.val().rows(), a.val().cols());
    double keep = 1.0 - rate;
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      for (Eigen::Index i = 0; i < mask.rows(); ++i)
        mask(i, j) = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
    return cwise_mul(a, constant(std::move(mask)));
  }

  void backward(Var root) {
    if (root.val().rows() != 1 || root.val().cols() != 1)
      throw NumericError("backward: root must be scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    node(root).grad = Mat::Ones(1, 1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.param != nullptr) n.param->grad += n.grad;
      if (n.backprop) n.backprop(*this, n);
    }
  }

  const Mat& value(Var v) const { return nodes_[static_cast<std::size_t>(v.idx_)].value; }

  // Gradient of the last backward() pass w.r.t. a tape node (testing hook).
  const Mat& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.idx_)].grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::vector<Var> parents;
    std::function<void(Tape&, Node&)> backprop;
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.idx_)]; }
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.idx_)].requires_grad; }

  void accumulate(Var v, Mat g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = std::move(g);
    else
      n.grad += g;
  }

  Var make(Mat value, bool requires_grad, std::vector<Var> parents,
           std::function<void(Tape&, Node&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.parents = std::move(parents);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  static void check_inner(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a != b) throw NumericError(std::string(what) + ": inner dimension mismatch");
  }
  void check_same_shape(Var a, Var b, const char* what) const {
    if (a.val().rows() != b.val().rows() || a.val().cols() != b.val().cols())
      throw NumericError(std::string(what) + ": shape mismatch");
  }

  std::deque<Node> nodes_;
};

inline const Mat& Var::val() const { return tape_->value(*this); }

}  // namespace protoem::ad
