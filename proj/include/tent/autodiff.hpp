#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tent/error.hpp"
#include "tent/graph.hpp"

namespace tent::ad {

using Mat = Eigen::MatrixXd;

// Handle into a Tape; cheap to copy, valid for the tape's lifetime.
struct Var {
  int idx = -1;
};

// Reverse-mode tape over dense double matrices. Operations record their
// backward transform as a closure; backward() replays them in reverse
// program order, which is a valid topological order by construction.
// A tape is single-use: build a computation, call backward() at most once.
class Tape {
 public:
  Var leaf(Mat value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
  }
  Var constant(Mat value) { return leaf(std::move(value), false); }
  Var scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  const Mat& value(Var v) const { return nodes_[check(v)].value; }
  const Mat& grad(Var v) const {
    const Node& n = nodes_[check(v)];
    if (n.grad.size() == 0)
      const_cast<Node&>(n).grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  double scalar_value(Var v) const {
    const Mat& m = value(v);
    if (m.rows() != 1 || m.cols() != 1) throw ShapeError("expected a 1x1 value");
    return m(0, 0);
  }

  Var add(Var a, Var b) {
    same_shape(a, b, "add");
    return unary_or_binary(value(a) + value(b), {a, b}, [this, a, b](const Mat& g) {
      accum(a, g);
      accum(b, g);
    });
  }

  Var sub(Var a, Var b) {
    same_shape(a, b, "sub");
    return unary_or_binary(value(a) - value(b), {a, b}, [this, a, b](const Mat& g) {
      accum(a, g);
      accum(b, -g);
    });
  }

  // Elementwise product.
  Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    return unary_or_binary(value(a).cwiseProduct(value(b)), {a, b},
                           [this, a, b](const Mat& g) {
                             accum(a, g.cwiseProduct(value(b)));
                             accum(b, g.cwiseProduct(value(a)));
                           });
  }

  Var scale(Var a, double c) {
    return unary_or_binary(value(a) * c, {a},
                           [this, a, c](const Mat& g) { accum(a, g * c); });
  }

  Var shift(Var a, double c) {
    return unary_or_binary((value(a).array() + c).matrix(), {a},
                           [this, a](const Mat& g) { accum(a, g); });
  }

  Var matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows())
      throw ShapeError("matmul: " + dims(a) + " x " + dims(b));
    return unary_or_binary(value(a) * value(b), {a, b},
                           [this, a, b](const Mat& g) {
                             accum(a, g * value(b).transpose());
                             accum(b, value(a).transpose() * g);
                           });
  }

  Var transpose(Var a) {
    return unary_or_binary(value(a).transpose(), {a},
                           [this, a](const Mat& g) { accum(a, g.transpose()); });
  }

  // a (n x m) + row (1 x m) broadcast over rows.
  Var add_row_broadcast(Var a, Var row) {
    broadcast_check(a, row, "add_row_broadcast");
    return unary_or_binary(value(a).rowwise() + value(row).row(0), {a, row},
                           [this, a, row](const Mat& g) {
                             accum(a, g);
                             accum(row, g.colwise().sum());
                           });
  }

  Var sub_row_broadcast(Var a, Var row) {
    broadcast_check(a, row, "sub_row_broadcast");
    return unary_or_binary(value(a).rowwise() - value(row).row(0), {a, row},
                           [this, a, row](const Mat& g) {
                             accum(a, g);
                             accum(row, -g.colwise().sum());
                           });
  }

  // a (n x m) - col (n x 1) broadcast over columns.
  Var sub_col_broadcast(Var a, Var col) {
    if (value(col).cols() != 1 || value(col).rows() != value(a).rows())
      throw ShapeError("sub_col_broadcast: " + dims(a) + " vs " + dims(col));
    return unary_or_binary(value(a).colwise() - value(col).col(0), {a, col},
                           [this, a, col](const Mat& g) {
                             accum(a, g);
                             accum(col, -g.rowwise().sum());
                           });
  }

  Var relu(Var a) {
    return unary_or_binary(value(a).cwiseMax(0.0), {a}, [this, a](const Mat& g) {
      accum(a, g.cwiseProduct(
                   (value(a).array() > 0.0).cast<double>().matrix()));
    });
  }

  // Elementwise product with a constant matrix (dropout masks).
  Var mul_constant(Var a, Mat mask) {
    same_shape_mat(a, mask, "mul_constant");
    Mat out = value(a).cwiseProduct(mask);
    return unary_or_binary(std::move(out), {a},
                           [this, a, m = std::move(mask)](const Mat& g) {
                             accum(a, g.cwiseProduct(m));
                           });
  }

  // out.row(i) = a.row(indices[i]); duplicate indices allowed.
  Var gather_rows(Var a, std::vector<int> indices) {
    const Mat& m = value(a);
    Mat out(static_cast<Eigen::Index>(indices.size()), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] < 0 || indices[i] >= m.rows())
        throw BoundsError("gather_rows: row " + std::to_string(indices[i]) +
                          " out of " + std::to_string(m.rows()));
      out.row(static_cast<Eigen::Index>(i)) = m.row(indices[i]);
    }
    return unary_or_binary(std::move(out), {a},
                           [this, a, idx = std::move(indices)](const Mat& g) {
                             if (!requires_grad(a)) return;
                             Mat da = Mat::Zero(value(a).rows(), value(a).cols());
                             for (std::size_t i = 0; i < idx.size(); ++i)
                               da.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                             accum(a, da);
                           });
  }

  // Vertical concatenation of row blocks.
  Var vstack(const std::vector<Var>& parts) {
    if (parts.empty()) throw ArgumentError("vstack: no parts");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts[0]).cols();
    for (Var p : parts) {
      if (value(p).cols() != cols) throw ShapeError("vstack: column mismatch");
      rows += value(p).rows();
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    return unary_or_binary(std::move(out), parts, [this, parts](const Mat& g) {
      Eigen::Index at = 0;
      for (Var p : parts) {
        const Eigen::Index r = value(p).rows();
        accum(p, g.middleRows(at, r));
        at += r;
      }
    });
  }

  // Column-wise mean over rows -> 1 x m.
  Var mean_rows(Var a) {
    const double n = static_cast<double>(value(a).rows());
    return unary_or_binary(value(a).colwise().mean(), {a},
                           [this, a, n](const Mat& g) {
                             accum(a, (Mat::Ones(static_cast<Eigen::Index>(n), 1) * g) / n);
                           });
  }

  // Row sums -> n x 1.
  Var row_sum(Var a) {
    return unary_or_binary(value(a).rowwise().sum(), {a},
                           [this, a](const Mat& g) {
                             accum(a, g * Mat::Ones(1, value(a).cols()));
                           });
  }

  // Sum of all entries -> 1 x 1.
  Var total_sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return unary_or_binary(std::move(out), {a}, [this, a](const Mat& g) {
      accum(a, Mat::Constant(value(a).rows(), value(a).cols(), g(0, 0)));
    });
  }

  Var block(Var a, int r0, int c0, int nr, int nc) {
    const Mat& m = value(a);
    if (r0 < 0 || c0 < 0 || r0 + nr > m.rows() || c0 + nc > m.cols())
      throw ShapeError("block out of range on " + dims(a));
    return unary_or_binary(m.block(r0, c0, nr, nc), {a},
                           [this, a, r0, c0, nr, nc](const Mat& g) {
                             if (!requires_grad(a)) return;
                             Mat da = Mat::Zero(value(a).rows(), value(a).cols());
                             da.block(r0, c0, nr, nc) = g;
                             accum(a, da);
                           });
  }

  // Column-major reinterpretation; inverse of flattening with the same order.
  Var reshape(Var a, int rows, int cols) {
    const Mat& m = value(a);
    if (m.size() != static_cast<Eigen::Index>(rows) * cols)
      throw ShapeError("reshape " + dims(a) + " -> " + std::to_string(rows) +
                       "x" + std::to_string(cols));
    Mat out = Eigen::Map<const Mat>(m.data(), rows, cols);
    return unary_or_binary(std::move(out), {a},
                           [this, a](const Mat& g) {
                             accum(a, Eigen::Map<const Mat>(
                                          g.data(), value(a).rows(), value(a).cols()));
                           });
  }

  // GIN aggregation: out[v] = (1 + eps) * h[v] + sum_{u in N(v)} h[u].
  // eps is a trainable 1x1 scalar; adjacency is constant.
  Var csr_aggregate(Var h, CsrView adj, Var eps) {
    const Mat& m = value(h);
    if (adj.node_count() != m.rows())
      throw ShapeError("csr_aggregate: adjacency has " +
                       std::to_string(adj.node_count()) + " nodes, features " +
                       dims(h));
    const double e = scalar_value(eps);
    Mat out = (1.0 + e) * m;
    for (int v = 0; v < m.rows(); ++v)
      for (int i = adj.offsets[v]; i < adj.offsets[v + 1]; ++i)
        out.row(v) += m.row(adj.targets[i]);
    return unary_or_binary(std::move(out), {h, eps},
                           [this, h, eps, adj, e](const Mat& g) {
                             if (requires_grad(h)) {
                               Mat dh = (1.0 + e) * g;
                               for (int v = 0; v < g.rows(); ++v)
                                 for (int i = adj.offsets[v]; i < adj.offsets[v + 1]; ++i)
                                   dh.row(adj.targets[i]) += g.row(v);
                               accum(h, dh);
                             }
                             if (requires_grad(eps)) {
                               Mat de(1, 1);
                               de(0, 0) = g.cwiseProduct(value(h)).sum();
                               accum(eps, de);
                             }
                           });
  }

  // Row-wise l2 normalization; a zero row cannot be normalized.
  Var l2_normalize_rows(Var a) {
    const Mat& m = value(a);
    Eigen::VectorXd norms = m.rowwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i)
      if (!(norms[i] > 1e-150))
        throw NumericError("cannot l2-normalize a zero-norm row (row " +
                           std::to_string(i) + ")");
    Mat out = (m.array().colwise() / norms.array()).matrix();
    return unary_or_binary(
        std::move(out), {a}, [this, a, norms = std::move(norms)](const Mat& g) {
          const Mat& m = value(a);
          Mat da(m.rows(), m.cols());
          for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const auto y = m.row(i) / norms[i];
            da.row(i) = (g.row(i) - g.row(i).dot(y) * y) / norms[i];
          }
          accum(a, da);
        });
  }

  // Row-wise l2 norms -> n x 1. Subgradient 0 at an exactly-zero row.
  Var row_norms(Var a) {
    Mat out = value(a).rowwise().norm();
    return unary_or_binary(std::move(out), {a}, [this, a](const Mat& g) {
      const Mat& m = value(a);
      Mat da = Mat::Zero(m.rows(), m.cols());
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double n = m.row(i).norm();
        if (n > 1e-30) da.row(i) = g(i, 0) * m.row(i) / n;
      }
      accum(a, da);
    });
  }

  // 1x1 scalars -> 1 x N row.
  Var concat_scalars(const std::vector<Var>& xs) {
    if (xs.empty()) throw ArgumentError("concat_scalars: no inputs");
    Mat out(1, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
      out(0, static_cast<Eigen::Index>(i)) = scalar_value(xs[i]);
    return unary_or_binary(std::move(out), xs, [this, xs](const Mat& g) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        Mat d(1, 1);
        d(0, 0) = g(0, static_cast<Eigen::Index>(i));
        accum(xs[i], d);
      }
    });
  }

  // out(i, j) = a(i, j) / t(0, j).
  Var div_col_broadcast(Var a, Var t) {
    if (value(t).rows() != 1 || value(t).cols() != value(a).cols())
      throw ShapeError("div_col_broadcast: " + dims(a) + " vs " + dims(t));
    Mat out =
        (value(a).array().rowwise() / value(t).row(0).array()).matrix();
    return unary_or_binary(std::move(out), {a, t}, [this, a, t](const Mat& g) {
      const auto tv = value(t).row(0).array();
      if (requires_grad(a)) accum(a, (g.array().rowwise() / tv).matrix());
      if (requires_grad(t)) {
        Mat dt = -(g.cwiseProduct(value(a))).colwise().sum();
        dt.array() /= (tv * tv);
        accum(t, dt);
      }
    });
  }

  // out = a / s with s a 1x1 scalar.
  Var div_by_scalar(Var a, Var s) {
    const double sv = scalar_value(s);
    return unary_or_binary(value(a) / sv, {a, s}, [this, a, s, sv](const Mat& g) {
      accum(a, g / sv);
      if (requires_grad(s)) {
        Mat ds(1, 1);
        ds(0, 0) = -g.cwiseProduct(value(a)).sum() / (sv * sv);
        accum(s, ds);
      }
    });
  }

  // Sum over rows of -log softmax(logits)[label]; row-max stabilized.
  Var softmax_nll(Var logits, std::vector<int> labels) {
    const Mat& l = value(logits);
    if (static_cast<Eigen::Index>(labels.size()) != l.rows())
      throw ShapeError("softmax_nll: " + std::to_string(labels.size()) +
                       " labels for " + dims(logits));
    for (int y : labels)
      if (y < 0 || y >= l.cols())
        throw ArgumentError("softmax_nll: label " + std::to_string(y) +
                            " outside [0, " + std::to_string(l.cols()) + ")");
    Mat probs(l.rows(), l.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
      const double m = l.row(i).maxCoeff();
      Eigen::RowVectorXd e = (l.row(i).array() - m).exp();
      const double z = e.sum();
      probs.row(i) = e / z;
      loss += std::log(z) - (l(i, labels[static_cast<std::size_t>(i)]) - m);
    }
    Mat out(1, 1);
    out(0, 0) = loss;
    return unary_or_binary(
        std::move(out), {logits},
        [this, logits, probs = std::move(probs), labels = std::move(labels)](const Mat& g) {
          Mat d = probs;
          for (Eigen::Index i = 0; i < d.rows(); ++i)
            d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
          accum(logits, g(0, 0) * d);
        });
  }

  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. `loss` must be
  // 1x1 and downstream of at least one grad-enabled leaf.
  void backward(Var loss) {
    const Node& ln = nodes_[check(loss)];
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
      throw ShapeError("backward: loss must be 1x1");
    if (!ln.requires_grad)
      throw ArgumentError("backward: loss does not depend on any parameter");
    for (Node& n : nodes_)
      if (n.requires_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    nodes_[static_cast<std::size_t>(loss.idx)].grad(0, 0) = 1.0;
    for (int i = loss.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.backprop) n.backprop(n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(const Mat&)> backprop;
  };

  int check(Var v) const {
    if (v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
      throw ArgumentError("invalid tape handle");
    return v.idx;
  }

  void accum(Var v, const Mat& delta) {
    Node& n = nodes_[static_cast<std::size_t>(v.idx)];
    if (n.requires_grad) n.grad += delta;
  }

  template <typename M>
  void same_shape_mat(Var a, const M& b, const char* op) const {
    if (value(a).rows() != b.rows() || value(a).cols() != b.cols())
      throw ShapeError(std::string(op) + ": shape mismatch " + dims(a));
  }

  void same_shape(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw ShapeError(std::string(op) + ": " + dims(a) + " vs " + dims(b));
  }

  void broadcast_check(Var a, Var row, const char* op) const {
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
      throw ShapeError(std::string(op) + ": " + dims(a) + " vs " + dims(row));
  }

  std::string dims(Var v) const {
    return std::to_string(value(v).rows()) + "x" + std::to_string(value(v).cols());
  }

  Var push(Mat value, bool requires_grad,
           std::function<void(const Mat&)> backprop) {
    nodes_.push_back(Node{std::move(value), Mat(), requires_grad,
                          std::move(backprop)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  template <typename Expr>
  Var unary_or_binary(Expr&& out, const std::vector<Var>& parents,
                      std::function<void(const Mat&)> backprop) {
    bool rg = false;
    for (Var p : parents) rg = rg || requires_grad(p);
    return push(Mat(std::forward<Expr>(out)), rg,
                rg ? std::move(backprop) : nullptr);
  }

  std::vector<Node> nodes_;
};

}  // namespace tent::ad
