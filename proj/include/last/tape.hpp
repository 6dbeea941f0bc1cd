#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "last/error.hpp"
#include "last/numerics.hpp"

namespace last {

/// Reverse-mode differentiation tape. Values are computed eagerly as
/// nodes are recorded; backward() runs once over the node list in
/// reverse construction order (which is a reverse topological order by
/// construction, since an op can only reference earlier nodes).
///
/// The op set is exactly what unrolled teaching objectives need; this is
/// not a general graph compiler.
class Tape {
 public:
  enum class Op {
    Const,
    Var,
    Add,
    Sub,
    Scale,      // k * a, constant k
    SMul,       // scalar node * vector node
    Dot,        // <a, b> -> scalar
    Affine,     // W(rows x cols) x + b -> vector
    Relu,
    LeakyRelu,
    Softmax,
    CrossEntropy,  // -sum t_i log p_i -> scalar (differentiable in p and t)
    SqNorm,        // |v|^2 -> scalar
    Outer,         // u v' -> flat row-major
    Concat,
  };

  struct Node {
    Op op;
    std::vector<int> args;
    double k = 0.0;              // Scale factor / LeakyRelu slope
    std::size_t rows = 0, cols = 0;  // Affine shape
    Vec val;
  };

  int constant(Vec v) { return push({Op::Const, {}, 0, 0, 0, std::move(v)}); }
  int constant(double x) { return constant(Vec{x}); }
  int var(Vec v) { return push({Op::Var, {}, 0, 0, 0, std::move(v)}); }

  int add(int a, int b) {
    return push({Op::Add, {a, b}, 0, 0, 0, last::add(val(a), val(b))});
  }
  int sub(int a, int b) {
    return push({Op::Sub, {a, b}, 0, 0, 0, last::sub(val(a), val(b))});
  }
  int scale(int a, double k) {
    return push({Op::Scale, {a}, k, 0, 0, last::scale(val(a), k)});
  }
  /// Elementwise product of a scalar node s and a vector node v.
  int smul(int s, int v) {
    require(val(s).size() == 1, "tape smul: first argument must be scalar");
    return push({Op::SMul, {s, v}, 0, 0, 0, last::scale(val(v), val(s)[0])});
  }
  int dot(int a, int b) {
    return push({Op::Dot, {a, b}, 0, 0, 0, Vec{last::dot(val(a), val(b))}});
  }
  /// out = W x + b where node w holds a rows x cols row-major matrix.
  /// Pass b = -1 for no bias.
  int affine(int w, std::size_t rows, std::size_t cols, int x, int b = -1) {
    require(val(w).size() == rows * cols, "tape affine: weight size mismatch");
    require(val(x).size() == cols, "tape affine: input size mismatch");
    Mat W(rows, cols, val(w));
    Vec out = matvec(W, val(x));
    if (b >= 0) out = last::add(std::move(out), val(b));
    return push({Op::Affine, {w, x, b}, 0, rows, cols, std::move(out)});
  }
  int relu(int a) {
    Vec out = val(a);
    for (auto& x : out) x = std::max(x, 0.0);
    return push({Op::Relu, {a}, 0, 0, 0, std::move(out)});
  }
  int leaky_relu(int a, double slope) {
    Vec out = val(a);
    for (auto& x : out) x = (x > 0.0) ? x : slope * x;
    return push({Op::LeakyRelu, {a}, slope, 0, 0, std::move(out)});
  }
  int softmax(int a) {
    return push({Op::Softmax, {a}, 0, 0, 0, last::softmax(val(a))});
  }
  int cross_entropy(int p, int t) {
    const Vec& pp = val(p);
    const Vec& tt = val(t);
    require(pp.size() == tt.size(), "tape cross_entropy: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pp.size(); ++i)
      s -= tt[i] * std::log(std::max(pp[i], 1e-300));
    return push({Op::CrossEntropy, {p, t}, 0, 0, 0, Vec{s}});
  }
  int sq_norm(int a) {
    return push({Op::SqNorm, {a}, 0, 0, 0, Vec{last::dot(val(a), val(a))}});
  }
  int outer(int u, int v) {
    Mat m = last::outer(val(u), val(v));
    return push({Op::Outer, {u, v}, 0, m.rows, m.cols, std::move(m.a)});
  }
  int concat(const std::vector<int>& parts) {
    require(!parts.empty(), "tape concat: no parts");
    Vec out;
    for (int p : parts) {
      const Vec& v = val(p);
      out.insert(out.end(), v.begin(), v.end());
    }
    return push({Op::Concat, parts, 0, 0, 0, std::move(out)});
  }

  const Vec& val(int id) const { return nodes_[std::size_t(id)].val; }
  std::size_t size() const { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    adj_.clear();
  }

  /// Accumulate d(root)/d(node) for every node into the adjoint buffer.
  /// root must be scalar. Gradients of nodes the root does not depend on
  /// stay zero.
  void backward(int root) {
    require(root >= 0 && std::size_t(root) < nodes_.size(), "tape backward: bad root");
    require(val(root).size() == 1, "tape backward: root must be a scalar node");
    adj_.assign(nodes_.size(), Vec());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      adj_[i].assign(nodes_[i].val.size(), 0.0);
    adj_[std::size_t(root)][0] = 1.0;

    for (std::size_t idx = std::size_t(root) + 1; idx-- > 0;) {
      const Node& n = nodes_[idx];
      const Vec& g = adj_[idx];
      bool live = false;
      for (double x : g)
        if (x != 0.0) {
          live = true;
          break;
        }
      if (!live) continue;
      switch (n.op) {
        case Op::Const:
        case Op::Var:
          break;
        case Op::Add:
          acc(n.args[0], g);
          acc(n.args[1], g);
          break;
        case Op::Sub: {
          acc(n.args[0], g);
          Vec neg = last::scale(g, -1.0);
          acc(n.args[1], neg);
          break;
        }
        case Op::Scale: {
          Vec d = last::scale(g, n.k);
          acc(n.args[0], d);
          break;
        }
        case Op::SMul: {
          const Vec& v = val(n.args[1]);
          const double s = val(n.args[0])[0];
          double ds = 0.0;
          Vec dv(v.size());
          for (std::size_t i = 0; i < v.size(); ++i) {
            ds += g[i] * v[i];
            dv[i] = g[i] * s;
          }
          Vec dsv{ds};
          acc(n.args[0], dsv);
          acc(n.args[1], dv);
          break;
        }
        case Op::Dot: {
          Vec da = last::scale(val(n.args[1]), g[0]);
          Vec db = last::scale(val(n.args[0]), g[0]);
          acc(n.args[0], da);
          acc(n.args[1], db);
          break;
        }
        case Op::Affine: {
          const Vec& x = val(n.args[1]);
          const Vec& w = val(n.args[0]);
          Vec dw(w.size());
          Vec dx(x.size(), 0.0);
          for (std::size_t i = 0; i < n.rows; ++i) {
            for (std::size_t j = 0; j < n.cols; ++j) {
              dw[i * n.cols + j] = g[i] * x[j];
              dx[j] += w[i * n.cols + j] * g[i];
            }
          }
          acc(n.args[0], dw);
          acc(n.args[1], dx);
          if (n.args[2] >= 0) acc(n.args[2], g);
          break;
        }
        case Op::Relu: {
          const Vec& x = val(n.args[0]);
          Vec d(x.size());
          for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
          acc(n.args[0], d);
          break;
        }
        case Op::LeakyRelu: {
          const Vec& x = val(n.args[0]);
          Vec d(x.size());
          for (std::size_t i = 0; i < x.size(); ++i)
            d[i] = x[i] > 0.0 ? g[i] : n.k * g[i];
          acc(n.args[0], d);
          break;
        }
        case Op::Softmax: {
          const Vec& p = n.val;
          double gp = 0.0;
          for (std::size_t i = 0; i < p.size(); ++i) gp += g[i] * p[i];
          Vec d(p.size());
          for (std::size_t i = 0; i < p.size(); ++i) d[i] = p[i] * (g[i] - gp);
          acc(n.args[0], d);
          break;
        }
        case Op::CrossEntropy: {
          const Vec& p = val(n.args[0]);
          const Vec& t = val(n.args[1]);
          Vec dp(p.size()), dt(p.size());
          for (std::size_t i = 0; i < p.size(); ++i) {
            const double pc = std::max(p[i], 1e-300);
            dp[i] = -g[0] * t[i] / pc;
            dt[i] = -g[0] * std::log(pc);
          }
          acc(n.args[0], dp);
          acc(n.args[1], dt);
          break;
        }
        case Op::SqNorm: {
          Vec d = last::scale(val(n.args[0]), 2.0 * g[0]);
          acc(n.args[0], d);
          break;
        }
        case Op::Outer: {
          const Vec& u = val(n.args[0]);
          const Vec& v = val(n.args[1]);
          Vec du(u.size(), 0.0), dv(v.size(), 0.0);
          for (std::size_t i = 0; i < n.rows; ++i)
            for (std::size_t j = 0; j < n.cols; ++j) {
              du[i] += g[i * n.cols + j] * v[j];
              dv[j] += g[i * n.cols + j] * u[i];
            }
          acc(n.args[0], du);
          acc(n.args[1], dv);
          break;
        }
        case Op::Concat: {
          std::size_t off = 0;
          for (int p : n.args) {
            const std::size_t len = val(p).size();
            Vec d(g.begin() + long(off), g.begin() + long(off + len));
            acc(p, d);
            off += len;
          }
          break;
        }
      }
    }
  }

  /// Adjoint of a node after backward().
  const Vec& grad(int id) const {
    require(!adj_.empty(), "tape grad: backward() has not run");
    return adj_[std::size_t(id)];
  }

 private:
  int push(Node n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }
  void acc(int id, const Vec& d) {
    Vec& a = adj_[std::size_t(id)];
    for (std::size_t i = 0; i < d.size(); ++i) a[i] += d[i];
  }

  std::vector<Node> nodes_;
  std::vector<Vec> adj_;
};

}  // namespace last
