#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>

#include "last/error.hpp"
#include "last/learners.hpp"
#include "last/numerics.hpp"
#include "last/rng.hpp"
#include "last/data.hpp"

namespace last {

/// Admissible label set for synthesis.
struct LabelConstraint {
  enum class Kind { None, OneHot, Simplex, Magnitude } kind = Kind::None;
  enum class Anchor { Prediction, GroundTruth } anchor = Anchor::Prediction;
  double radius = 1.0;
  int p = 2;  // 1, 2 or 0 for infinity

  static LabelConstraint none() { return {}; }
  static LabelConstraint one_hot() { return {Kind::OneHot, Anchor::Prediction, 1.0, 2}; }
  static LabelConstraint simplex() { return {Kind::Simplex, Anchor::Prediction, 1.0, 2}; }
  static LabelConstraint magnitude(double r, Anchor a = Anchor::Prediction, int p = 2) {
    require(r > 0.0, "LabelConstraint: radius must be positive");
    require(p == 1 || p == 2 || p == 0, "LabelConstraint: p must be 1, 2 or inf(0)");
    return {Kind::Magnitude, a, r, p};
  }
};

/// Constants for the theory-driven teachers.
struct TheoryConfig {
  double c1 = 1.0;          // gain of the fixed-rescaling teacher
  double c2 = 0.5;          // sufficient-decrease constant, in [1/2, 1)
  double alpha = 0.0;       // Hessian interpolation point, in [0, 1]
};

/// Scalar-label pieces of a learner the greedy teachers operate on.
struct TeachCtx {
  LearnerKind kind = LearnerKind::Lsr;
  double lambda = 0.0;
  std::size_t classes = 2;          // only used by MulticlassLinear
  std::size_t reg_dims = SIZE_MAX;  // bias coordinate stays unregularized

  Vec grad(const Vec& x, const Vec& y, const Vec& w) const {
    LearnerParams lp;
    lp.kind = kind;
    lp.lambda = lambda;
    lp.classes = classes;
    lp.reg_dims = reg_dims;
    lp.w = w;
    return learner_grad(lp, x, y);
  }
  double loss(const Vec& x, const Vec& y, const Vec& w) const {
    LearnerParams lp;
    lp.kind = kind;
    lp.lambda = lambda;
    lp.classes = classes;
    lp.reg_dims = reg_dims;
    lp.w = w;
    return learner_loss(lp, x, y);
  }
};

struct Discrepancy {
  double G = 0.0;   // |w - eta grad - w*|^2
  double T1 = 0.0;  // |grad|^2
  double T2 = 0.0;  // <w - w*, grad>
};

/// One-step parameter discrepancy and its decomposition
/// G = |w - w*|^2 + eta^2 T1 - 2 eta T2.
inline Discrepancy discrepancy_G(const Vec& x, const Vec& y, const Vec& w,
                                 const Vec& wstar, double eta, const TeachCtx& ctx) {
  require(w.size() == wstar.size(), "discrepancy_G: dimension mismatch");
  const Vec g = ctx.grad(x, y, w);
  Vec u = sub(w, wstar);
  Discrepancy d;
  d.T1 = dot(g, g);
  d.T2 = dot(u, g);
  axpy(u, -eta, g);
  d.G = dot(u, u);
  return d;
}

inline double G_value(const Vec& x, const Vec& y, const Vec& w, const Vec& wstar,
                      double eta, const TeachCtx& ctx) {
  return discrepancy_G(x, y, w, wstar, eta, ctx).G;
}

// ---------------------------------------------------------------------------
// Label synthesis, scalar learners
// ---------------------------------------------------------------------------

/// Closed-form label for the unregularized LSR learner:
/// y* = (1 - lam) <w,x> + lam <w*,x> with lam = 1 / (eta <x,x>).
inline double synth_label_lsr(const Vec& x, const Vec& w, const Vec& wstar, double eta) {
  const double xx = dot(x, x);
  require(xx > 0.0, "synth_label_lsr: zero feature vector");
  require(eta > 0.0, "synth_label_lsr: eta must be positive");
  const double lam = 1.0 / (eta * xx);
  return (1.0 - lam) * dot(w, x) + lam * dot(wstar, x);
}

/// Exact G minimizer for the ridge-regularized LSR gradient; reduces to
/// synth_label_lsr at lambda = 0.
inline double synth_label_lsr_reg(const Vec& x, const Vec& w, const Vec& wstar,
                                  double eta, double lambda,
                                  std::size_t reg_dims = SIZE_MAX) {
  const double xx = dot(x, x);
  require(xx > 0.0, "synth_label_lsr_reg: zero feature vector");
  Vec a = w;
  const std::size_t n = std::min(reg_dims, w.size());
  for (std::size_t i = 0; i < n; ++i) a[i] *= 1.0 - eta * lambda;
  const double pred = dot(w, x);
  return pred - (dot(a, x) - dot(wstar, x)) / (eta * xx);
}

/// Scalar admissible interval for a constraint (anchor resolved against
/// prediction / ground truth).
inline std::pair<double, double> scalar_bracket(const LabelConstraint& c, double pred,
                                                double ytilde) {
  switch (c.kind) {
    case LabelConstraint::Kind::Magnitude: {
      const double anchor =
          c.anchor == LabelConstraint::Anchor::Prediction ? pred : ytilde;
      return {anchor - c.radius, anchor + c.radius};
    }
    case LabelConstraint::Kind::None:
    default: {
      const double B = std::max(10.0, 10.0 * std::abs(ytilde));
      return {-B, B};
    }
  }
}

/// Greedy label for the LR learner via deterministic 1-D search over the
/// admissible set; never returns a label with larger G than the ground
/// truth when the ground truth is admissible.
inline double synth_label_lr(const Vec& x, double ytilde, const Vec& w, const Vec& wstar,
                             double eta, double lambda = 0.0,
                             const LabelConstraint& c = LabelConstraint::none(),
                             std::size_t reg_dims = SIZE_MAX) {
  TeachCtx ctx{LearnerKind::Lr, lambda, 2, reg_dims};
  auto G = [&](double y) { return G_value(x, Vec{y}, w, wstar, eta, ctx); };

  if (c.kind == LabelConstraint::Kind::OneHot) {
    // binary +-1 candidates, ties toward +1 (the lower class index)
    return G(1.0) <= G(-1.0) ? 1.0 : -1.0;
  }
  auto [lo, hi] = scalar_bracket(c, dot(w, x), ytilde);
  require(lo < hi, "synth_label_lr: empty admissible set");
  double y = minimize_1d(G, lo, hi, 1e-7);
  const bool yt_ok = c.kind != LabelConstraint::Kind::Magnitude ||
                     (ytilde >= lo && ytilde <= hi);
  if (yt_ok && G(ytilde) < G(y)) y = ytilde;
  return y;
}

/// Greedy scalar label for the LSR learner under a constraint.
inline double synth_label_lsr_constrained(const Vec& x, double ytilde, const Vec& w,
                                          const Vec& wstar, double eta, double lambda,
                                          const LabelConstraint& c,
                                          std::size_t reg_dims = SIZE_MAX) {
  const double y_free = synth_label_lsr_reg(x, w, wstar, eta, lambda, reg_dims);
  switch (c.kind) {
    case LabelConstraint::Kind::None:
      return y_free;
    case LabelConstraint::Kind::OneHot: {
      TeachCtx ctx{LearnerKind::Lsr, lambda, 2, reg_dims};
      auto G = [&](double y) { return G_value(x, Vec{y}, w, wstar, eta, ctx); };
      return G(1.0) <= G(-1.0) ? 1.0 : -1.0;
    }
    default: {
      auto [lo, hi] = scalar_bracket(c, dot(w, x), ytilde);
      return std::min(std::max(y_free, lo), hi);  // G is quadratic in y
    }
  }
}

// ---------------------------------------------------------------------------
// Label synthesis, vector learners (multiclass linear head)
// ---------------------------------------------------------------------------

namespace detail {

inline double pnorm(const Vec& v, int p) {
  if (p == 1) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
  }
  if (p == 0) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  return norm2(v);
}

/// Clip u into the p-ball of the given radius around anchor.
inline Vec clip_to_ball(Vec u, const Vec& anchor, double radius, int p) {
  Vec delta = sub(u, anchor);
  if (p == 0) {  // infinity norm: coordinate clamp (exact projection)
    for (std::size_t i = 0; i < u.size(); ++i)
      u[i] = anchor[i] + std::min(std::max(delta[i], -radius), radius);
    return u;
  }
  const double nrm = pnorm(delta, p);
  if (nrm <= radius) return u;
  return add(scale(delta, radius / nrm), anchor);
}

}  // namespace detail

/// Greedy label vector for the multiclass linear learner. OneHot labels
/// are found by exhaustive enumeration (ties resolved toward the
/// smallest class index); Simplex by projected gradient descent with a
/// fixed deterministic budget; Magnitude by clipping the unconstrained
/// minimizer into the ball; None in closed form (G is quadratic in y).
inline Vec synth_label_vector(const Vec& x, const Vec& ytilde, const Vec& w,
                              const Vec& wstar, double eta, std::size_t K,
                              double lambda = 0.0,
                              const LabelConstraint& c = LabelConstraint::none()) {
  require(K >= 2, "synth_label_vector: need at least two classes");
  require(ytilde.size() == K, "synth_label_vector: ground-truth size mismatch");
  TeachCtx ctx{LearnerKind::MulticlassLinear, lambda, K};
  auto G = [&](const Vec& y) { return G_value(x, y, w, wstar, eta, ctx); };

  if (c.kind == LabelConstraint::Kind::OneHot) {
    std::size_t best = 0;
    double best_g = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      Vec y(K, 0.0);
      y[k] = 1.0;
      const double g = G(y);
      if (g < best_g) {
        best_g = g;
        best = k;
      }
    }
    Vec y(K, 0.0);
    y[best] = 1.0;
    return y;
  }

  // Unconstrained minimizer, per class:
  //   y_k = p_k - <A_k, x> / (eta |x|^2),  A = (1 - eta lambda) W - W*.
  const double xx = dot(x, x);
  require(xx > 0.0, "synth_label_vector: zero feature vector");
  const std::size_t d = x.size();
  const Vec p = softmax(mclinear_logits(w, K, x));
  Vec y_free(K);
  for (std::size_t k = 0; k < K; ++k) {
    double ax = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      ax += ((1.0 - eta * lambda) * w[k * d + j] - wstar[k * d + j]) * x[j];
    y_free[k] = p[k] - ax / (eta * xx);
  }

  switch (c.kind) {
    case LabelConstraint::Kind::None:
      return y_free;
    case LabelConstraint::Kind::Simplex: {
      // projected gradient descent on the quadratic G, init at ytilde
      const double Lhat = eta * eta * xx;
      const double step = 0.1 / Lhat;
      Vec y = project_simplex(ytilde);
      for (int it = 0; it < 100; ++it) {
        // grad_k G = 2 eta^2 |x|^2 (y_k - y_free_k)
        Vec gy(K);
        for (std::size_t k = 0; k < K; ++k)
          gy[k] = 2.0 * eta * eta * xx * (y[k] - y_free[k]);
        axpy(y, -step, gy);
        y = project_simplex(y);
      }
      if (G(ytilde) < G(y)) y = project_simplex(ytilde);
      return y;
    }
    case LabelConstraint::Kind::Magnitude: {
      const Vec anchor =
          c.anchor == LabelConstraint::Anchor::Prediction ? p : ytilde;
      Vec y = detail::clip_to_ball(y_free, anchor, c.radius, c.p);
      if (detail::pnorm(sub(ytilde, anchor), c.p) <= c.radius && G(ytilde) < G(y))
        y = ytilde;
      return y;
    }
    default:
      return y_free;
  }
}

// ---------------------------------------------------------------------------
// MLP heuristic: choose y minimizing the weighted discrepancy of the
// one-step-updated layers,
//   |W - eta dW(y) - W*|_F^2 + beta |V - eta dV(y) - V*|_F^2.
// ---------------------------------------------------------------------------

struct MlpSynthProblem {
  const Vec& x;
  const Mat& V;
  const Mat& W;
  const Mat& Vstar;
  const Mat& Wstar;
  double eta;
  double beta;
  Activation act;
  double slope;
  double lambda;

  double objective(const Vec& y) const {
    MlpGrads g = mlp_grad_raw(x, y, V, W, act, slope, lambda);
    double obj = 0.0;
    for (std::size_t i = 0; i < W.a.size(); ++i) {
      const double r = W.a[i] - eta * g.dW.a[i] - Wstar.a[i];
      obj += r * r;
    }
    if (beta != 0.0)
      for (std::size_t i = 0; i < V.a.size(); ++i) {
        const double r = V.a[i] - eta * g.dV.a[i] - Vstar.a[i];
        obj += beta * r * r;
      }
    return obj;
  }

  /// Analytic gradient of objective() w.r.t. y (the objective is
  /// quadratic in y because the loss gradients are linear in y).
  Vec gradient(const Vec& y) const {
    const MlpForward f = mlp_forward(x, V, W, act, slope);
    const std::size_t K = y.size();
    // residual matrices of the one-step updates
    MlpGrads g = mlp_grad_raw(x, y, V, W, act, slope, lambda);
    Mat A(W.rows, W.cols);  // W - eta dW - W*
    for (std::size_t i = 0; i < A.a.size(); ++i)
      A.a[i] = W.a[i] - eta * g.dW.a[i] - Wstar.a[i];
    Mat B(V.rows, V.cols);
    for (std::size_t i = 0; i < B.a.size(); ++i)
      B.a[i] = V.a[i] - eta * g.dV.a[i] - Vstar.a[i];

    // d obj / dy = 2 eta (A' P) + 2 eta beta W' ((B' x) .* sigma'(U))
    Vec grad = matvec_t(A, f.P);
    for (auto& v : grad) v *= 2.0 * eta;
    if (beta != 0.0) {
      Vec bx = matvec_t(B, x);
      for (std::size_t i = 0; i < bx.size(); ++i)
        bx[i] *= act_deriv(f.U[i], act, slope);
      Vec second = matvec_t(W, bx);
      axpy(grad, 2.0 * eta * beta, second);
    }
    (void)K;
    return grad;
  }

  /// Upper bound on the Lipschitz constant of gradient() (Frobenius).
  double lipschitz() const {
    const MlpForward f = mlp_forward(x, V, W, act, slope);
    double l = 2.0 * eta * eta * dot(f.P, f.P);
    if (beta != 0.0) {
      double ws = 0.0;
      for (std::size_t r = 0; r < W.rows; ++r) {
        const double sd = act_deriv(f.U[r], act, slope);
        for (std::size_t k = 0; k < W.cols; ++k) {
          const double v = sd * W(r, k);
          ws += v * v;
        }
      }
      l += 2.0 * eta * eta * beta * dot(x, x) * ws;
    }
    return l;
  }
};

inline Vec synth_label_mlp(const Vec& x, const Vec& ytilde, const Mat& V, const Mat& W,
                           const Mat& Vstar, const Mat& Wstar, double eta,
                           double beta = 1.0,
                           const LabelConstraint& c = LabelConstraint::none(),
                           Activation act = Activation::LeakyRelu, double slope = 0.01,
                           double lambda = 0.0) {
  require(beta >= 0.0, "synth_label_mlp: beta must be nonnegative");
  const std::size_t K = W.cols;
  require(ytilde.size() == K, "synth_label_mlp: ground-truth size mismatch");
  MlpSynthProblem prob{x, V, W, Vstar, Wstar, eta, beta, act, slope, lambda};

  if (c.kind == LabelConstraint::Kind::OneHot) {
    std::size_t best = 0;
    double best_v = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      Vec y(K, 0.0);
      y[k] = 1.0;
      const double v = prob.objective(y);
      if (v < best_v) {
        best_v = v;
        best = k;
      }
    }
    Vec y(K, 0.0);
    y[best] = 1.0;
    return y;
  }

  const double step = 0.5 / std::max(prob.lipschitz(), 1e-300);
  const bool simplex = c.kind == LabelConstraint::Kind::Simplex;
  Vec y = simplex ? project_simplex(ytilde) : ytilde;
  for (int it = 0; it < 200; ++it) {
    Vec g = prob.gradient(y);
    axpy(y, -step, g);
    if (simplex) y = project_simplex(y);
  }
  if (c.kind == LabelConstraint::Kind::Magnitude) {
    const Vec anchor = c.anchor == LabelConstraint::Anchor::Prediction
                           ? mlp_forward(x, V, W, act, slope).probs
                           : ytilde;
    y = detail::clip_to_ball(y, anchor, c.radius, c.p);
    if (detail::pnorm(sub(ytilde, anchor), c.p) <= c.radius &&
        prob.objective(ytilde) < prob.objective(y))
      y = ytilde;
  } else if (simplex) {
    Vec yt = project_simplex(ytilde);
    if (prob.objective(yt) < prob.objective(y)) y = yt;
  } else if (prob.objective(ytilde) < prob.objective(y)) {
    y = ytilde;
  }
  return y;
}

// ---------------------------------------------------------------------------
// IMT-style pool scan and mixed teaching
// ---------------------------------------------------------------------------

struct Selection {
  std::size_t index = 0;
  double G = 0.0;
};

/// Greedy example selection with ground-truth labels: argmin over the
/// (optionally subsampled) pool of G(x_i, y~_i | w); ties resolved to the
/// lowest index.
inline Selection imt_select(const Pool& pool, const Vec& w, const Vec& wstar, double eta,
                            const TeachCtx& ctx,
                            std::optional<std::size_t> subsample = std::nullopt,
                            SeededRng* rng = nullptr) {
  require(pool.size() > 0, "imt_select: empty pool");
  Selection best;
  best.G = std::numeric_limits<double>::infinity();
  auto consider = [&](std::size_t i) {
    const Vec y = ctx.kind == LearnerKind::MulticlassLinear && pool.label_kind == LabelKind::BinaryPm1
                      ? pool.onehot2(i)
                      : pool.examples[i].y;
    const double g = G_value(pool.examples[i].x, y, w, wstar, eta, ctx);
    if (g < best.G) {
      best.G = g;
      best.index = i;
    }
  };
  if (subsample && *subsample < pool.size()) {
    require(rng != nullptr, "imt_select: subsampling requires an rng");
    for (std::size_t s = 0; s < *subsample; ++s) consider(rng->uniform_index(pool.size()));
  } else {
    for (std::size_t i = 0; i < pool.size(); ++i) consider(i);
  }
  return best;
}

/// Alternating step: IMT selection with labels fixed at ground truth,
/// then label synthesis on the selected example.
inline std::pair<std::size_t, Vec> mixed_teach_step(const Pool& pool, const Vec& w,
                                                    const Vec& wstar, double eta,
                                                    const TeachCtx& ctx,
                                                    const LabelConstraint& c) {
  const Selection sel = imt_select(pool, w, wstar, eta, ctx);
  const Example& e = pool.examples[sel.index];
  Vec y;
  switch (ctx.kind) {
    case LearnerKind::Lsr:
      y = Vec{synth_label_lsr_constrained(e.x, e.y[0], w, wstar, eta, ctx.lambda, c,
                                          ctx.reg_dims)};
      break;
    case LearnerKind::Lr:
      y = Vec{synth_label_lr(e.x, e.y[0], w, wstar, eta, ctx.lambda, c, ctx.reg_dims)};
      break;
    case LearnerKind::MulticlassLinear: {
      const Vec yt = pool.label_kind == LabelKind::BinaryPm1 ? pool.onehot2(sel.index)
                                                             : e.y;
      y = synth_label_vector(e.x, yt, w, wstar, eta, ctx.classes, ctx.lambda, c);
      break;
    }
    default:
      throw Error("mixed_teach_step: unsupported learner kind");
  }
  return {sel.index, y};
}

// ---------------------------------------------------------------------------
// Scalar gradient rescaling g(y) and the theory-driven teachers
// ---------------------------------------------------------------------------

/// Factor by which replacing the label y~ with y rescales the gradient:
/// grad l(x, y | w) = g(y) grad l(x, y~ | w).
inline double g_scalar(double y, const Vec& x, double ytilde, const Vec& w,
                       LearnerKind kind) {
  const double pred = dot(w, x);
  switch (kind) {
    case LearnerKind::Lsr: {
      const double denom = pred - ytilde;
      require(std::abs(denom) > 1e-300, "g_scalar: degenerate denominator (pred == y~)");
      return (pred - y) / denom;
    }
    case LearnerKind::Lr: {
      require(std::abs(ytilde) > 1e-300, "g_scalar: degenerate denominator (y~ == 0)");
      const double num = y * (1.0 + std::exp(std::min(ytilde * pred, 500.0)));
      const double den = ytilde * (1.0 + std::exp(std::min(y * pred, 500.0)));
      return num / den;
    }
    default:
      throw Error("g_scalar: defined for scalar-label learners only");
  }
}

/// Fixed-gain rescaling teacher; g(y) = c1 |w - w*| yields exponential
/// teachability on interpolation data.
inline Vec et_gain_teacher(const Vec& x, double ytilde, const Vec& w, const Vec& wstar,
                           double eta, double c1, const TeachCtx& ctx) {
  const double g = c1 * dist2(w, wstar);
  const Vec grad = ctx.grad(x, Vec{ytilde}, w);
  Vec out = w;
  axpy(out, -eta * g, grad);
  return out;
}

struct ArmijoResult {
  double g = 0.0;
  Vec w_next;
  bool fallback = false;
};

/// Sufficient-decrease rescaling teacher: largest g on the geometric grid
/// g_max * factor^k with
///   l(w - eta g grad) <= l(w) - c2 eta g |grad|^2.
/// Needs no target parameters. Falls back to an effective step of
/// eta_min when no grid point satisfies the condition.
inline ArmijoResult armijo_teacher(const Vec& x, double ytilde, const Vec& w, double eta,
                                   double c2, double backtrack, const TeachCtx& ctx,
                                   double g_max = 1e8, int k_max = 120,
                                   double eta_min = 1e-12) {
  require(c2 >= 0.5 && c2 < 1.0, "armijo_teacher: c2 must be in [1/2, 1)");
  require(backtrack > 0.0 && backtrack < 1.0, "armijo_teacher: bad backtrack factor");
  const Vec grad = ctx.grad(x, Vec{ytilde}, w);
  const double gn2 = dot(grad, grad);
  require(gn2 > 0.0, "armijo_teacher: zero gradient");
  const double l0 = ctx.loss(x, Vec{ytilde}, w);

  double g = g_max;
  for (int k = 0; k < k_max; ++k, g *= backtrack) {
    Vec wn = w;
    axpy(wn, -eta * g, grad);
    const double ln = ctx.loss(x, Vec{ytilde}, wn);
    if (std::isfinite(ln) && ln <= l0 - c2 * eta * g * gn2) {
      return {g, std::move(wn), false};
    }
  }
  const double g_fb = eta_min / eta;
  Vec wn = w;
  axpy(wn, -eta * g_fb, grad);
  return {g_fb, std::move(wn), true};
}

/// Interpolated-Hessian Newton teacher:
///   w' = w - H(alpha w* + (1-alpha) w)^{-1} grad f(w).
/// For LSR the Hessian is constant, so one step reaches the ridge
/// solution exactly from any start.
inline Vec newton_last_teacher(const std::function<Vec(const Vec&)>& grad_f,
                               const std::function<Mat(const Vec&)>& hess_f,
                               const Vec& w, const Vec& wstar, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "newton_last_teacher: alpha must be in [0,1]");
  Vec point = add(scale(wstar, alpha), scale(w, 1.0 - alpha));
  Mat H = hess_f(point);
  Vec g = grad_f(w);
  Vec step;
  try {
    step = solve_spd(H, g);
  } catch (const Error&) {
    throw Error("newton_last_teacher: singular or indefinite Hessian");
  }
  return sub(w, step);
}

/// Full-pool LSR objective f(w) = (1/n) sum 1/2 (<w,x_i> - y_i)^2
/// + lambda/2 |w|^2 packaged for the Newton teacher.
struct LsrObjective {
  const Pool& pool;
  double lambda = 0.0;
  std::size_t reg_dims = SIZE_MAX;  // bias coordinate stays unregularized

  Vec grad(const Vec& w) const {
    Vec g(w.size(), 0.0);
    for (const auto& e : pool.examples) {
      const double r = dot(w, e.x) - e.y[0];
      axpy(g, r / double(pool.size()), e.x);
    }
    const std::size_t n = std::min(reg_dims, w.size());
    for (std::size_t i = 0; i < n; ++i) g[i] += lambda * w[i];
    return g;
  }
  Mat hess(const Vec&) const {
    const std::size_t d = pool.d;
    Mat H(d, d);
    for (const auto& e : pool.examples)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          H(i, j) += e.x[i] * e.x[j] / double(pool.size());
    const std::size_t n = std::min(reg_dims, d);
    for (std::size_t i = 0; i < n; ++i) H(i, i) += lambda;
    return H;
  }
  double value(const Vec& w) const {
    double f = 0.0;
    for (const auto& e : pool.examples) {
      const double r = dot(w, e.x) - e.y[0];
      f += 0.5 * r * r / double(pool.size());
    }
    const std::size_t n = std::min(reg_dims, w.size());
    for (std::size_t i = 0; i < n; ++i) f += 0.5 * lambda * w[i] * w[i];
    return f;
  }
};

}  // namespace last
