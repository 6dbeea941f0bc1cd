#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include "last/error.hpp"
#include "last/numerics.hpp"

namespace last {

enum class LearnerKind { Lsr, Lr, MulticlassLinear, Mlp2 };

enum class Activation { Relu, LeakyRelu };

/// Learning-rate schedule; eta_t > 0 for all t.
struct StepSchedule {
  enum class Kind { Constant, InverseDecay } kind = Kind::Constant;
  double eta0 = 1e-3;
  double decay = 0.0;

  double at(std::size_t t) const {
    require(eta0 > 0.0, "StepSchedule: eta0 must be positive");
    switch (kind) {
      case Kind::Constant:
        return eta0;
      case Kind::InverseDecay:
        return eta0 / (1.0 + decay * double(t));
    }
    return eta0;
  }
};

/// Learner weight state. Linear kinds use w; Mlp2 uses V (d1 x d2) and
/// W (d2 x K). The MulticlassLinear weight matrix is stored K x d
/// row-major in w so that logits = Wl x.
struct LearnerParams {
  LearnerKind kind = LearnerKind::Lsr;
  Vec w;
  Mat V, W;
  std::size_t classes = 0;  // K for MulticlassLinear / Mlp2
  double lambda = 0.0;      // l2 coefficient, applied to weights
  std::size_t reg_dims = SIZE_MAX;  // leading coords of w regularized
                                    // (excludes an augmented bias)
  Activation act = Activation::LeakyRelu;
  double act_slope = 0.01;

  std::size_t dim() const {
    if (kind == LearnerKind::Mlp2) return V.rows;
    if (kind == LearnerKind::MulticlassLinear) return w.size() / classes;
    return w.size();
  }

  Vec flat() const {
    if (kind != LearnerKind::Mlp2) return w;
    Vec f = W.a;
    f.insert(f.end(), V.a.begin(), V.a.end());
    return f;
  }
};

// ---------------------------------------------------------------------------
// Least-squares regression: l = 1/2 (<w,x> - y)^2 + lambda/2 |w|^2
// ---------------------------------------------------------------------------

namespace detail {

/// lambda/2 |w_reg|^2 over the regularized prefix of w.
inline double reg_value(const Vec& w, double lambda, std::size_t reg_dims) {
  if (lambda == 0.0) return 0.0;
  double s = 0.0;
  const std::size_t n = std::min(reg_dims, w.size());
  for (std::size_t i = 0; i < n; ++i) s += w[i] * w[i];
  return 0.5 * lambda * s;
}

inline void reg_grad(Vec& g, const Vec& w, double lambda, std::size_t reg_dims) {
  if (lambda == 0.0) return;
  const std::size_t n = std::min(reg_dims, w.size());
  for (std::size_t i = 0; i < n; ++i) g[i] += lambda * w[i];
}

}  // namespace detail

inline double lsr_loss(const Vec& x, double y, const Vec& w, double lambda = 0.0,
                       std::size_t reg_dims = SIZE_MAX) {
  const double r = dot(w, x) - y;
  return 0.5 * r * r + detail::reg_value(w, lambda, reg_dims);
}

inline Vec lsr_grad(const Vec& x, double y, const Vec& w, double lambda = 0.0,
                    std::size_t reg_dims = SIZE_MAX) {
  const double r = dot(w, x) - y;
  Vec g = scale(x, r);
  detail::reg_grad(g, w, lambda, reg_dims);
  return g;
}

// ---------------------------------------------------------------------------
// Logistic regression with scalar labels:
// l = log(1 + exp(-y <w,x>)) + lambda/2 |w|^2; the label need not be +-1,
// synthesized labels are arbitrary reals.
// ---------------------------------------------------------------------------

inline double lr_loss(const Vec& x, double y, const Vec& w, double lambda = 0.0,
                      std::size_t reg_dims = SIZE_MAX) {
  const double m = y * dot(w, x);
  // log(1+exp(-m)), overflow-safe
  const double l = (m > 500.0) ? 0.0 : (m < -500.0 ? -m : std::log1p(std::exp(-m)));
  return l + detail::reg_value(w, lambda, reg_dims);
}

inline Vec lr_grad(const Vec& x, double y, const Vec& w, double lambda = 0.0,
                   std::size_t reg_dims = SIZE_MAX) {
  const double m = y * dot(w, x);
  const double denom = (m > 500.0) ? std::numeric_limits<double>::infinity()
                                   : 1.0 + std::exp(m);
  const double c = std::isinf(denom) ? 0.0 : -y / denom;
  Vec g = scale(x, c);
  detail::reg_grad(g, w, lambda, reg_dims);
  return g;
}

// ---------------------------------------------------------------------------
// Multiclass linear learner: cross-entropy on softmax(Wl x), Wl is K x d.
// Included as the K-class analogue used by parameterized teaching.
// ---------------------------------------------------------------------------

inline Vec mclinear_logits(const Vec& wl, std::size_t K, const Vec& x) {
  require(wl.size() == K * x.size(), "mclinear: weight size mismatch");
  Mat W(K, x.size(), wl);
  return matvec(W, x);
}

inline double mclinear_loss(const Vec& x, const Vec& y, const Vec& wl, std::size_t K,
                            double lambda = 0.0) {
  require(y.size() == K, "mclinear_loss: label size mismatch");
  const Vec p = softmax(mclinear_logits(wl, K, x));
  double l = 0.0;
  for (std::size_t k = 0; k < K; ++k) l -= y[k] * std::log(std::max(p[k], 1e-300));
  return l + 0.5 * lambda * dot(wl, wl);
}

/// Gradient w.r.t. the flat K x d weights: (p - y) x' + lambda Wl.
/// Valid for any real label vector y (the CE gradient is linear in y).
inline Vec mclinear_grad(const Vec& x, const Vec& y, const Vec& wl, std::size_t K,
                         double lambda = 0.0) {
  require(y.size() == K, "mclinear_grad: label size mismatch");
  const Vec p = softmax(mclinear_logits(wl, K, x));
  const std::size_t d = x.size();
  Vec g(K * d);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < d; ++j) g[k * d + j] = (p[k] - y[k]) * x[j];
  if (lambda != 0.0) axpy(g, lambda, wl);
  return g;
}

// ---------------------------------------------------------------------------
// Two-layer MLP: l = CrossEntropy(SoftMax(W' sigma(V' x)), y) with
// V in R^{d1 x d2}, W in R^{d2 x K}; intermediates U = V' x, P = sigma(U).
// ---------------------------------------------------------------------------

struct MlpForward {
  Vec U, P, logits, probs;
};

inline double act_apply(double u, Activation act, double slope) {
  if (u > 0.0) return u;
  return act == Activation::Relu ? 0.0 : slope * u;
}

inline double act_deriv(double u, Activation act, double slope) {
  if (u > 0.0) return 1.0;
  return act == Activation::Relu ? 0.0 : slope;
}

inline MlpForward mlp_forward(const Vec& x, const Mat& V, const Mat& W,
                              Activation act = Activation::LeakyRelu,
                              double slope = 0.01) {
  require(x.size() == V.rows, "mlp_forward: input size mismatch");
  require(V.cols == W.rows, "mlp_forward: layer size mismatch");
  MlpForward f;
  f.U = matvec_t(V, x);
  f.P.resize(f.U.size());
  for (std::size_t i = 0; i < f.U.size(); ++i) f.P[i] = act_apply(f.U[i], act, slope);
  f.logits = matvec_t(W, f.P);
  f.probs = softmax(f.logits);
  return f;
}

struct MlpGrads {
  double loss = 0.0;
  Mat dV, dW;
};

/// Gradients for an arbitrary real label vector (no simplex check); used
/// internally by teachers that search over off-simplex labels. The loss
/// value is only meaningful for labels on the simplex.
inline MlpGrads mlp_grad_raw(const Vec& x, const Vec& y, const Mat& V, const Mat& W,
                             Activation act = Activation::LeakyRelu, double slope = 0.01,
                             double lambda = 0.0) {
  require(y.size() == W.cols, "mlp_grad: label size mismatch");
  const MlpForward f = mlp_forward(x, V, W, act, slope);
  MlpGrads g;
  for (std::size_t k = 0; k < y.size(); ++k)
    g.loss -= y[k] * std::log(std::max(f.probs[k], 1e-300));

  Vec dlogits(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) dlogits[k] = f.probs[k] - y[k];

  // dW = P dlogits'
  g.dW = outer(f.P, dlogits);
  // dP = W dlogits; dU = dP .* sigma'(U); dV = x dU'
  Vec dP = matvec(W, dlogits);
  Vec dU(dP.size());
  for (std::size_t i = 0; i < dP.size(); ++i)
    dU[i] = dP[i] * act_deriv(f.U[i], act, slope);
  g.dV = outer(x, dU);
  if (lambda != 0.0) {
    g.loss += 0.5 * lambda * (dot(W.a, W.a) + dot(V.a, V.a));
    for (std::size_t i = 0; i < g.dW.a.size(); ++i) g.dW.a[i] += lambda * W.a[i];
    for (std::size_t i = 0; i < g.dV.a.size(); ++i) g.dV.a[i] += lambda * V.a[i];
  }
  return g;
}

/// Loss and gradients for a simplex label; rejects labels off the simplex
/// by more than 1e-8.
inline MlpGrads mlp_loss_grad(const Vec& x, const Vec& y, const Mat& V, const Mat& W,
                              Activation act = Activation::LeakyRelu,
                              double slope = 0.01, double lambda = 0.0) {
  double s = 0.0;
  for (double v : y) {
    require(v >= -1e-8, "mlp_loss_grad: label off the simplex (negative entry)");
    s += v;
  }
  require(std::abs(s - 1.0) <= 1e-8, "mlp_loss_grad: label off the simplex (sum != 1)");
  return mlp_grad_raw(x, y, V, W, act, slope, lambda);
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

inline Vec sgd_step(const Vec& w, const Vec& grad, double eta) {
  require(eta > 0.0, "sgd_step: eta must be positive");
  require(w.size() == grad.size(), "sgd_step: dimension mismatch");
  Vec out = w;
  axpy(out, -eta, grad);
  return out;
}

inline void sgd_step_mlp(Mat& V, Mat& W, const MlpGrads& g, double eta) {
  require(eta > 0.0, "sgd_step_mlp: eta must be positive");
  for (std::size_t i = 0; i < V.a.size(); ++i) V.a[i] -= eta * g.dV.a[i];
  for (std::size_t i = 0; i < W.a.size(); ++i) W.a[i] -= eta * g.dW.a[i];
}

/// Gradient of the learner loss at (x, y) for linear learner kinds, as a
/// flat vector matching LearnerParams::w.
inline Vec learner_grad(const LearnerParams& lp, const Vec& x, const Vec& y) {
  switch (lp.kind) {
    case LearnerKind::Lsr:
      require(y.size() == 1, "learner_grad: Lsr expects a scalar label");
      return lsr_grad(x, y[0], lp.w, lp.lambda, lp.reg_dims);
    case LearnerKind::Lr:
      require(y.size() == 1, "learner_grad: Lr expects a scalar label");
      return lr_grad(x, y[0], lp.w, lp.lambda, lp.reg_dims);
    case LearnerKind::MulticlassLinear:
      return mclinear_grad(x, y, lp.w, lp.classes, lp.lambda);
    case LearnerKind::Mlp2:
      throw Error("learner_grad: use mlp_loss_grad for Mlp2");
  }
  throw Error("learner_grad: unknown learner kind");
}

inline double learner_loss(const LearnerParams& lp, const Vec& x, const Vec& y) {
  switch (lp.kind) {
    case LearnerKind::Lsr:
      return lsr_loss(x, y[0], lp.w, lp.lambda, lp.reg_dims);
    case LearnerKind::Lr:
      return lr_loss(x, y[0], lp.w, lp.lambda, lp.reg_dims);
    case LearnerKind::MulticlassLinear:
      return mclinear_loss(x, y, lp.w, lp.classes, lp.lambda);
    case LearnerKind::Mlp2: {
      MlpGrads g = mlp_grad_raw(x, y, lp.V, lp.W, lp.act, lp.act_slope, lp.lambda);
      return g.loss;
    }
  }
  throw Error("learner_loss: unknown learner kind");
}

}  // namespace last
