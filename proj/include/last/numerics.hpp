#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "last/error.hpp"

namespace last {

using Vec = std::vector<double>;

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Checked construction: rejects NaN/Inf entries.
inline Vec checked_vec(Vec v, const std::string& what = "vector") {
  require(all_finite(v), what + ": non-finite entry");
  return v;
}

/// Dense row-major matrix with immutable dimensions.
struct Mat {
  std::size_t rows = 0, cols = 0;
  Vec a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}
  Mat(std::size_t r, std::size_t c, Vec data) : rows(r), cols(c), a(std::move(data)) {
    require(a.size() == rows * cols, "Mat: data size does not match dimensions");
  }

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Mat checked_mat(Mat m, const std::string& what = "matrix") {
  require(all_finite(m.a), what + ": non-finite entry");
  return m;
}

inline double dot(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline double sq_norm(const Vec& v) { return dot(v, v); }

inline double frobenius(const Mat& m) { return norm2(m.a); }

/// y = M v
inline Vec matvec(const Mat& m, const Vec& v) {
  require(v.size() == m.cols, "matvec: dimension mismatch");
  Vec y(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    const double* row = m.a.data() + i * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * v[j];
    y[i] = s;
  }
  return y;
}

/// y = M' v
inline Vec matvec_t(const Mat& m, const Vec& v) {
  require(v.size() == m.rows, "matvec_t: dimension mismatch");
  Vec y(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = m.a.data() + i * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) y[j] += row[j] * v[i];
  }
  return y;
}

/// u v' as rows(u) x rows(v) matrix.
inline Mat outer(const Vec& u, const Vec& v) {
  Mat m(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
  return m;
}

inline Vec add(Vec a, const Vec& b) {
  require(a.size() == b.size(), "add: dimension mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Vec sub(Vec a, const Vec& b) {
  require(a.size() == b.size(), "sub: dimension mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline Vec scale(Vec a, double k) {
  for (auto& x : a) x *= k;
  return a;
}

/// a += k*b
inline void axpy(Vec& a, double k, const Vec& b) {
  require(a.size() == b.size(), "axpy: dimension mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += k * b[i];
}

inline double dist2(const Vec& a, const Vec& b) { return norm2(sub(a, b)); }

/// Central-difference gradient, the oracle all analytic gradients are
/// checked against.
inline Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& w,
                            double eps = 1e-6) {
  require(eps > 0.0, "finite_diff_grad: eps must be positive");
  Vec g(w.size());
  Vec wp = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double wi = w[i];
    wp[i] = wi + eps;
    const double fp = f(wp);
    wp[i] = wi - eps;
    const double fm = f(wp);
    wp[i] = wi;
    require(std::isfinite(fp) && std::isfinite(fm),
            "finite_diff_grad: non-finite function value");
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Deterministic 1-D minimization: coarse grid scan to locate the best
/// cell, then golden-section refinement inside it. The returned point is
/// never worse than any grid point or either endpoint.
inline double minimize_1d(const std::function<double(double)>& phi, double lo, double hi,
                          double tol, std::size_t grid_points = 512) {
  require(lo < hi, "minimize_1d: lo must be < hi");
  require(tol > 0.0, "minimize_1d: tol must be positive");
  require(grid_points >= 3, "minimize_1d: need at least 3 grid points");

  auto eval = [&](double y) {
    const double v = phi(y);
    require(std::isfinite(v), "minimize_1d: non-finite objective value");
    return v;
  };

  double best_y = lo, best_v = eval(lo);
  std::size_t best_i = 0;
  const double h = (hi - lo) / double(grid_points - 1);
  for (std::size_t i = 1; i < grid_points; ++i) {
    const double y = (i + 1 == grid_points) ? hi : lo + h * double(i);
    const double v = eval(y);
    if (v < best_v) {
      best_v = v;
      best_y = y;
      best_i = i;
    }
  }

  // Golden section inside the two cells around the best grid point.
  double a = std::max(lo, best_y - h * double(best_i > 0));
  double b = std::min(hi, best_y + h);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = eval(c), fd = eval(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = eval(d);
    }
  }
  const double mid = 0.5 * (a + b);
  const double fmid = eval(mid);
  if (fc < best_v) {
    best_v = fc;
    best_y = c;
  }
  if (fd < best_v) {
    best_v = fd;
    best_y = d;
  }
  if (fmid < best_v) {
    best_v = fmid;
    best_y = mid;
  }
  return best_y;
}

/// Euclidean projection onto the probability simplex
/// (sort-and-threshold algorithm).
inline Vec project_simplex(const Vec& v) {
  require(!v.empty(), "project_simplex: empty vector");
  require(all_finite(v), "project_simplex: non-finite entry");
  Vec u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double t = (css - 1.0) / double(i + 1);
    if (u[i] - t > 0.0) {
      k = i + 1;
      theta = t;
    }
  }
  (void)k;
  Vec y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = std::max(v[i] - theta, 0.0);
  return y;
}

/// Solve A x = b for symmetric positive definite A via Cholesky.
inline Vec solve_spd(const Mat& A, const Vec& b) {
  require(A.rows == A.cols, "solve_spd: matrix must be square");
  require(b.size() == A.rows, "solve_spd: dimension mismatch");
  const std::size_t n = A.rows;
  Mat L(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = A(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    require(d > 0.0, "solve_spd: matrix is not positive definite");
    L(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = A(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / L(j, j);
    }
  }
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= L(i, k) * y[k];
    y[i] = s / L(i, i);
  }
  Vec x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= L(k, ii) * x[k];
    x[ii] = s / L(ii, ii);
  }
  return x;
}

/// Smallest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.
inline double sym_eig_min(Mat A, std::size_t sweeps = 64) {
  require(A.rows == A.cols, "sym_eig_min: matrix must be square");
  const std::size_t n = A.rows;
  if (n == 1) return A(0, 0);
  for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  double mn = A(0, 0);
  for (std::size_t i = 1; i < n; ++i) mn = std::min(mn, A(i, i));
  return mn;
}

inline Vec softmax(const Vec& z) {
  require(!z.empty(), "softmax: empty vector");
  const double m = *std::max_element(z.begin(), z.end());
  Vec p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    s += p[i];
  }
  for (auto& x : p) x /= s;
  return p;
}

}  // namespace last
