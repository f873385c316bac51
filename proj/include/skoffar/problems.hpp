#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skoffar/common.hpp"

namespace skoffar {

/// Residual structure of a least-squares objective, normalized so that
/// f(x) = 0.5 * ||r(x)||^2.  Problems whose catalogue definition is
/// f = sum r_i^2 expose r scaled by sqrt(2) to keep this convention, so the
/// Gauss-Newton operator v -> J^T J v is the exact Gauss-Newton Hessian of f.
struct LeastSquaresForm {
  Index residual_dim = 0;
  std::function<Vector(const Vector&)> residual;
  std::function<Matrix(const Vector&)> jacobian;  // residual_dim x n
};

/// What a solver is allowed to see: derivative oracles only.  The objective
/// value lives behind ProblemInstance::objective_diagnostic and is counted.
struct DerivativeView {
  Index n = 0;
  Vector x0;
  std::function<Vector(const Vector&)> grad;
  std::function<Vector(const Vector&, const Vector&)> hvp;
};

class ProblemInstance {
 public:
  ProblemInstance() = default;
  ProblemInstance(std::string name, Index n, Vector x0,
                  std::function<double(const Vector&)> f,
                  std::function<Vector(const Vector&)> grad,
                  std::function<Vector(const Vector&, const Vector&)> hvp)
      : name_(std::move(name)),
        n_(n),
        x0_(std::move(x0)),
        f_(std::move(f)),
        grad_(std::move(grad)),
        hvp_(std::move(hvp)),
        f_calls_(std::make_shared<std::atomic<long>>(0)) {}

  const std::string& name() const { return name_; }
  Index dim() const { return n_; }
  const Vector& start_point() const { return x0_; }

  Vector gradient(const Vector& x) const { return grad_(x); }
  Vector hessian_vec(const Vector& x, const Vector& v) const {
    return hvp_(x, v);
  }

  /// Diagnostic-only objective access.  Every call is counted; OFFO runs must
  /// leave the counter at zero.
  double objective_diagnostic(const Vector& x) const {
    f_calls_->fetch_add(1, std::memory_order_relaxed);
    return f_(x);
  }
  long objective_calls() const {
    return f_calls_->load(std::memory_order_relaxed);
  }
  void reset_objective_calls() const {
    f_calls_->store(0, std::memory_order_relaxed);
  }

  DerivativeView derivative_view() const {
    return DerivativeView{n_, x0_, grad_, hvp_};
  }

  // Optional problem knowledge (used by invariant checks, never required by
  // the solvers).
  std::optional<double> known_l1;    // Lipschitz constant of the gradient
  std::optional<double> known_l2;    // Lipschitz constant of the Hessian
  std::optional<double> known_flow;  // lower bound on f
  std::optional<double> known_kg;    // bound on the gradient norm
  std::optional<LeastSquaresForm> least_squares;

 private:
  std::string name_;
  Index n_ = 0;
  Vector x0_;
  std::function<double(const Vector&)> f_;
  std::function<Vector(const Vector&)> grad_;
  std::function<Vector(const Vector&, const Vector&)> hvp_;
  std::shared_ptr<std::atomic<long>> f_calls_;
};

namespace detail {

// --- chained Rosenbrock ----------------------------------------------------
// f = sum_{i=1}^{n-1} [ 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2 ],
// start (-1.2, 1, -1.2, 1, ...).  n = 2 is the classic two-variable problem.
inline ProblemInstance make_rosenbr(Index n) {
  Vector x0(n);
  for (Index i = 0; i < n; ++i) x0[i] = (i % 2 == 0) ? -1.2 : 1.0;
  auto f = [](const Vector& x) {
    double v = 0.0;
    for (Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      const double b = 1.0 - x[i];
      v += 100.0 * a * a + b * b;
    }
    return v;
  };
  auto grad = [](const Vector& x) {
    Vector g = Vector::Zero(x.size());
    for (Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      g[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
      g[i + 1] += 200.0 * a;
    }
    return g;
  };
  auto hvp = [](const Vector& x, const Vector& v) {
    Vector y = Vector::Zero(x.size());
    for (Index i = 0; i + 1 < x.size(); ++i) {
      const double dii = 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
      const double off = -400.0 * x[i];
      y[i] += dii * v[i] + off * v[i + 1];
      y[i + 1] += off * v[i] + 200.0 * v[i + 1];
    }
    return y;
  };
  ProblemInstance p("rosenbr", n, std::move(x0), f, grad, hvp);
  p.known_flow = 0.0;
  return p;
}

// --- ARWHEAD ----------------------------------------------------------------
// f = sum_{i=1}^{n-1} [ (x_i^2 + x_n^2)^2 - 4 x_i + 3 ], start all ones.
inline ProblemInstance make_arwhead(Index n) {
  auto f = [](const Vector& x) {
    const Index n_ = x.size();
    const double xn2 = x[n_ - 1] * x[n_ - 1];
    double v = 0.0;
    for (Index i = 0; i + 1 < n_; ++i) {
      const double t = x[i] * x[i] + xn2;
      v += t * t - 4.0 * x[i] + 3.0;
    }
    return v;
  };
  auto grad = [](const Vector& x) {
    const Index n_ = x.size();
    const double xn = x[n_ - 1];
    const double xn2 = xn * xn;
    Vector g = Vector::Zero(n_);
    double gn = 0.0;
    for (Index i = 0; i + 1 < n_; ++i) {
      const double t = x[i] * x[i] + xn2;
      g[i] = 4.0 * x[i] * t - 4.0;
      gn += 4.0 * xn * t;
    }
    g[n_ - 1] = gn;
    return g;
  };
  auto hvp = [](const Vector& x, const Vector& v) {
    const Index n_ = x.size();
    const double xn = x[n_ - 1];
    const double xn2 = xn * xn;
    Vector y = Vector::Zero(n_);
    double ynn = 0.0;
    const double vn = v[n_ - 1];
    for (Index i = 0; i + 1 < n_; ++i) {
      const double t = x[i] * x[i] + xn2;
      const double dii = 4.0 * t + 8.0 * x[i] * x[i];
      const double din = 8.0 * x[i] * xn;
      y[i] = dii * v[i] + din * vn;
      ynn += din * v[i] + (4.0 * t + 8.0 * xn2) * vn;
    }
    y[n_ - 1] = ynn;
    return y;
  };
  ProblemInstance p("arwhead", n, Vector::Ones(n), f, grad, hvp);
  p.known_flow = 0.0;
  return p;
}

// --- Broyden tridiagonal ----------------------------------------------------
// r_i = (3 - 2 x_i) x_i - x_{i-1} - 2 x_{i+1} + 1 with x_0 = x_{n+1} = 0,
// f = sum r_i^2, start all -1.
inline ProblemInstance make_broyden3d(Index n) {
  auto res = [](const Vector& x) {
    const Index n_ = x.size();
    Vector r(n_);
    for (Index i = 0; i < n_; ++i) {
      double v = (3.0 - 2.0 * x[i]) * x[i] + 1.0;
      if (i > 0) v -= x[i - 1];
      if (i + 1 < n_) v -= 2.0 * x[i + 1];
      r[i] = v;
    }
    return r;
  };
  auto jmul = [](const Vector& x, const Vector& v) {
    // J v with J_i,i = 3 - 4 x_i, J_i,i-1 = -1, J_i,i+1 = -2.
    const Index n_ = x.size();
    Vector y(n_);
    for (Index i = 0; i < n_; ++i) {
      double t = (3.0 - 4.0 * x[i]) * v[i];
      if (i > 0) t -= v[i - 1];
      if (i + 1 < n_) t -= 2.0 * v[i + 1];
      y[i] = t;
    }
    return y;
  };
  auto jtmul = [](const Vector& x, const Vector& u) {
    const Index n_ = x.size();
    Vector y = Vector::Zero(n_);
    for (Index i = 0; i < n_; ++i) {
      y[i] += (3.0 - 4.0 * x[i]) * u[i];
      if (i > 0) y[i - 1] -= u[i];
      if (i + 1 < n_) y[i + 1] -= 2.0 * u[i];
    }
    return y;
  };
  auto f = [res](const Vector& x) { return res(x).squaredNorm(); };
  auto grad = [res, jtmul](const Vector& x) {
    return Vector(2.0 * jtmul(x, res(x)));
  };
  auto hvp = [res, jmul, jtmul](const Vector& x, const Vector& v) {
    // H = 2 J^T J + 2 sum_i r_i nabla^2 r_i, nabla^2 r_i = -4 e_i e_i^T.
    const Vector r = res(x);
    Vector y = 2.0 * jtmul(x, jmul(x, v));
    y.array() -= 8.0 * r.array() * v.array();
    return y;
  };
  ProblemInstance p("broyden3d", n, Vector::Constant(n, -1.0), f, grad, hvp);
  p.known_flow = 0.0;
  LeastSquaresForm ls;
  ls.residual_dim = n;
  const double s2 = std::sqrt(2.0);
  ls.residual = [res, s2](const Vector& x) { return Vector(s2 * res(x)); };
  ls.jacobian = [s2](const Vector& x) {
    const Index n_ = x.size();
    Matrix J = Matrix::Zero(n_, n_);
    for (Index i = 0; i < n_; ++i) {
      J(i, i) = s2 * (3.0 - 4.0 * x[i]);
      if (i > 0) J(i, i - 1) = -s2;
      if (i + 1 < n_) J(i, i + 1) = -2.0 * s2;
    }
    return J;
  };
  p.least_squares = std::move(ls);
  return p;
}

// --- TRIDIA -----------------------------------------------------------------
// f = (x_1 - 1)^2 + sum_{i=2}^n i (2 x_i - x_{i-1})^2, start all ones.
// Convex quadratic: the Hessian is constant and L_2 = 0.
inline ProblemInstance make_tridia(Index n) {
  auto f = [](const Vector& x) {
    double v = (x[0] - 1.0) * (x[0] - 1.0);
    for (Index i = 1; i < x.size(); ++i) {
      const double t = 2.0 * x[i] - x[i - 1];
      v += static_cast<double>(i + 1) * t * t;
    }
    return v;
  };
  auto grad = [](const Vector& x) {
    Vector g = Vector::Zero(x.size());
    g[0] = 2.0 * (x[0] - 1.0);
    for (Index i = 1; i < x.size(); ++i) {
      const double w = static_cast<double>(i + 1);
      const double t = 2.0 * x[i] - x[i - 1];
      g[i] += 4.0 * w * t;
      g[i - 1] -= 2.0 * w * t;
    }
    return g;
  };
  auto hvp = [](const Vector& x, const Vector& v) {
    Vector y = Vector::Zero(x.size());
    y[0] = 2.0 * v[0];
    for (Index i = 1; i < x.size(); ++i) {
      const double w = static_cast<double>(i + 1);
      const double t = 2.0 * v[i] - v[i - 1];
      y[i] += 4.0 * w * t;
      y[i - 1] -= 2.0 * w * t;
    }
    return y;
  };
  ProblemInstance p("tridia", n, Vector::Ones(n), f, grad, hvp);
  p.known_l2 = 0.0;
  p.known_flow = 0.0;
  return p;
}

// --- EG2 --------------------------------------------------------------------
// f = sum_{i=1}^{n-1} sin(x_1 + x_i^2 - 1) + 0.5 sin(x_n^2), start at zero.
inline ProblemInstance make_eg2(Index n) {
  auto f = [](const Vector& x) {
    const Index n_ = x.size();
    double v = 0.0;
    for (Index i = 0; i + 1 < n_; ++i)
      v += std::sin(x[0] + x[i] * x[i] - 1.0);
    v += 0.5 * std::sin(x[n_ - 1] * x[n_ - 1]);
    return v;
  };
  auto grad = [](const Vector& x) {
    const Index n_ = x.size();
    Vector g = Vector::Zero(n_);
    for (Index i = 0; i + 1 < n_; ++i) {
      const double c = std::cos(x[0] + x[i] * x[i] - 1.0);
      g[0] += c;
      g[i] += 2.0 * x[i] * c;
    }
    const double xn = x[n_ - 1];
    g[n_ - 1] += xn * std::cos(xn * xn);
    return g;
  };
  auto hvp = [](const Vector& x, const Vector& v) {
    // Arrow-shaped Hessian: diagonal plus first row/column, last variable
    // decoupled from the sum terms.
    const Index n_ = x.size();
    Vector y = Vector::Zero(n_);
    for (Index i = 0; i + 1 < n_; ++i) {
      const double a = x[0] + x[i] * x[i] - 1.0;
      const double s = -std::sin(a);
      const double c = std::cos(a);
      if (i == 0) {
        const double d = 1.0 + 2.0 * x[0];
        y[0] += (s * d * d + 2.0 * c) * v[0];
      } else {
        const double cross = 2.0 * x[i] * s;
        y[0] += s * v[0] + cross * v[i];
        y[i] += cross * v[0] + (4.0 * x[i] * x[i] * s + 2.0 * c) * v[i];
      }
    }
    const double xn = x[n_ - 1];
    const double q = xn * xn;
    y[n_ - 1] += (std::cos(q) - 2.0 * q * std::sin(q)) * v[n_ - 1];
    return y;
  };
  return ProblemInstance("eg2", n, Vector::Zero(n), f, grad, hvp);
}

// --- DIXMAANA ---------------------------------------------------------------
// Dixon-Maany variant A (alpha=1, beta=0, gamma=delta=1/8, all exponents 0),
// n = 3m:
//   f = 1 + sum_i x_i^2 + (1/8) sum_{i=1}^{2m} x_i^2 x_{i+m}^4
//         + (1/8) sum_{i=1}^{m} x_i x_{i+2m},  start all 2.
inline ProblemInstance make_dixmaana(Index n) {
  const Index m = n / 3;
  auto f = [m](const Vector& x) {
    double v = 1.0 + x.squaredNorm();
    for (Index i = 0; i < 2 * m; ++i) {
      const double b = x[i + m] * x[i + m];
      v += 0.125 * x[i] * x[i] * b * b;
    }
    for (Index i = 0; i < m; ++i) v += 0.125 * x[i] * x[i + 2 * m];
    return v;
  };
  auto grad = [m](const Vector& x) {
    Vector g = 2.0 * x;
    for (Index i = 0; i < 2 * m; ++i) {
      const double a = x[i];
      const double b = x[i + m];
      g[i] += 0.25 * a * b * b * b * b;
      g[i + m] += 0.5 * a * a * b * b * b;
    }
    for (Index i = 0; i < m; ++i) {
      g[i] += 0.125 * x[i + 2 * m];
      g[i + 2 * m] += 0.125 * x[i];
    }
    return g;
  };
  auto hvp = [m](const Vector& x, const Vector& v) {
    Vector y = 2.0 * v;
    for (Index i = 0; i < 2 * m; ++i) {
      const double a = x[i];
      const double b = x[i + m];
      const double b2 = b * b;
      y[i] += 0.25 * b2 * b2 * v[i] + a * b * b2 * v[i + m];
      y[i + m] += a * b * b2 * v[i] + 1.5 * a * a * b2 * v[i + m];
    }
    for (Index i = 0; i < m; ++i) {
      y[i] += 0.125 * v[i + 2 * m];
      y[i + 2 * m] += 0.125 * v[i];
    }
    return y;
  };
  return ProblemInstance("dixmaana", n, Vector::Constant(n, 2.0), f, grad,
                         hvp);
}

// --- Helical valley ---------------------------------------------------------
// f = 100 [ (x_3 - 10 t)^2 + (r - 1)^2 ] + x_3^2 with
// t = atan2(x_2, x_1) / (2 pi), r = sqrt(x_1^2 + x_2^2), start (-1, 0, 0).
inline ProblemInstance make_helix() {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  auto f = [two_pi](const Vector& x) {
    const double t = std::atan2(x[1], x[0]) / two_pi;
    const double r = std::hypot(x[0], x[1]);
    const double u = x[2] - 10.0 * t;
    const double w = r - 1.0;
    return 100.0 * (u * u + w * w) + x[2] * x[2];
  };
  auto hess = [two_pi](const Vector& x) {
    const double q = x[0] * x[0] + x[1] * x[1];
    const double r = std::sqrt(q);
    const double t = std::atan2(x[1], x[0]) / two_pi;
    const double u = x[2] - 10.0 * t;
    Vector du(3), dr(3);
    du << 10.0 * x[1] / (two_pi * q), -10.0 * x[0] / (two_pi * q), 1.0;
    dr << x[0] / r, x[1] / r, 0.0;
    Matrix hu = Matrix::Zero(3, 3);  // nabla^2 u = -10 nabla^2 t
    const double q2 = q * q;
    hu(0, 0) = -10.0 * 2.0 * x[0] * x[1] / (two_pi * q2);
    hu(0, 1) = hu(1, 0) = -10.0 * (x[1] * x[1] - x[0] * x[0]) / (two_pi * q2);
    hu(1, 1) = 10.0 * 2.0 * x[0] * x[1] / (two_pi * q2);
    Matrix hr = Matrix::Zero(3, 3);
    const double r3 = r * q;
    hr(0, 0) = x[1] * x[1] / r3;
    hr(0, 1) = hr(1, 0) = -x[0] * x[1] / r3;
    hr(1, 1) = x[0] * x[0] / r3;
    Matrix H = 200.0 * (du * du.transpose() + u * hu + dr * dr.transpose() +
                        (r - 1.0) * hr);
    H(2, 2) += 2.0;
    return H;
  };
  auto grad = [two_pi](const Vector& x) {
    const double q = x[0] * x[0] + x[1] * x[1];
    const double r = std::sqrt(q);
    const double t = std::atan2(x[1], x[0]) / two_pi;
    const double u = x[2] - 10.0 * t;
    Vector g(3);
    g[0] = 200.0 * u * (10.0 * x[1] / (two_pi * q)) +
           200.0 * (r - 1.0) * x[0] / r;
    g[1] = 200.0 * u * (-10.0 * x[0] / (two_pi * q)) +
           200.0 * (r - 1.0) * x[1] / r;
    g[2] = 200.0 * u + 2.0 * x[2];
    return g;
  };
  auto hvp = [hess](const Vector& x, const Vector& v) {
    return Vector(hess(x) * v);
  };
  Vector x0(3);
  x0 << -1.0, 0.0, 0.0;
  ProblemInstance p("helix", 3, std::move(x0), f, grad, hvp);
  p.known_flow = 0.0;
  return p;
}

// --- Kowalik-Osborne --------------------------------------------------------
// f = sum_{i=1}^{11} [ y_i - x_1 (u_i^2 + u_i x_2) / (u_i^2 + u_i x_3 + x_4) ]^2,
// start (0.25, 0.39, 0.415, 0.39).
inline ProblemInstance make_kowosb() {
  static const std::vector<double> ys = {0.1957, 0.1947, 0.1735, 0.1600,
                                         0.0844, 0.0627, 0.0456, 0.0342,
                                         0.0323, 0.0235, 0.0246};
  static const std::vector<double> us = {4.0,    2.0,    1.0,    0.5,
                                         0.25,   0.1670, 0.1250, 0.1000,
                                         0.0833, 0.0714, 0.0625};
  auto res = [](const Vector& x) {
    Vector r(11);
    for (int i = 0; i < 11; ++i) {
      const double u = us[i];
      const double num = u * u + u * x[1];
      const double den = u * u + u * x[2] + x[3];
      r[i] = ys[i] - x[0] * num / den;
    }
    return r;
  };
  auto jac = [](const Vector& x) {
    Matrix J(11, 4);
    for (int i = 0; i < 11; ++i) {
      const double u = us[i];
      const double num = u * u + u * x[1];
      const double den = u * u + u * x[2] + x[3];
      J(i, 0) = -num / den;
      J(i, 1) = -x[0] * u / den;
      J(i, 2) = x[0] * num * u / (den * den);
      J(i, 3) = x[0] * num / (den * den);
    }
    return J;
  };
  auto f = [res](const Vector& x) { return res(x).squaredNorm(); };
  auto grad = [res, jac](const Vector& x) {
    return Vector(2.0 * jac(x).transpose() * res(x));
  };
  auto hess = [res, jac](const Vector& x) {
    const Vector r = res(x);
    const Matrix J = jac(x);
    Matrix H = 2.0 * J.transpose() * J;
    for (int i = 0; i < 11; ++i) {
      const double u = us[i];
      const double num = u * u + u * x[1];
      const double den = u * u + u * x[2] + x[3];
      const double d2 = den * den;
      const double d3 = d2 * den;
      Matrix P = Matrix::Zero(4, 4);  // second derivatives of the model term
      P(0, 1) = P(1, 0) = u / den;
      P(0, 2) = P(2, 0) = -num * u / d2;
      P(0, 3) = P(3, 0) = -num / d2;
      P(1, 2) = P(2, 1) = -x[0] * u * u / d2;
      P(1, 3) = P(3, 1) = -x[0] * u / d2;
      P(2, 2) = 2.0 * x[0] * num * u * u / d3;
      P(2, 3) = P(3, 2) = 2.0 * x[0] * num * u / d3;
      P(3, 3) = 2.0 * x[0] * num / d3;
      H += 2.0 * r[i] * (-P);
    }
    return H;
  };
  auto hvp = [hess](const Vector& x, const Vector& v) {
    return Vector(hess(x) * v);
  };
  Vector x0(4);
  x0 << 0.25, 0.39, 0.415, 0.39;
  ProblemInstance p("kowosb", 4, std::move(x0), f, grad, hvp);
  p.known_flow = 0.0;
  LeastSquaresForm ls;
  ls.residual_dim = 11;
  const double s2 = std::sqrt(2.0);
  ls.residual = [res, s2](const Vector& x) { return Vector(s2 * res(x)); };
  ls.jacobian = [jac, s2](const Vector& x) { return Matrix(s2 * jac(x)); };
  p.least_squares = std::move(ls);
  return p;
}

// --- ARGLINA ----------------------------------------------------------------
// Linear full-rank least squares with m = n: r = A x - e where
// A = I - (2/n) e e^T (an involution), f = sum r_i^2.  Quadratic, L_2 = 0.
inline ProblemInstance make_arglina(Index n) {
  auto apply_a = [](const Vector& v) {
    const double s = 2.0 * v.sum() / static_cast<double>(v.size());
    return Vector(v.array() - s);
  };
  auto res = [apply_a](const Vector& x) {
    return Vector(apply_a(x).array() - 1.0);
  };
  auto f = [res](const Vector& x) { return res(x).squaredNorm(); };
  auto grad = [res, apply_a](const Vector& x) {
    return Vector(2.0 * apply_a(res(x)));  // A is symmetric
  };
  auto hvp = [](const Vector&, const Vector& v) {
    return Vector(2.0 * v);  // H = 2 A^T A = 2 I since A^2 = I
  };
  ProblemInstance p("arglina", n, Vector::Ones(n), f, grad, hvp);
  p.known_l2 = 0.0;
  p.known_l1 = 2.0;
  p.known_flow = 0.0;
  LeastSquaresForm ls;
  ls.residual_dim = n;
  const double s2 = std::sqrt(2.0);
  ls.residual = [res, s2](const Vector& x) { return Vector(s2 * res(x)); };
  ls.jacobian = [s2](const Vector& x) {
    const Index n_ = x.size();
    Matrix J = Matrix::Constant(n_, n_, -s2 * 2.0 / static_cast<double>(n_));
    J.diagonal().array() += s2;
    return J;
  };
  p.least_squares = std::move(ls);
  return p;
}

}  // namespace detail

inline const std::vector<std::string>& problem_registry_names() {
  static const std::vector<std::string> names = {
      "rosenbr", "arwhead", "broyden3d", "tridia", "eg2",
      "dixmaana", "helix",  "kowosb",    "arglina"};
  return names;
}

/// Catalogue default dimension for each problem family.
inline Index default_dimension(const std::string& name) {
  if (name == "rosenbr") return 2;
  if (name == "helix") return 3;
  if (name == "kowosb") return 4;
  if (name == "dixmaana") return 12;
  return 10;
}

inline ProblemInstance make_problem(const std::string& name, Index n_hat) {
  if (n_hat <= 0) throw std::invalid_argument("make_problem: dimension must be positive");
  if (name == "rosenbr") {
    if (n_hat < 2) throw std::invalid_argument("rosenbr needs n >= 2");
    return detail::make_rosenbr(n_hat);
  }
  if (name == "arwhead") {
    if (n_hat < 2) throw std::invalid_argument("arwhead needs n >= 2");
    return detail::make_arwhead(n_hat);
  }
  if (name == "broyden3d") {
    if (n_hat < 2) throw std::invalid_argument("broyden3d needs n >= 2");
    return detail::make_broyden3d(n_hat);
  }
  if (name == "tridia") {
    if (n_hat < 2) throw std::invalid_argument("tridia needs n >= 2");
    return detail::make_tridia(n_hat);
  }
  if (name == "eg2") {
    if (n_hat < 2) throw std::invalid_argument("eg2 needs n >= 2");
    return detail::make_eg2(n_hat);
  }
  if (name == "dixmaana") {
    if (n_hat < 3 || n_hat % 3 != 0)
      throw std::invalid_argument("dixmaana needs n divisible by 3");
    return detail::make_dixmaana(n_hat);
  }
  if (name == "helix") {
    if (n_hat != 3) throw std::invalid_argument("helix is fixed at n = 3");
    return detail::make_helix();
  }
  if (name == "kowosb") {
    if (n_hat != 4) throw std::invalid_argument("kowosb is fixed at n = 4");
    return detail::make_kowosb();
  }
  if (name == "arglina") {
    if (n_hat < 2) throw std::invalid_argument("arglina needs n >= 2");
    return detail::make_arglina(n_hat);
  }
  throw std::invalid_argument("make_problem: unknown problem '" + name + "'");
}

/// First n_hat columns of the n x n orthonormal DCT-II basis.
/// A(j,k) = c_k cos(pi (2j+1) k / (2n)), c_0 = sqrt(1/n), c_k = sqrt(2/n).
inline Matrix dct_embedding_matrix(Index n, Index n_hat) {
  Matrix A(n, n_hat);
  const double pi = std::numbers::pi;
  for (Index k = 0; k < n_hat; ++k) {
    const double ck = (k == 0) ? std::sqrt(1.0 / static_cast<double>(n))
                               : std::sqrt(2.0 / static_cast<double>(n));
    for (Index j = 0; j < n; ++j) {
      A(j, k) = ck * std::cos(pi * (2.0 * static_cast<double>(j) + 1.0) *
                              static_cast<double>(k) /
                              (2.0 * static_cast<double>(n)));
    }
  }
  return A;
}

/// A problem enlarged to dimension n through an orthonormal map A:
/// F(x) = fhat(A^T x).  The composed Hessian A Hhat A^T has rank at most
/// n_hat everywhere, which is what makes sketching pay off.
struct EmbeddedProblem {
  ProblemInstance problem;  // the composed instance (dimension n)
  Matrix A;                 // n x n_hat, A^T A = I
  std::string base_name;
  Index base_dim = 0;
};

enum class EmbeddingTransform { dct };

inline EmbeddedProblem embed(const ProblemInstance& base, Index n,
                             EmbeddingTransform transform =
                                 EmbeddingTransform::dct) {
  (void)transform;  // dct is the only supported map
  const Index n_hat = base.dim();
  if (n < n_hat)
    throw std::invalid_argument("embed: target dimension below base dimension");
  auto A = std::make_shared<Matrix>(dct_embedding_matrix(n, n_hat));
  auto base_ptr = std::make_shared<ProblemInstance>(base);
  Vector x0 = (*A) * base.start_point();

  auto f = [A, base_ptr](const Vector& x) {
    // Calls the base objective directly; the embedded instance keeps its own
    // diagnostic counter.
    return base_ptr->objective_diagnostic(A->transpose() * x);
  };
  auto grad = [A, base_ptr](const Vector& x) {
    return Vector((*A) * base_ptr->gradient(A->transpose() * x));
  };
  auto hvp = [A, base_ptr](const Vector& x, const Vector& v) {
    return Vector((*A) * base_ptr->hessian_vec(A->transpose() * x,
                                               A->transpose() * v));
  };
  ProblemInstance composed(base.name(), n, std::move(x0), f, grad, hvp);
  composed.known_l1 = base.known_l1;
  composed.known_l2 = base.known_l2;
  composed.known_flow = base.known_flow;
  composed.known_kg = base.known_kg;
  if (base.least_squares) {
    LeastSquaresForm ls;
    ls.residual_dim = base.least_squares->residual_dim;
    auto base_res = base.least_squares->residual;
    auto base_jac = base.least_squares->jacobian;
    ls.residual = [A, base_res](const Vector& x) {
      return base_res(A->transpose() * x);
    };
    ls.jacobian = [A, base_jac](const Vector& x) {
      return Matrix(base_jac(A->transpose() * x) * A->transpose());
    };
    composed.least_squares = std::move(ls);
  }
  // reset the counter consumed while composing (none so far, but explicit)
  composed.reset_objective_calls();
  return EmbeddedProblem{std::move(composed), *A, base.name(), n_hat};
}

/// Finite-difference validation of the derivative oracles.  The gradient is
/// checked against central differences of the (diagnostic) objective and the
/// Hessian-vector oracle against central differences of the gradient, both
/// with step h; symmetry and linearity of the hvp are probed directly.
struct DerivativeReport {
  double max_grad_rel_err = 0.0;
  double max_hvp_rel_err = 0.0;
  double hvp_symmetry_err = 0.0;
  double hvp_linearity_err = 0.0;
  bool passed = false;
};

inline DerivativeReport check_derivatives(const ProblemInstance& problem,
                                          const Vector& x, double h,
                                          std::uint64_t seed = 17) {
  if (!(h > 0.0)) throw std::invalid_argument("check_derivatives: h must be positive");
  const Index n = problem.dim();
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  DerivativeReport rep;
  const Vector g = problem.gradient(x);
  if (!g.allFinite())
    throw std::runtime_error("check_derivatives: non-finite gradient");
  const double gscale = std::max(1.0, g.norm());
  for (Index i = 0; i < n; ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = problem.objective_diagnostic(xp);
    const double fm = problem.objective_diagnostic(xm);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("check_derivatives: non-finite objective");
    const double fd = (fp - fm) / (2.0 * h);
    rep.max_grad_rel_err =
        std::max(rep.max_grad_rel_err, std::abs(fd - g[i]) / gscale);
  }

  for (int trial = 0; trial < 3; ++trial) {
    Vector v(n), u(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(rng);
    for (Index i = 0; i < n; ++i) u[i] = normal(rng);
    v.normalize();
    u.normalize();
    const Vector hv = problem.hessian_vec(x, v);
    const Vector hu = problem.hessian_vec(x, u);
    if (!hv.allFinite() || !hu.allFinite())
      throw std::runtime_error("check_derivatives: non-finite hvp");
    const Vector gp = problem.gradient(x + h * v);
    const Vector gm = problem.gradient(x - h * v);
    const Vector fd = (gp - gm) / (2.0 * h);
    const double hscale = std::max(1.0, hv.norm());
    rep.max_hvp_rel_err =
        std::max(rep.max_hvp_rel_err, (fd - hv).norm() / hscale);
    rep.hvp_symmetry_err =
        std::max(rep.hvp_symmetry_err,
                 std::abs(u.dot(hv) - v.dot(hu)) / std::max(1.0, hv.norm()));
    const Vector lin =
        problem.hessian_vec(x, 2.0 * v + u) - 2.0 * hv - hu;
    rep.hvp_linearity_err =
        std::max(rep.hvp_linearity_err, lin.norm() / hscale);
  }
  rep.passed = rep.max_grad_rel_err <= 1e-5 && rep.max_hvp_rel_err <= 1e-5 &&
               rep.hvp_symmetry_err <= 1e-10 && rep.hvp_linearity_err <= 1e-10;
  return rep;
}

/// Default finite-difference step: cbrt(machine eps) * (1 + |x|_inf).
inline double fd_step(const Vector& x) {
  return std::cbrt(std::numeric_limits<double>::epsilon()) *
         (1.0 + x.lpNorm<Eigen::Infinity>());
}

}  // namespace skoffar
