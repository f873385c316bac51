#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "skoffar/common.hpp"
#include "skoffar/sketch.hpp"

namespace skoffar {

enum class RegKind {
  power_p_plus_one,  // sigma/(p+1)! * ||S^T shat||^{p+1}
  quadratic          // sigma/2 * ||S^T shat||^2 (approximate-Hessian variant)
};

/// The sketched regularised model at one iterate:
///   That(shat)  = ghat^T shat + 1/2 shat^T Hhat shat   (degree 2, else linear)
///   mhat(shat)  = That(shat) + regulariser(sigma, ||S^T shat||)
/// where ghat = S g, Hhat = S H S^T (or S B S^T), W = S S^T.  The constant
/// f(x) cancels from every condition and is not stored.
struct SketchedModel {
  Vector ghat;
  Matrix Hhat;  // empty for degree 1
  Matrix W;
  double sigma = 0.0;
  int degree = 2;  // p in {1, 2}
  RegKind reg = RegKind::power_p_plus_one;

  double w_norm(const Vector& shat) const {
    return std::sqrt(std::max(0.0, shat.dot(W * shat)));
  }
  Vector taylor_grad(const Vector& shat) const {
    if (degree == 1 || Hhat.size() == 0) return ghat;
    return ghat + Hhat * shat;
  }
  /// That(shat) - That(0) (the model's non-regularised part).
  double taylor_change(const Vector& shat) const {
    double v = ghat.dot(shat);
    if (degree >= 2 && Hhat.size() != 0) v += 0.5 * shat.dot(Hhat * shat);
    return v;
  }
  double regulariser(const Vector& shat) const {
    const double wn = w_norm(shat);
    if (reg == RegKind::quadratic) return 0.5 * sigma * wn * wn;
    if (degree == 1) return 0.5 * sigma * wn * wn;
    return sigma / 6.0 * wn * wn * wn;  // degree 2
  }
};

struct ConditionCheck {
  bool descent = false;       // mhat(shat) - mhat(0) < 0, strictly
  bool gradstep = false;      // lhs <= rhs
  double gradstep_lhs = 0.0;  // ||grad That(shat)||
  double gradstep_rhs = 0.0;
  double model_decrease = 0.0;     // mhat(0) - mhat(shat)
  double grad_model_norm = 0.0;    // == gradstep_lhs
};

/// Exact recomputation of the termination conditions on the sketched model.
/// For the power regulariser: lhs <= theta sigma/p! ||S^T s||^{p-1} ||W s||;
/// for the quadratic regulariser: lhs <= theta sigma ||W s||.
inline ConditionCheck verify_conditions(const SketchedModel& model,
                                        const Vector& shat, double theta) {
  ConditionCheck c;
  const Vector tg = model.taylor_grad(shat);
  c.gradstep_lhs = tg.norm();
  c.grad_model_norm = c.gradstep_lhs;
  const Vector Ws = model.W * shat;
  const double wn = model.w_norm(shat);
  if (model.reg == RegKind::quadratic) {
    c.gradstep_rhs = theta * model.sigma * Ws.norm();
  } else if (model.degree == 1) {
    c.gradstep_rhs = theta * model.sigma * Ws.norm();
  } else {
    c.gradstep_rhs = theta * (model.sigma / 2.0) * wn * Ws.norm();
  }
  // rounding-level slack only: lhs and rhs are computed through different
  // norm expressions and may disagree in the last ulp at exact equality
  c.gradstep = c.gradstep_lhs <= c.gradstep_rhs * (1.0 + 1e-12);
  c.model_decrease = -(model.taylor_change(shat) + model.regulariser(shat));
  c.descent = c.model_decrease > 0.0;
  return c;
}

struct SubproblemSolution {
  Vector shat;  // l-vector
  Vector s;     // n-vector S^T shat
  double grad_model_norm = 0.0;
  double model_decrease = 0.0;
  bool cond_descent = false;
  bool cond_gradstep = false;
  double gradstep_lhs = 0.0;
  double gradstep_rhs = 0.0;
};

namespace detail {

inline Eigen::LLT<Matrix> factor_gram(const Matrix& W) {
  Eigen::LLT<Matrix> llt(W);
  if (llt.info() != Eigen::Success)
    throw sketch_degenerate_error("gram matrix factorization failed");
  if (llt.rcond() < 1e-12)
    throw sketch_degenerate_error("gram matrix numerically singular");
  return llt;
}

inline void fill_conditions(SubproblemSolution& sol, const SketchedModel& m,
                            double theta) {
  const ConditionCheck c = verify_conditions(m, sol.shat, theta);
  sol.grad_model_norm = c.grad_model_norm;
  sol.model_decrease = c.model_decrease;
  sol.cond_descent = c.descent;
  sol.cond_gradstep = c.gradstep;
  sol.gradstep_lhs = c.gradstep_lhs;
  sol.gradstep_rhs = c.gradstep_rhs;
}

}  // namespace detail

/// Exact minimizer of the degree-1 model: shat = -(1/sigma) W^{-1} ghat.
/// At this point grad That = ghat = -sigma W shat, so (gradstep) holds with
/// equality at theta = 1 and the descent condition is strict.
inline SubproblemSolution solve_p1(const SketchedModel& model,
                                   const SketchOperator& sketch,
                                   double theta = 1.0) {
  if (!(model.sigma > 0.0))
    throw std::invalid_argument("solve_p1: sigma must be positive");
  auto llt = detail::factor_gram(model.W);
  SubproblemSolution sol;
  sol.shat = -llt.solve(model.ghat) / model.sigma;
  sol.s = sketch.transpose_apply(sol.shat);
  detail::fill_conditions(sol, model, theta);
  return sol;
}

/// Global minimizer of g^T u + 1/2 u^T H u + sigma/6 ||u||^3 via
/// eigendecomposition and a safeguarded Newton iteration on the secular
/// equation: find lam >= max(0, -lam_min) with (H + lam I) u = -g and
/// lam = (sigma/2) ||u||.  The hard case (g orthogonal to the minimal
/// eigenspace with no interior root) is closed by adding a component along a
/// minimal eigenvector.
inline Vector cubic_reg_exact(const Vector& gtil, const Matrix& Htil,
                              double sigma) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("cubic_reg_exact: sigma must be positive");
  const Index m = gtil.size();
  Eigen::SelfAdjointEigenSolver<Matrix> es(Htil);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("cubic_reg_exact: eigendecomposition failed");
  const Vector lam = es.eigenvalues();
  const Matrix& Q = es.eigenvectors();
  const Vector gq = Q.transpose() * gtil;

  const double lam_min = lam[0];
  const double lam_scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  const double lb = std::max(0.0, -lam_min);
  const double gnorm = gtil.norm();

  // indices inside the minimal eigenspace
  const double eig_tol = 1e-12 * lam_scale;
  auto in_min_space = [&](Index i) { return lam[i] <= lam_min + eig_tol; };

  if (gnorm == 0.0 && lam_min >= 0.0) return Vector::Zero(m);

  // Gradient components below gmin_tol on the minimal eigenspace are treated
  // as exact zeros (hard-case detection threshold).
  const double gmin_tol = 1e-12 * std::max(gnorm, 1.0);
  bool g_on_min = false;
  for (Index i = 0; i < m; ++i)
    if (in_min_space(i) && std::abs(gq[i]) > gmin_tol) g_on_min = true;
  const bool skip_min = lb > 0.0 && !g_on_min;

  // ||u(lam)|| with u_i = -gq_i / (lam_i + lam); guarded against the
  // boundary lam_i + lam = 0.
  auto norm_u = [&](double l) -> double {
    double acc = 0.0;
    for (Index i = 0; i < m; ++i) {
      if (skip_min && in_min_space(i)) continue;
      const double d = lam[i] + l;
      if (d <= 0.0) {
        if (std::abs(gq[i]) <= gmin_tol) continue;
        return std::numeric_limits<double>::infinity();
      }
      acc += (gq[i] / d) * (gq[i] / d);
    }
    return std::sqrt(acc);
  };
  auto assemble = [&](double l) {
    Vector u = Vector::Zero(m);
    for (Index i = 0; i < m; ++i) {
      if (skip_min && in_min_space(i)) continue;
      const double d = lam[i] + l;
      if (d <= 0.0 && std::abs(gq[i]) <= gmin_tol) continue;
      u -= (gq[i] / d) * Q.col(i);
    }
    return u;
  };

  // Hard case: no gradient component on the minimal eigenspace and the
  // pseudo-inverse solution at lam = lb already short enough.  Close the gap
  // with a component along a minimal eigenvector.
  if (skip_min) {
    const double target = 2.0 * lb / sigma;
    const double nperp = norm_u(lb);
    if (nperp < target) {
      const double alpha =
          std::sqrt(std::max(0.0, target * target - nperp * nperp));
      Vector u = assemble(lb);
      u += alpha * Q.col(0);
      return u;
    }
  }

  // Regular case: psi(l) = ||u(l)|| - 2 l / sigma is decreasing on (lb, inf)
  // with psi >= 0 (possibly +inf) at lb and psi -> -inf; bracket then refine.
  auto psi = [&](double l) { return norm_u(l) - 2.0 * l / sigma; };
  double lo = lb;
  double hi = std::max({1.0, 2.0 * lb, std::sqrt(sigma * gnorm)});
  int guard = 0;
  while (psi(hi) > 0.0) {
    hi *= 2.0;
    if (++guard > 200)
      throw std::runtime_error("cubic_reg_exact: failed to bracket the root");
  }
  // Newton on phi(l) = 1/||u(l)|| - sigma/(2 l) (nearly linear in l),
  // safeguarded by bisection on [lo, hi].
  double l = 0.5 * (lo + hi);
  if (psi(lo) <= 0.0) l = lo;  // root at the left end
  for (int it = 0; it < 200; ++it) {
    const double nu_l = norm_u(l);
    if (nu_l == 0.0) {
      hi = l;
      l = 0.5 * (lo + hi);
      continue;
    }
    const double p = psi(l);
    if (p > 0.0)
      lo = l;
    else
      hi = l;
    if (hi - lo <= 8.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, hi))
      break;
    if (!std::isfinite(nu_l)) {
      l = 0.5 * (lo + hi);
      continue;
    }
    double dsum = 0.0;  // -(1/2) d/dl ||u||^2 = sum gq^2/(lam+l)^3
    for (Index i = 0; i < m; ++i) {
      if (skip_min && in_min_space(i)) continue;
      const double d = std::max(lam[i] + l, 1e-300);
      dsum += gq[i] * gq[i] / (d * d * d);
    }
    const double phi = 1.0 / nu_l - sigma / (2.0 * std::max(l, 1e-300));
    const double dphi = dsum / (nu_l * nu_l * nu_l) +
                        sigma / (2.0 * std::max(l * l, 1e-300));
    double next = l - phi / dphi;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    l = next;
  }
  return assemble(l);
}

namespace detail {

/// Krylov (Lanczos with full reorthogonalization) minimizer of
/// g^T u + 1/2 u^T A u + sigma/6 ||u||^3 given A only as an operator.
/// The reduced problem in the growing orthonormal basis is solved exactly;
/// expansion stops when the lifted stationarity residual
/// ||g + A u + (sigma/2)||u|| u|| drops below tol.
inline Vector cubic_reg_krylov(
    const std::function<Vector(const Vector&)>& apply_a, const Vector& g,
    double sigma, double tol, int max_dim) {
  const Index n = g.size();
  const double gnorm = g.norm();
  if (gnorm == 0.0) {
    // no Krylov direction to start from; degenerate but harmless
    return Vector::Zero(n);
  }
  std::vector<Vector> basis;
  basis.push_back(g / gnorm);
  Matrix T = Matrix::Zero(1, 1);  // projected operator, grown incrementally
  Vector u = Vector::Zero(n);
  int dim = 0;
  Vector av;
  while (dim < max_dim) {
    ++dim;
    av = apply_a(basis[dim - 1]);
    // projected column
    Matrix Tnew = Matrix::Zero(dim, dim);
    Tnew.topLeftCorner(dim - 1, dim - 1) = T.topLeftCorner(dim - 1, dim - 1);
    for (int i = 0; i < dim; ++i) {
      const double hij = basis[i].dot(av);
      Tnew(i, dim - 1) = hij;
      Tnew(dim - 1, i) = hij;
    }
    T = Tnew;
    // reduced right-hand side is ||g|| e_1 by construction
    Vector gred = Vector::Zero(dim);
    gred[0] = gnorm;
    const Vector y = cubic_reg_exact(gred, T.topLeftCorner(dim, dim), sigma);
    u.setZero();
    for (int i = 0; i < dim; ++i) u += y[i] * basis[i];
    const Vector resid = g + apply_a(u) + 0.5 * sigma * u.norm() * u;
    if (resid.norm() <= tol) return u;
    // next direction: full reorthogonalization of A v_j
    Vector w = av;
    for (int pass = 0; pass < 2; ++pass)
      for (const Vector& b : basis) w -= b.dot(w) * b;
    const double beta = w.norm();
    if (beta <= 1e-14 * std::max(1.0, gnorm)) {
      // invariant subspace reached: the reduced solution is exact on it
      return u;
    }
    basis.push_back(w / beta);
  }
  return u;
}

constexpr Index kDenseCubicThreshold = 256;

}  // namespace detail

enum class P2Mode { whitened_exact, euclid_approx };

/// Degree-2 subproblem.  Whitened-exact mode handles the W-norm regulariser
/// exactly through W = L L^T: with u = L^T shat the model becomes a standard
/// cubic regularisation in the Euclidean norm, solved by cubic_reg_exact (or
/// a certified Krylov expansion when the sketch dimension is large).
/// Euclid-approx mode regularises with ||shat||^3 instead and relies on the
/// theta slack; if (gradstep) fails post hoc it falls back to whitened-exact.
inline SubproblemSolution solve_p2(const SketchedModel& model,
                                   const SketchOperator& sketch, double theta,
                                   P2Mode mode = P2Mode::whitened_exact) {
  if (!(model.sigma > 0.0))
    throw std::invalid_argument("solve_p2: sigma must be positive");
  if (model.Hhat.rows() != model.ghat.size())
    throw std::invalid_argument("solve_p2: degree-2 model requires Hhat");
  const Index l = model.ghat.size();

  if (mode == P2Mode::euclid_approx) {
    SubproblemSolution sol;
    if (l <= detail::kDenseCubicThreshold) {
      sol.shat = cubic_reg_exact(model.ghat, model.Hhat, model.sigma);
    } else {
      auto op = [&](const Vector& v) { return Vector(model.Hhat * v); };
      sol.shat = detail::cubic_reg_krylov(
          op, model.ghat, model.sigma,
          1e-9 * (1.0 + model.ghat.norm()), static_cast<int>(l));
    }
    sol.s = sketch.transpose_apply(sol.shat);
    detail::fill_conditions(sol, model, theta);
    if (sol.cond_descent && sol.cond_gradstep) return sol;
    return solve_p2(model, sketch, theta, P2Mode::whitened_exact);
  }

  auto llt = detail::factor_gram(model.W);
  const Matrix L = llt.matrixL();
  const Vector gt = L.triangularView<Eigen::Lower>().solve(model.ghat);

  SubproblemSolution sol;
  if (l <= detail::kDenseCubicThreshold) {
    Matrix X = L.triangularView<Eigen::Lower>().solve(model.Hhat);
    Matrix Ht =
        L.triangularView<Eigen::Lower>().solve(X.transpose()).transpose();
    Ht = 0.5 * (Ht + Ht.transpose()).eval();
    const Vector u = cubic_reg_exact(gt, Ht, model.sigma);
    sol.shat = L.transpose().triangularView<Eigen::Upper>().solve(u);
  } else {
    auto op = [&](const Vector& v) {
      const Vector a = L.transpose().triangularView<Eigen::Upper>().solve(v);
      const Vector b = model.Hhat * a;
      return Vector(L.triangularView<Eigen::Lower>().solve(b));
    };
    const Vector u = detail::cubic_reg_krylov(
        op, gt, model.sigma, 1e-9 * (1.0 + gt.norm()), static_cast<int>(l));
    sol.shat = L.transpose().triangularView<Eigen::Upper>().solve(u);
  }
  sol.s = sketch.transpose_apply(sol.shat);
  detail::fill_conditions(sol, model, theta);
  return sol;
}

/// Quadratically regularised approximate-second-order subproblem:
/// exact minimizer of ghat^T s + 1/2 s^T Bhat s + sigma/2 s^T W s, i.e. the
/// solution of (Bhat + sigma W) shat = -ghat.  At the minimizer
/// grad That = -sigma W shat, so the B-variant gradient condition holds with
/// equality at theta = 1.
inline SubproblemSolution solve_2b(const SketchedModel& model,
                                   const SketchOperator& sketch,
                                   double theta = 1.0) {
  if (!(model.sigma > 0.0))
    throw std::invalid_argument("solve_2b: sigma must be positive");
  if (model.reg != RegKind::quadratic)
    throw std::invalid_argument("solve_2b: model must use the quadratic regulariser");
  Matrix K = model.sigma * model.W;
  if (model.Hhat.size() != 0) K += model.Hhat;
  Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
    throw sketch_degenerate_error("solve_2b: B + sigma W numerically singular");
  SubproblemSolution sol;
  sol.shat = -llt.solve(model.ghat);
  sol.s = sketch.transpose_apply(sol.shat);
  detail::fill_conditions(sol, model, theta);
  return sol;
}

}  // namespace skoffar
