#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "skoffar/common.hpp"

namespace skoffar {

/// An l x n sketch.  Gaussian sketches carry the matrix explicitly with
/// entries i.i.d. N(0, 1/l), so that E ||S x||^2 = ||x||^2.  The identity
/// variant is a test hook that turns the sketched solvers into their
/// full-space counterparts without touching the RNG.
struct SketchOperator {
  Matrix S;  // empty when identity
  Index rows = 0;
  Index cols = 0;
  bool is_identity = false;

  Vector apply(const Vector& x) const {
    return is_identity ? x : Vector(S * x);
  }
  Vector transpose_apply(const Vector& u) const {
    return is_identity ? u : Vector(S.transpose() * u);
  }
  /// Gram matrix W = S S^T.
  Matrix gram() const {
    if (is_identity) return Matrix::Identity(rows, rows);
    Matrix W = Matrix::Zero(rows, rows);
    W.selfadjointView<Eigen::Lower>().rankUpdate(S);
    return Matrix(W.selfadjointView<Eigen::Lower>());
  }
};

inline SketchOperator sample_sketch(Index l, Index n, std::mt19937_64& rng) {
  if (l < 1 || l > n)
    throw std::invalid_argument("sample_sketch: need 1 <= l <= n");
  SketchOperator op;
  op.rows = l;
  op.cols = n;
  op.S.resize(l, n);
  std::normal_distribution<double> normal(0.0,
                                          1.0 / std::sqrt(static_cast<double>(l)));
  double* data = op.S.data();
  const Index size = l * n;
  for (Index t = 0; t < size; ++t) data[t] = normal(rng);
  return op;
}

inline SketchOperator identity_sketch(Index n) {
  SketchOperator op;
  op.rows = n;
  op.cols = n;
  op.is_identity = true;
  return op;
}

/// High-probability norm bound for scaled Gaussian sketches:
/// beta = 1.5 + sqrt(n/l).
inline double kappa_bound(Index l, Index n) {
  if (l < 1) throw std::invalid_argument("kappa_bound: l must be positive");
  return 1.5 + std::sqrt(static_cast<double>(n) / static_cast<double>(l));
}

/// Spectral norm of S via power iteration on W = S S^T, to relative
/// tolerance 1e-8 on the norm estimate.  Throws if the iteration cap is hit,
/// which signals a degenerate operator.
inline double operator_norm(const SketchOperator& op) {
  if (op.is_identity) return 1.0;
  const Matrix W = op.gram();
  const Index l = op.rows;
  Vector v = Vector::Ones(l) / std::sqrt(static_cast<double>(l));
  // deterministic perturbation so v is never orthogonal to the top eigenspace
  for (Index i = 0; i < l; ++i)
    v[i] += 1e-3 * static_cast<double>((i % 7) + 1) / 7.0;
  v.normalize();
  double lambda = 0.0;
  constexpr int cap = 20000;
  for (int it = 0; it < cap; ++it) {
    Vector w = W * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = w.dot(W * w);
    const double change = std::abs(std::sqrt(next) - std::sqrt(lambda));
    v.swap(w);
    lambda = next;
    if (it > 0 && change <= 1e-8 * std::max(std::sqrt(next), 1e-300))
      return std::sqrt(lambda);
  }
  throw std::runtime_error("operator_norm: power iteration did not converge");
}

struct EmbeddingReport {
  double margin = 0.0;        // sigma_min of S restricted to range(M)
  double alpha_target = 0.0;  // requested preservation parameter
  bool passed = false;        // margin >= alpha_target
  double snorm = 0.0;         // ||S||_2
  double smax_bound = 0.0;    // beta = 1.5 + sqrt(n/l)
  Index rank = 0;             // numerical rank of M
};

/// Largest alpha such that ||S M z|| >= alpha ||M z|| for all z, computed as
/// sigma_min(S U) with U an orthonormal basis of range(M).  Rank deficiency
/// is handled by truncating singular values below 1e-12 * sigma_max.
inline EmbeddingReport embedding_margin(const SketchOperator& op,
                                        const Matrix& M,
                                        double alpha_target = 0.0) {
  if (M.size() == 0 || M.norm() == 0.0)
    throw std::invalid_argument("embedding_margin: M must be nonzero");
  Eigen::BDCSVD<Matrix> msvd(M, Eigen::ComputeThinU);
  const double smax = msvd.singularValues()[0];
  Index rank = 0;
  while (rank < msvd.singularValues().size() &&
         msvd.singularValues()[rank] > 1e-12 * smax)
    ++rank;
  const Matrix U = msvd.matrixU().leftCols(rank);
  EmbeddingReport rep;
  rep.rank = rank;
  if (rank > op.rows) {
    // the restriction S|range(M) has a nontrivial kernel: no norm survives
    rep.margin = 0.0;
  } else {
    Matrix SU(op.rows, rank);
    for (Index j = 0; j < rank; ++j) SU.col(j) = op.apply(U.col(j));
    Eigen::JacobiSVD<Matrix> ssvd(SU);
    rep.margin = ssvd.singularValues().minCoeff();
  }
  rep.alpha_target = alpha_target;
  rep.passed = rep.margin >= alpha_target;
  rep.snorm = operator_norm(op);
  rep.smax_bound = kappa_bound(op.rows, op.cols);
  return rep;
}

struct TrueProbabilityEstimate {
  double estimate = 0.0;
  double wilson_low = 0.0;
  double wilson_high = 1.0;
  int successes = 0;
  int trials = 0;
  Index rank_m = 0;
  double rank_bound = 0.0;      // l (1 - alpha) / C_l with C_l placeholder 1
  bool rank_precondition = false;
};

/// Monte-Carlo estimate of P[ sigma_min(S U) >= alpha ] over fresh Gaussian
/// sketches, with a 95% Wilson interval.  Trials draw per-trial derived seeds,
/// so sharding the loop cannot change the result.
inline TrueProbabilityEstimate estimate_true_probability(
    Index l, Index n, const Matrix& M, double alpha, int trials,
    std::uint64_t seed) {
  if (trials < 100)
    throw std::invalid_argument("estimate_true_probability: need >= 100 trials");
  Eigen::BDCSVD<Matrix> msvd(M, Eigen::ComputeThinU);
  const double smax = msvd.singularValues()[0];
  Index rank = 0;
  while (rank < msvd.singularValues().size() &&
         msvd.singularValues()[rank] > 1e-12 * smax)
    ++rank;
  const Matrix U = msvd.matrixU().leftCols(rank);

  int successes = 0;
  if (rank > l && alpha > 0.0) {
    // kernel argument: the margin is identically zero for every sketch
    successes = 0;
  } else {
    for (int t = 0; t < trials; ++t) {
      auto rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
      const SketchOperator op = sample_sketch(l, n, rng);
      double margin = 0.0;
      if (rank <= l) {
        Matrix SU(l, rank);
        for (Index j = 0; j < rank; ++j) SU.col(j) = op.S * U.col(j);
        Eigen::JacobiSVD<Matrix> ssvd(SU);
        margin = ssvd.singularValues().minCoeff();
      }
      if (margin >= alpha) ++successes;
    }
  }

  TrueProbabilityEstimate est;
  est.successes = successes;
  est.trials = trials;
  est.estimate = static_cast<double>(successes) / trials;
  const double z = 1.959963984540054;
  const double nt = trials;
  const double p = est.estimate;
  const double denom = 1.0 + z * z / nt;
  const double center = (p + z * z / (2.0 * nt)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / nt + z * z / (4.0 * nt * nt)) / denom;
  est.wilson_low = std::max(0.0, center - half);
  est.wilson_high = std::min(1.0, center + half);
  est.rank_m = rank;
  est.rank_bound = static_cast<double>(l) * (1.0 - alpha);  // C_l taken as 1
  est.rank_precondition = static_cast<double>(rank) < est.rank_bound;
  return est;
}

/// Checker for the sparse-Hessian embedding variant: reports whether
/// ||S g|| >= alpha ||g|| and ||S H|| <= sqrt(gamma * gref) hold for a given
/// sketch.  Diagnostic only; no sampling strategy targets these conditions.
struct GammaEmbeddingReport {
  double sg_norm = 0.0;
  double alpha_rhs = 0.0;
  double sh_norm = 0.0;
  double gamma_rhs = 0.0;
  bool gradient_part = false;
  bool hessian_part = false;
};

inline GammaEmbeddingReport check_gamma_embedding(const SketchOperator& op,
                                                  const Vector& g,
                                                  const Matrix& H,
                                                  double alpha, double gamma,
                                                  double gref) {
  GammaEmbeddingReport rep;
  rep.sg_norm = op.apply(g).norm();
  rep.alpha_rhs = alpha * g.norm();
  rep.gradient_part = rep.sg_norm >= rep.alpha_rhs;
  Matrix SH(op.rows, H.cols());
  for (Index j = 0; j < H.cols(); ++j) SH.col(j) = op.apply(H.col(j));
  Eigen::BDCSVD<Matrix> svd(SH);
  rep.sh_norm = svd.singularValues()[0];
  rep.gamma_rhs = std::sqrt(gamma * gref);
  rep.hessian_part = rep.sh_norm <= rep.gamma_rhs;
  return rep;
}

}  // namespace skoffar
