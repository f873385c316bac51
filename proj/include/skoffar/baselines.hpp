#pragma once

#include <chrono>
#include <cmath>
#include <string>

#include "skoffar/common.hpp"
#include "skoffar/problems.hpp"
#include "skoffar/trace.hpp"

namespace skoffar {

enum class BaselineMethod { adagrad_norm, adam_norm };

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::adagrad_norm;
  double eta = 1.0;      // step scale
  double b0 = 1e-2;      // initial accumulator (adagrad)
  double beta1 = 0.9;    // first-moment discount (adam)
  double beta2 = 0.9999; // second-moment discount (adam)
  double eps_stop = 1e-3;
  long max_iter = 100000;
  std::uint64_t seed = 0;  // kept for sweep bookkeeping; both methods are
                           // deterministic
  bool record_full = true;
  bool diagnostics = false;

  void validate() const {
    if (!(eta > 0.0)) throw std::invalid_argument("BaselineConfig: eta must be positive");
    if (b0 < 0.0) throw std::invalid_argument("BaselineConfig: b0 must be nonnegative");
    if (!(beta1 >= 0.0 && beta1 < 1.0))
      throw std::invalid_argument("BaselineConfig: beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("BaselineConfig: beta2 must lie in [0, 1)");
    if (!(eps_stop > 0.0))
      throw std::invalid_argument("BaselineConfig: eps_stop must be positive");
    if (max_iter < 0)
      throw std::invalid_argument("BaselineConfig: max_iter must be nonnegative");
  }
};

namespace detail {

template <typename StepFn>
RunTrace baseline_loop(const ProblemInstance& problem,
                       const BaselineConfig& cfg, const std::string& label,
                       StepFn&& compute_step) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const DerivativeView view = problem.derivative_view();
  const Index n = view.n;

  RunTrace t;
  t.problem = problem.name();
  t.solver_label = label;
  t.n = n;
  t.tau = 1.0;
  t.seed = cfg.seed;
  t.w1_per_iter = 1.0;  // one gradient per iteration
  t.w2_per_iter = 1.0 / (1.0 + static_cast<double>(n));
  t.budget = cfg.max_iter;

  const long calls_before = problem.objective_calls();
  Vector x = view.x0;
  long k = 0;
  for (;;) {
    const Vector g = view.grad(x);
    if (!g.allFinite())
      throw std::runtime_error(label + ": non-finite gradient at iteration " +
                               std::to_string(k));
    const double gnorm = g.norm();
    t.gnorms.push_back(gnorm);
    if (gnorm <= cfg.eps_stop) {
      t.hitting_time = k;
      t.reason = TerminationReason::gradient_tolerance;
      t.final_gnorm = gnorm;
      break;
    }
    if (k >= cfg.max_iter) {
      t.reason = TerminationReason::iteration_budget;
      t.final_gnorm = gnorm;
      break;
    }
    const Vector step = compute_step(k, g, gnorm);
    if (cfg.record_full) {
      IterationRecord rec;
      rec.k = k;
      rec.gnorm = gnorm;
      rec.snorm = step.norm();
      if (cfg.diagnostics) rec.f_diag = problem.objective_diagnostic(x);
      rec.cum_w1 = static_cast<double>(k + 1) * t.w1_per_iter;
      rec.cum_w2 = static_cast<double>(k + 1) * t.w2_per_iter;
      t.records.push_back(rec);
    }
    x += step;
    ++k;
  }
  t.iterations = k;
  if (cfg.diagnostics) t.final_f_diag = problem.objective_diagnostic(x);
  t.f_calls = problem.objective_calls() - calls_before;
  t.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return t;
}

}  // namespace detail

/// ADAGRAD-Norm: b_{k+1}^2 = b_k^2 + ||g_k||^2, x_{k+1} = x_k - eta g_k / b_{k+1}.
inline RunTrace adagrad_norm_run(const ProblemInstance& problem,
                                 const BaselineConfig& cfg) {
  double b_sq = cfg.b0 * cfg.b0;
  return detail::baseline_loop(
      problem, cfg, "adagrad_norm",
      [&b_sq, &cfg](long, const Vector& g, double gnorm) {
        b_sq += gnorm * gnorm;
        return Vector(-cfg.eta / std::sqrt(b_sq) * g);
      });
}

/// Norm-wise ADAM with bias correction:
///   m_k = beta1 m_{k-1} + (1 - beta1) g_k,
///   v_k = beta2 v_{k-1} + (1 - beta2) ||g_k||^2,
///   x_{k+1} = x_k - eta mhat_k / sqrt(vhat_k + 1e-12).
inline RunTrace adam_norm_run(const ProblemInstance& problem,
                              const BaselineConfig& cfg) {
  Vector m;
  double v = 0.0;
  return detail::baseline_loop(
      problem, cfg, "adam_norm",
      [&m, &v, &cfg](long k, const Vector& g, double gnorm) {
        if (m.size() == 0) m = Vector::Zero(g.size());
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * gnorm * gnorm;
        const double mc = 1.0 - std::pow(cfg.beta1, k + 1);
        const double vc = 1.0 - std::pow(cfg.beta2, k + 1);
        const Vector mhat = m / mc;
        const double vhat = v / vc;
        return Vector(-cfg.eta / std::sqrt(vhat + 1e-12) * mhat);
      });
}

inline RunTrace run_baseline(const ProblemInstance& problem,
                             const BaselineConfig& cfg) {
  return cfg.method == BaselineMethod::adagrad_norm
             ? adagrad_norm_run(problem, cfg)
             : adam_norm_run(problem, cfg);
}

}  // namespace skoffar
