#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>

#include "skoffar/common.hpp"
#include "skoffar/problems.hpp"
#include "skoffar/sketch.hpp"
#include "skoffar/subproblem.hpp"
#include "skoffar/trace.hpp"

namespace skoffar {

enum class Variant { skoffar_p, skoffar_2b };
enum class SigmaRule { practical, theory };
enum class KappaSMode { beta_bound, exact_norm };
enum class XiRule { constant, doubling };
enum class BMode { zero, gauss_newton, user };

struct SolverConfig {
  int p = 2;                 // model degree (skoffar_p only)
  double tau = 0.1;          // sketch ratio l/n; l = max(1, round(tau n))
  double eps = 1e-3;         // gradient accuracy
  double nu0 = 1.0;
  double vartheta = 1e-3;
  double theta = 0.0;        // <= 0 selects 1.01 (1 + sqrt(n/l))
  double mu_init = 1e3;      // mu_{-1}
  XiRule xi_rule = XiRule::constant;
  double xi = 0.05;
  KappaSMode kappa_s_mode = KappaSMode::beta_bound;
  SigmaRule sigma_rule = SigmaRule::practical;
  P2Mode p2_mode = P2Mode::whitened_exact;
  long max_iter = 0;         // 0 selects ceil(1e5 / w2(tau, n)), capped at 1e7
  std::uint64_t seed = 0;
  Variant variant = Variant::skoffar_p;
  BMode b_mode = BMode::zero;
  std::function<Vector(const Vector&, const Vector&)> user_b;  // (x, v) -> B v
  bool identity_sketch_hook = false;  // replaces S_k by I (l = n)
  bool record_full = true;
  bool store_iterates = false;
  bool diagnostics = false;

  void validate(Index n) const {
    if (variant == Variant::skoffar_p && p != 1 && p != 2)
      throw std::invalid_argument("SolverConfig: p must be 1 or 2");
    if (!(tau > 0.0 && tau <= 1.0))
      throw std::invalid_argument("SolverConfig: tau must lie in (0, 1]");
    if (!(eps > 0.0)) throw std::invalid_argument("SolverConfig: eps must be positive");
    if (!(nu0 > 0.0)) throw std::invalid_argument("SolverConfig: nu0 must be positive");
    if (!(vartheta > 0.0 && vartheta < 1.0))
      throw std::invalid_argument("SolverConfig: vartheta must lie in (0, 1)");
    if (theta > 0.0 && !(theta > 1.0))
      throw std::invalid_argument("SolverConfig: theta must exceed 1");
    if (mu_init < 0.0)
      throw std::invalid_argument("SolverConfig: mu_init must be nonnegative");
    if (!(xi > 0.0 && xi <= 1.0))
      throw std::invalid_argument("SolverConfig: xi must lie in (0, 1]");
    if (max_iter < 0)
      throw std::invalid_argument("SolverConfig: max_iter must be nonnegative");
    if (n < 1) throw std::invalid_argument("SolverConfig: empty problem");
    if (variant == Variant::skoffar_2b && b_mode == BMode::user && !user_b)
      throw std::invalid_argument("SolverConfig: user B operator missing");
  }
};

/// mu_k = max(mu_{k-1}, (||S_{k-1} g_k|| - ||grad That_{k-1}||) /
///                      (kappa_{S,k-1} ||s_{k-1}||^p)).
inline double update_mu(double mu_prev, double sketched_grad_norm,
                        double prev_grad_model_norm, double kappa_s_prev,
                        double prev_step_norm, int p) {
  if (!(prev_step_norm > 0.0))
    throw std::runtime_error("update_mu: previous step has zero norm (stagnation)");
  if (!(kappa_s_prev > 0.0))
    throw std::invalid_argument("update_mu: kappa_s must be positive");
  const double candidate = (sketched_grad_norm - prev_grad_model_norm) /
                           (kappa_s_prev * std::pow(prev_step_norm, p));
  return std::max(mu_prev, candidate);
}

/// sigma_0 = nu_0; afterwards the practical rule max(vartheta nu_k, xi mu_k)
/// or the theory representative nu_k.  Either choice stays inside
/// [vartheta nu_k, max(nu_k, mu_k)] as long as xi <= 1.
inline double select_sigma(long k, double nu, double mu, double nu0,
                           double vartheta, SigmaRule rule, double xi) {
  if (k == 0) return nu0;
  if (rule == SigmaRule::practical) return std::max(vartheta * nu, xi * mu);
  return nu;
}

/// nu_{k+1} = nu_k + nu_k ||s_k||^{p+1}.
inline double update_nu(double nu, double step_norm, int p) {
  return nu + nu * std::pow(step_norm, p + 1);
}

/// PSD Hessian surrogate for the approximate-second-order variant, returned
/// in operator form at the point x.
inline std::function<Vector(const Vector&)> build_Bk(
    const ProblemInstance& problem, const Vector& x, BMode mode,
    const std::function<Vector(const Vector&, const Vector&)>& user_b = {}) {
  switch (mode) {
    case BMode::zero:
      return [](const Vector& v) { return Vector(Vector::Zero(v.size())); };
    case BMode::user:
      if (!user_b) throw std::invalid_argument("build_Bk: user operator missing");
      return [user_b, x](const Vector& v) { return user_b(x, v); };
    case BMode::gauss_newton: {
      if (!problem.least_squares)
        throw std::invalid_argument(
            "build_Bk: gauss-newton needs a least-squares problem");
      auto J = std::make_shared<Matrix>(problem.least_squares->jacobian(x));
      return [J](const Vector& v) {
        return Vector(J->transpose() * ((*J) * v));
      };
    }
  }
  throw std::invalid_argument("build_Bk: unknown mode");
}

struct SolverState {
  Vector x;
  long k = 0;
  double nu = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double xi = 0.0;
  std::optional<SketchOperator> prev_sketch;
  double prev_grad_model_norm = 0.0;
  double prev_step_norm = 0.0;
  double prev_kappa_s = 0.0;
  double prev_gnorm = std::numeric_limits<double>::infinity();
};

/// Drives one solver run.  Owns the state, the RNG and the trace; step()
/// performs a single iteration and returns the record, or nullopt when the
/// gradient tolerance is already met at the current iterate (the hitting
/// time, in which case no step is taken).
class SolverDriver {
 public:
  SolverDriver(DerivativeView view, SolverConfig cfg)
      : view_(std::move(view)), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.validate(view_.n);
    n_ = view_.n;
    l_ = cfg_.identity_sketch_hook
             ? n_
             : std::max<Index>(1, static_cast<Index>(std::llround(
                                      cfg_.tau * static_cast<double>(n_))));
    theta_ = cfg_.theta > 0.0
                 ? cfg_.theta
                 : 1.01 * (1.0 + std::sqrt(static_cast<double>(n_) /
                                           static_cast<double>(l_)));
    w1_ = cfg_.tau + static_cast<double>(n_) * cfg_.tau * cfg_.tau;
    w2_ = w1_ / (1.0 + static_cast<double>(n_));
    budget_ = cfg_.max_iter > 0
                  ? cfg_.max_iter
                  : std::min<long>(10'000'000,
                                   static_cast<long>(std::ceil(1e5 / w2_)));

    state_.x = view_.x0;
    state_.nu = cfg_.nu0;
    state_.mu = cfg_.mu_init;
    state_.xi = cfg_.xi;

    trace_.n = n_;
    trace_.tau = cfg_.tau;
    trace_.seed = cfg_.seed;
    trace_.w1_per_iter = w1_;
    trace_.w2_per_iter = w2_;
    trace_.sketch_rows = l_;
    trace_.budget = budget_;
    if (cfg_.store_iterates) trace_.iterates.push_back(state_.x);
  }

  void set_diagnostic(std::function<double(const Vector&)> fn) {
    diag_ = std::move(fn);
  }
  void set_b_source(const ProblemInstance& problem) {
    b_problem_ = &problem;
  }

  const SolverState& state() const { return state_; }
  const SolverConfig& config() const { return cfg_; }
  double theta() const { return theta_; }
  Index sketch_rows() const { return l_; }
  long budget() const { return budget_; }
  RunTrace& trace() { return trace_; }

  std::optional<IterationRecord> step() {
    const Vector g = view_.grad(state_.x);
    if (!g.allFinite())
      throw std::runtime_error("solver: non-finite gradient at iteration " +
                               std::to_string(state_.k));
    const double gnorm = g.norm();
    trace_.gnorms.push_back(gnorm);

    if (state_.k >= 1) {
      const double sg = state_.prev_sketch->apply(g).norm();
      const double mu_next =
          update_mu(state_.mu, sg, state_.prev_grad_model_norm,
                    state_.prev_kappa_s, state_.prev_step_norm, mu_exponent());
      if (mu_next < state_.mu) ++trace_.tally.mu_monotonicity_violations;
      state_.mu = mu_next;
    }

    if (gnorm <= cfg_.eps) {
      trace_.hitting_time = state_.k;
      trace_.reason = TerminationReason::gradient_tolerance;
      trace_.final_gnorm = gnorm;
      return std::nullopt;
    }

    if (cfg_.xi_rule == XiRule::doubling && state_.k >= 1) {
      state_.xi = gnorm < state_.prev_gnorm
                      ? std::min(1.0, 2.0 * state_.xi)
                      : std::max(1e-6, 0.5 * state_.xi);
    }
    state_.sigma = select_sigma(state_.k, state_.nu, state_.mu, cfg_.nu0,
                                cfg_.vartheta, cfg_.sigma_rule, state_.xi);

    SketchOperator sketch;
    SketchedModel model;
    SubproblemSolution sol;
    bool solved = false;
    for (int attempt = 0; attempt < 5 && !solved; ++attempt) {
      sketch = cfg_.identity_sketch_hook ? identity_sketch(n_)
                                         : sample_sketch(l_, n_, rng_);
      try {
        model = assemble_model(sketch, g);
        switch (cfg_.variant) {
          case Variant::skoffar_2b:
            sol = solve_2b(model, sketch, theta_);
            break;
          case Variant::skoffar_p:
            sol = cfg_.p == 1 ? solve_p1(model, sketch, theta_)
                              : solve_p2(model, sketch, theta_, cfg_.p2_mode);
            break;
        }
        solved = true;
      } catch (const sketch_degenerate_error&) {
        if (cfg_.identity_sketch_hook || attempt == 4) throw;
      }
    }

    const double snorm = sol.s.norm();
    if (!(snorm > 0.0))
      throw std::runtime_error("solver: zero step at iteration " +
                               std::to_string(state_.k));

    // exact recomputation of the certified conditions
    const ConditionCheck check = verify_conditions(model, sol.shat, theta_);
    ++trace_.tally.iterations;
    if (!check.descent) ++trace_.tally.descent_violations;
    if (check.gradstep_lhs > check.gradstep_rhs * (1.0 + 1e-12))
      ++trace_.tally.gradstep_violations;
    if (state_.sigma < cfg_.vartheta * state_.nu ||
        state_.sigma > std::max(state_.nu, state_.mu))
      ++trace_.tally.sigma_interval_violations;
    const double taylor_decrease = -model.taylor_change(sol.shat);
    if (taylor_decrease <= regulariser_bound(state_.sigma, snorm))
      ++trace_.tally.taylor_decrease_violations;

    IterationRecord rec;
    rec.k = state_.k;
    rec.gnorm = gnorm;
    rec.snorm = snorm;
    rec.sigma = state_.sigma;
    rec.nu = state_.nu;
    rec.mu = state_.mu;
    rec.mdec = check.model_decrease;
    rec.gs_lhs = check.gradstep_lhs;
    rec.gs_rhs = check.gradstep_rhs;
    if (cfg_.diagnostics && diag_) rec.f_diag = diag_(state_.x);
    rec.cum_w1 = static_cast<double>(state_.k + 1) * w1_;
    rec.cum_w2 = static_cast<double>(state_.k + 1) * w2_;
    if (cfg_.record_full) trace_.records.push_back(rec);

    // every iteration is successful: accept the trial point unconditionally
    state_.x += sol.s;
    if (cfg_.store_iterates) trace_.iterates.push_back(state_.x);

    const double nu_next = update_nu(state_.nu, snorm, recurrence_exponent());
    // "strictly increasing" up to representability: flag only when the exact
    // increment was clearly above rounding yet did not materialize
    const double increment = state_.nu * std::pow(snorm, recurrence_exponent() + 1);
    if (nu_next < state_.nu ||
        (nu_next == state_.nu &&
         increment > 4.0 * std::numeric_limits<double>::epsilon() * state_.nu))
      ++trace_.tally.nu_monotonicity_violations;
    state_.nu = nu_next;

    state_.prev_sketch = std::move(sketch);
    state_.prev_grad_model_norm = sol.grad_model_norm;
    state_.prev_step_norm = snorm;
    // exact-norm mode: power iteration approaches ||S|| from below, so pad by
    // its tolerance to keep kappa_S a genuine upper bound on ||S|| (the
    // identity hook has an exact norm and needs no padding)
    if (cfg_.kappa_s_mode == KappaSMode::beta_bound) {
      state_.prev_kappa_s = cfg_.identity_sketch_hook ? kappa_bound(n_, n_)
                                                      : kappa_bound(l_, n_);
    } else {
      state_.prev_kappa_s =
          cfg_.identity_sketch_hook
              ? 1.0
              : operator_norm(*state_.prev_sketch) * (1.0 + 1e-6);
    }
    state_.prev_gnorm = gnorm;
    ++state_.k;
    return rec;
  }

  RunTrace run() {
    const auto start = std::chrono::steady_clock::now();
    for (;;) {
      const auto rec = step();
      if (!rec) break;  // hitting time reached
      if (state_.k >= budget_) {
        // budget exhausted: evaluate the final gradient once so the trace
        // ends with an honest gradient norm (and a possible late hit)
        const Vector g = view_.grad(state_.x);
        const double gnorm = g.norm();
        trace_.gnorms.push_back(gnorm);
        trace_.final_gnorm = gnorm;
        if (gnorm <= cfg_.eps) {
          trace_.hitting_time = state_.k;
          trace_.reason = TerminationReason::gradient_tolerance;
        } else {
          trace_.reason = TerminationReason::iteration_budget;
        }
        break;
      }
    }
    trace_.iterations = state_.k;
    trace_.final_nu = state_.nu;
    trace_.final_mu = state_.mu;
    if (cfg_.diagnostics && diag_) trace_.final_f_diag = diag_(state_.x);
    trace_.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return trace_;
  }

 private:
  int mu_exponent() const {
    return cfg_.variant == Variant::skoffar_2b ? 1 : cfg_.p;
  }
  // exponent p in the nu recurrence / step-power sense (2b behaves like p=1)
  int recurrence_exponent() const {
    return cfg_.variant == Variant::skoffar_2b ? 1 : cfg_.p;
  }
  double regulariser_bound(double sigma, double snorm) const {
    const int p = recurrence_exponent();
    const double fact = (p == 1) ? 2.0 : 6.0;  // (p+1)!
    return sigma / fact * std::pow(snorm, p + 1);
  }

  SketchedModel assemble_model(const SketchOperator& sketch, const Vector& g) {
    SketchedModel model;
    model.ghat = sketch.apply(g);
    model.W = sketch.gram();
    model.sigma = state_.sigma;
    if (cfg_.variant == Variant::skoffar_2b) {
      model.degree = 2;
      model.reg = RegKind::quadratic;
      std::function<Vector(const Vector&)> b_op;
      if (cfg_.b_mode == BMode::gauss_newton) {
        if (b_problem_ == nullptr)
          throw std::invalid_argument(
              "solver: gauss-newton B requires a problem instance");
        b_op = build_Bk(*b_problem_, state_.x, cfg_.b_mode);
      } else if (cfg_.b_mode == BMode::user) {
        const Vector x = state_.x;
        auto user = cfg_.user_b;
        b_op = [user, x](const Vector& v) { return user(x, v); };
      }
      if (b_op) {
        model.Hhat = sketch_quadratic(sketch, b_op);
      }  // zero mode leaves Hhat empty
    } else {
      model.degree = cfg_.p;
      model.reg = RegKind::power_p_plus_one;
      if (cfg_.p == 2) {
        const Vector x = state_.x;
        auto hvp = view_.hvp;
        model.Hhat = sketch_quadratic(
            sketch, [&](const Vector& v) { return hvp(x, v); });
      }
    }
    return model;
  }

  /// S Q S^T assembled from l operator applications (never forms Q).
  Matrix sketch_quadratic(const SketchOperator& sketch,
                          const std::function<Vector(const Vector&)>& q_op) {
    const Index l = sketch.rows;
    Matrix Y(n_, l);
    if (sketch.is_identity) {
      for (Index i = 0; i < l; ++i)
        Y.col(i) = q_op(Vector::Unit(n_, i));
      Matrix H = Y;
      return Matrix(0.5 * (H + H.transpose()));
    }
    for (Index i = 0; i < l; ++i)
      Y.col(i) = q_op(sketch.S.row(i).transpose());
    Matrix H = sketch.S * Y;
    return Matrix(0.5 * (H + H.transpose()));
  }

  DerivativeView view_;
  SolverConfig cfg_;
  std::mt19937_64 rng_;
  Index n_ = 0;
  Index l_ = 0;
  double theta_ = 0.0;
  double w1_ = 0.0;
  double w2_ = 0.0;
  long budget_ = 0;
  SolverState state_;
  RunTrace trace_;
  std::function<double(const Vector&)> diag_;
  const ProblemInstance* b_problem_ = nullptr;
};

inline std::string solver_label(const SolverConfig& cfg) {
  if (cfg.variant == Variant::skoffar_2b) return "skoffar2b";
  return cfg.p == 1 ? "skoffar1" : "skoffar2";
}

/// Full run on the derivative view only (no objective access possible).
inline RunTrace run_skoffar(const DerivativeView& view,
                            const SolverConfig& cfg) {
  SolverDriver driver(view, cfg);
  driver.trace().solver_label = solver_label(cfg);
  return driver.run();
}

/// Full run on a problem instance.  The solver path sees derivatives only;
/// the diagnostic objective is wired up (and counted) only when
/// cfg.diagnostics is set.
inline RunTrace run_skoffar(const ProblemInstance& problem,
                            const SolverConfig& cfg) {
  SolverDriver driver(problem.derivative_view(), cfg);
  driver.trace().solver_label = solver_label(cfg);
  driver.trace().problem = problem.name();
  driver.set_b_source(problem);
  const long calls_before = problem.objective_calls();
  if (cfg.diagnostics)
    driver.set_diagnostic(
        [&problem](const Vector& x) { return problem.objective_diagnostic(x); });
  RunTrace t = driver.run();
  t.f_calls = problem.objective_calls() - calls_before;
  return t;
}

/// omega-true flags: iteration k is omega-true when ||s_k||^p >= omega eps.
struct OmegaTrueReport {
  std::vector<bool> flags;
  std::vector<long> true_counts;  // |T_k|: omega-true iterations among 0..k-1
};

inline OmegaTrueReport omega_true_flags(const RunTrace& trace, double omega,
                                        double eps, int p) {
  if (!(omega > 0.0 && omega < 1.0))
    throw std::invalid_argument("omega_true_flags: omega must lie in (0, 1)");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("omega_true_flags: eps must lie in (0, 1)");
  OmegaTrueReport rep;
  long count = 0;
  for (const IterationRecord& r : trace.records) {
    rep.true_counts.push_back(count);
    const bool t = std::pow(r.snorm, p) >= omega * eps;
    rep.flags.push_back(t);
    if (t) ++count;
  }
  rep.true_counts.push_back(count);
  return rep;
}

/// Checks the per-iteration step bound
///   ||s_k|| <= 2 eta + 2 ((p+1)! ||g_k|| / sigma_k)^{1/p},
///   eta = sum_{i=2}^p [ kappa_high (p+1)! / (i! vartheta nu0) ]^{1/(p-i+1)}
/// (for the quadratically regularised variant: ||s_k|| <= 2 ||g_k|| /
/// (vartheta nu0)).
struct StepBoundReport {
  double eta = 0.0;
  long violations = 0;
  double worst_ratio = 0.0;  // max ||s_k|| / bound_k
};

inline StepBoundReport check_step_bound(const RunTrace& trace,
                                        double kappa_high, double nu0,
                                        double vartheta, int p,
                                        bool quadratic_reg = false) {
  if (kappa_high < 0.0)
    throw std::invalid_argument("check_step_bound: kappa_high must be >= 0");
  StepBoundReport rep;
  if (!quadratic_reg) {
    double eta = 0.0;
    double factorial_i = 1.0;  // i!
    const double fact_p1 = (p == 1) ? 2.0 : 6.0;
    for (int i = 2; i <= p; ++i) {
      factorial_i *= i;
      eta += std::pow(kappa_high * fact_p1 / (factorial_i * vartheta * nu0),
                      1.0 / (p - i + 1));
    }
    rep.eta = eta;
  }
  const double fact_p1 = (p == 1) ? 2.0 : 6.0;
  for (const IterationRecord& r : trace.records) {
    const double bound =
        quadratic_reg
            ? 2.0 * r.gnorm / (vartheta * nu0)
            : 2.0 * rep.eta + 2.0 * std::pow(fact_p1 * r.gnorm / r.sigma, 1.0 /
                                                                          p);
    if (r.snorm > bound * (1.0 + 1e-12)) ++rep.violations;
    if (bound > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, r.snorm / bound);
  }
  return rep;
}

}  // namespace skoffar
