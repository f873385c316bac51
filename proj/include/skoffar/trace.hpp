#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "skoffar/common.hpp"

namespace skoffar {

struct IterationRecord {
  long k = 0;
  double gnorm = 0.0;
  double snorm = 0.0;
  double sigma = 0.0;
  double nu = 0.0;
  double mu = 0.0;
  double mdec = 0.0;    // sketched-model decrease mhat(0) - mhat(shat)
  double gs_lhs = 0.0;  // ||grad That(shat)||
  double gs_rhs = 0.0;
  double f_diag = std::numeric_limits<double>::quiet_NaN();
  double cum_w1 = 0.0;  // cost consumed through this iteration
  double cum_w2 = 0.0;
};

enum class TerminationReason {
  gradient_tolerance,
  iteration_budget,
};

/// Online per-run verification counters.  Conditions are recomputed exactly
/// at every iteration; a nonzero count means the corresponding guarantee was
/// broken at least once.
struct InvariantTally {
  long iterations = 0;
  long descent_violations = 0;
  long gradstep_violations = 0;   // lhs > rhs * (1 + 1e-12)
  long sigma_interval_violations = 0;
  long nu_monotonicity_violations = 0;
  long mu_monotonicity_violations = 0;
  long taylor_decrease_violations = 0;  // Delta T <= sigma/(p+1)! ||s||^(p+1)

  bool clean() const {
    return descent_violations == 0 && gradstep_violations == 0 &&
           sigma_interval_violations == 0 &&
           nu_monotonicity_violations == 0 &&
           mu_monotonicity_violations == 0 &&
           taylor_decrease_violations == 0;
  }
  void absorb(const InvariantTally& o) {
    iterations += o.iterations;
    descent_violations += o.descent_violations;
    gradstep_violations += o.gradstep_violations;
    sigma_interval_violations += o.sigma_interval_violations;
    nu_monotonicity_violations += o.nu_monotonicity_violations;
    mu_monotonicity_violations += o.mu_monotonicity_violations;
    taylor_decrease_violations += o.taylor_decrease_violations;
  }
};

struct RunTrace {
  // identification
  std::string problem;
  std::string solver_label;
  Index n = 0;
  double tau = 1.0;
  std::uint64_t seed = 0;

  // per-iteration data
  std::vector<IterationRecord> records;  // empty when record_full is off
  std::vector<double> gnorms;            // every gradient norm evaluated
  std::vector<Vector> iterates;          // only when store_iterates is on

  // outcome
  std::optional<long> hitting_time;  // first k with ||g_k|| <= eps
  TerminationReason reason = TerminationReason::iteration_budget;
  double final_gnorm = 0.0;
  long iterations = 0;  // number of steps taken
  double final_nu = 0.0;
  double final_mu = 0.0;
  std::optional<double> final_f_diag;

  // cost model
  double w1_per_iter = 1.0;
  double w2_per_iter = 1.0;
  Index sketch_rows = 0;
  long budget = 0;

  InvariantTally tally;
  long f_calls = 0;  // diagnostic-objective calls charged to this run
  double runtime_seconds = 0.0;

  bool converged() const { return hitting_time.has_value(); }
};

/// First index k with gnorms[k] <= eps.
inline std::optional<long> hitting_time(const std::vector<double>& gnorms,
                                        double eps) {
  for (std::size_t k = 0; k < gnorms.size(); ++k)
    if (gnorms[k] <= eps) return static_cast<long>(k);
  return std::nullopt;
}

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace detail

/// Canonical CSV serialization of a trace.  The format is deterministic:
/// identical runs produce byte-identical files.
inline std::string trace_csv(const RunTrace& t) {
  std::string out;
  out += "# problem=" + t.problem + " n=" + std::to_string(t.n) +
         " solver=" + t.solver_label;
  {
    char buf[40];
    std::snprintf(buf, sizeof(buf), " tau=%.17g", t.tau);
    out += buf;
  }
  out += " seed=" + std::to_string(t.seed) + "\n";
  out += "# termination=";
  out += (t.reason == TerminationReason::gradient_tolerance
              ? "gradient_tolerance"
              : "iteration_budget");
  if (t.hitting_time)
    out += " hitting_time=" + std::to_string(*t.hitting_time);
  out += " final_gnorm=";
  detail::append_double(out, t.final_gnorm);
  out += "\n";
  out += "k,gnorm,snorm,sigma,nu,mu,mdec,gs_lhs,gs_rhs,f_diag,cum_w1,cum_w2\n";
  for (const IterationRecord& r : t.records) {
    out += std::to_string(r.k);
    for (double v : {r.gnorm, r.snorm, r.sigma, r.nu, r.mu, r.mdec, r.gs_lhs,
                     r.gs_rhs}) {
      out += ',';
      detail::append_double(out, v);
    }
    out += ',';
    if (std::isfinite(r.f_diag)) detail::append_double(out, r.f_diag);
    out += ',';
    detail::append_double(out, r.cum_w1);
    out += ',';
    detail::append_double(out, r.cum_w2);
    out += "\n";
  }
  return out;
}

}  // namespace skoffar
