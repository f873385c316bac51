// Command-line front end: single runs, config-driven sweeps, side-by-side
// comparisons, the acceptance suite and the sketch-module estimators.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "skoffar/acceptance.hpp"
#include "skoffar/baselines.hpp"
#include "skoffar/harness.hpp"
#include "skoffar/problems.hpp"
#include "skoffar/solver.hpp"

using namespace skoffar;

namespace {

struct RunArgs {
  std::string problem = "rosenbr";
  long nhat = 0;  // 0: catalogue default
  long n = 0;     // 0: no embedding
  double tau = 0.1;
  int p = 2;
  std::string variant = "skoffar2";
  std::uint64_t seed = 1;
  double eps = 1e-3;
  long max_iter = 0;
  bool diagnostics = false;
  bool identity_hook = false;
  double nu0 = 1.0;
  double vartheta = 1e-3;
  double mu_init = 1e3;
  double xi = 0.05;
  std::string xi_rule = "constant";
  std::string sigma_rule = "practical";
  std::string kappa_s = "beta-bound";
  std::string out;
};

ProblemInstance build_problem(const RunArgs& a) {
  const Index nhat = a.nhat > 0 ? a.nhat : default_dimension(a.problem);
  ProblemInstance base = make_problem(a.problem, nhat);
  if (a.n > 0 && a.n != nhat) return embed(base, a.n).problem;
  return base;
}

void print_summary(const RunTrace& t) {
  std::printf("problem=%s n=%ld solver=%s tau=%g seed=%llu\n",
              t.problem.c_str(), static_cast<long>(t.n),
              t.solver_label.c_str(), t.tau,
              static_cast<unsigned long long>(t.seed));
  if (t.hitting_time)
    std::printf("hitting_time N1 = %ld\n", *t.hitting_time);
  else
    std::printf("no convergence within budget %ld (marker >%ld)\n", t.budget,
                t.budget);
  std::printf("final |g| = %.6e, iterations = %ld, runtime = %.2fs\n",
              t.final_gnorm, t.iterations, t.runtime_seconds);
  std::printf("w1 cost = %.6g, w2 cost = %.6g, f-oracle calls = %ld\n",
              static_cast<double>(t.iterations) * t.w1_per_iter,
              static_cast<double>(t.iterations) * t.w2_per_iter, t.f_calls);
  if (!t.tally.clean())
    std::printf("WARNING: invariant violations recorded in this trace\n");
}

int cmd_run(const RunArgs& a) {
  const ProblemInstance problem = build_problem(a);
  RunTrace t;
  if (a.variant == "adagrad_norm" || a.variant == "adam_norm") {
    BaselineConfig cfg;
    cfg.method = a.variant == "adagrad_norm" ? BaselineMethod::adagrad_norm
                                             : BaselineMethod::adam_norm;
    cfg.eps_stop = a.eps;
    if (a.max_iter > 0) cfg.max_iter = a.max_iter;
    cfg.seed = a.seed;
    cfg.diagnostics = a.diagnostics;
    t = run_baseline(problem, cfg);
  } else {
    SolverConfig cfg;
    if (a.variant == "skoffar2b") {
      cfg.variant = Variant::skoffar_2b;
      cfg.b_mode = problem.least_squares ? BMode::gauss_newton : BMode::zero;
    } else {
      cfg.p = a.variant == "skoffar1" ? 1 : a.p;
    }
    cfg.tau = a.tau;
    cfg.eps = a.eps;
    cfg.seed = a.seed;
    cfg.max_iter = a.max_iter;
    cfg.diagnostics = a.diagnostics;
    cfg.identity_sketch_hook = a.identity_hook;
    cfg.nu0 = a.nu0;
    cfg.vartheta = a.vartheta;
    cfg.mu_init = a.mu_init;
    cfg.xi = a.xi;
    cfg.xi_rule =
        a.xi_rule == "doubling" ? XiRule::doubling : XiRule::constant;
    cfg.sigma_rule =
        a.sigma_rule == "theory" ? SigmaRule::theory : SigmaRule::practical;
    cfg.kappa_s_mode = a.kappa_s == "exact-norm" ? KappaSMode::exact_norm
                                                 : KappaSMode::beta_bound;
    t = run_skoffar(problem, cfg);
  }
  print_summary(t);
  if (!a.out.empty()) {
    write_file(a.out, trace_csv(t));
    std::printf("trace written to %s\n", a.out.c_str());
    if (a.diagnostics) {
      const auto series = emit_trace_plot_data(t, t.tau, t.n);
      write_file(a.out + ".plot.csv", plot_data_csv(series));
      std::printf("plot data written to %s.plot.csv\n", a.out.c_str());
    }
  }
  return 0;
}

int cmd_compare(const RunArgs& a, int nseeds) {
  const ProblemInstance problem = build_problem(a);
  ExperimentConfig exp;
  exp.problems = {{problem.name(), a.nhat > 0
                                       ? static_cast<Index>(a.nhat)
                                       : default_dimension(a.problem),
                   a.n > 0 ? static_cast<Index>(a.n)
                           : (a.nhat > 0 ? static_cast<Index>(a.nhat)
                                         : default_dimension(a.problem))}};
  exp.taus = {a.tau};
  exp.solvers = {SolverKind::skoffar1, SolverKind::skoffar2,
                 SolverKind::adagrad_norm, SolverKind::adam_norm};
  if (problem.least_squares)
    exp.solvers.insert(exp.solvers.begin() + 2, SolverKind::skoffar2b);
  exp.seeds.clear();
  for (int s = 1; s <= nseeds; ++s)
    exp.seeds.push_back(static_cast<std::uint64_t>(s));
  exp.eps = a.eps;
  exp.max_iter = a.max_iter;
  exp.nu0 = a.nu0;
  exp.xi = a.xi;
  const ExperimentResult res = run_experiment(exp);
  std::printf("%-12s %-6s %-10s %-10s %-12s %-12s\n", "solver", "tau",
              "success", "mean N1", "w1 cost", "w2 cost");
  for (const ResultRow& row : res.rows) {
    char tau[16];
    if (row.baseline)
      std::snprintf(tau, sizeof(tau), "-");
    else
      std::snprintf(tau, sizeof(tau), "%g", row.tau);
    if (row.converged > 0)
      std::printf("%-12s %-6s %3d/%-6d %-10.1f %-12.5g %-12.5g\n",
                  row.solver.c_str(), tau, row.converged, row.runs,
                  row.mean_n1, row.mean_w1_cost, row.mean_w2_cost);
    else
      std::printf("%-12s %-6s %3d/%-6d %s\n", row.solver.c_str(), tau,
                  row.converged, row.runs,
                  (">" + std::to_string(row.budget)).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skoffar: random-subspace objective-function-free adaptive "
               "regularisation solvers and benchmark harness"};
  app.require_subcommand(1);

  RunArgs ra;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--problem", ra.problem, "problem name from the catalogue");
    cmd->add_option("--nhat", ra.nhat, "base dimension (0: catalogue default)");
    cmd->add_option("--n", ra.n, "embedded dimension (0: no embedding)");
    cmd->add_option("--tau", ra.tau, "sketch ratio l/n in (0,1]");
    cmd->add_option("--eps", ra.eps, "gradient accuracy");
    cmd->add_option("--seed", ra.seed, "RNG seed");
    cmd->add_option("--max-iter", ra.max_iter,
                    "iteration budget (0: 1e5/w2 rule)");
    cmd->add_option("--nu0", ra.nu0, "initial regularisation nu_0");
    cmd->add_option("--xi", ra.xi, "sigma rule scaling xi");
  };

  CLI::App* run = app.add_subcommand("run", "single run, trace CSV output");
  add_common(run);
  run->add_option("--p", ra.p, "model degree (1 or 2)");
  run->add_option("--variant", ra.variant,
                  "skoffar1|skoffar2|skoffar2b|adagrad_norm|adam_norm");
  run->add_flag("--diagnostics", ra.diagnostics,
                "record the (counted) objective value per iteration");
  run->add_flag("--identity-hook", ra.identity_hook,
                "replace the sketch by the identity (full space)");
  run->add_option("--vartheta", ra.vartheta, "sigma lower-bound factor");
  run->add_option("--mu-init", ra.mu_init, "mu_{-1}");
  run->add_option("--xi-rule", ra.xi_rule, "constant|doubling");
  run->add_option("--sigma-rule", ra.sigma_rule, "practical|theory");
  run->add_option("--kappa-s", ra.kappa_s, "beta-bound|exact-norm");
  run->add_option("--out", ra.out, "trace CSV path");

  std::string sweep_config;
  std::string sweep_out;
  std::string traces_dir;
  CLI::App* sweep = app.add_subcommand("sweep", "config file -> results CSV");
  sweep->add_option("config", sweep_config, "experiment config file")
      ->required();
  sweep->add_option("--out", sweep_out, "override the config's output path");
  sweep->add_option("--traces-dir", traces_dir,
                    "also write one trace CSV per cell into this directory");

  int compare_seeds = 5;
  CLI::App* compare =
      app.add_subcommand("compare", "solvers side by side on one problem");
  add_common(compare);
  compare->add_option("--seeds", compare_seeds, "number of seeds");

  std::string check_out;
  CLI::App* check = app.add_subcommand("check", "run the acceptance suite");
  check->add_option("--out", check_out, "write a JSON report");

  Index pe_l = 20, pe_n = 200, pe_rank = 1;
  double pe_alpha = 0.5;
  int pe_trials = 500;
  std::uint64_t pe_seed = 1;
  CLI::App* probe = app.add_subcommand(
      "probe-embedding", "Monte-Carlo estimators for the sketch module");
  probe->add_option("--l", pe_l, "sketch rows");
  probe->add_option("--n", pe_n, "ambient dimension");
  probe->add_option("--rank", pe_rank, "rank of the target range M");
  probe->add_option("--alpha", pe_alpha, "preservation parameter alpha_S");
  probe->add_option("--trials", pe_trials, "Monte-Carlo trials");
  probe->add_option("--seed", pe_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(ra);
    if (sweep->parsed()) {
      ExperimentConfig exp = load_experiment_config(sweep_config);
      if (!sweep_out.empty()) exp.out = sweep_out;
      const ExperimentResult res = run_experiment(exp);
      write_file(exp.out, results_csv(res.rows));
      std::printf("results written to %s (%zu rows, %zu cells)\n",
                  exp.out.c_str(), res.rows.size(), res.cells.size());
      int failures = 0;
      for (const auto& cell : res.cells) {
        if (!cell.ok) {
          ++failures;
          std::fprintf(stderr, "cell %s/%s tau=%g seed=%llu failed: %s\n",
                       cell.cell.problem.name.c_str(),
                       to_string(cell.cell.solver).c_str(), cell.cell.tau,
                       static_cast<unsigned long long>(cell.cell.seed),
                       cell.error.c_str());
        } else if (!traces_dir.empty()) {
          char name[256];
          std::snprintf(name, sizeof(name), "%s/%s_%s_tau%g_seed%llu.csv",
                        traces_dir.c_str(), cell.cell.problem.name.c_str(),
                        to_string(cell.cell.solver).c_str(), cell.cell.tau,
                        static_cast<unsigned long long>(cell.cell.seed));
          write_file(name, trace_csv(cell.trace));
        }
      }
      if (failures > 0)
        std::fprintf(stderr, "%d cells failed (recorded in place)\n",
                     failures);
      std::printf("total f-oracle calls on solver paths: %ld\n",
                  res.total_f_calls);
      return 0;
    }
    if (compare->parsed()) return cmd_compare(ra, compare_seeds);
    if (check->parsed()) {
      const auto results = acceptance::run_all(std::cout);
      if (!check_out.empty()) {
        nlohmann::json rep = nlohmann::json::array();
        for (const auto& r : results)
          rep.push_back({{"id", r.id},
                         {"name", r.name},
                         {"passed", r.passed},
                         {"detail", r.detail},
                         {"seconds", r.seconds}});
        write_file(check_out, rep.dump(2) + "\n");
        std::printf("report written to %s\n", check_out.c_str());
      }
      return acceptance::all_passed(results) ? 0 : 2;
    }
    if (probe->parsed()) {
      auto rng = make_rng(pe_seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      Matrix M(pe_n, pe_rank);
      for (Index i = 0; i < pe_n; ++i)
        for (Index j = 0; j < pe_rank; ++j) M(i, j) = normal(rng);
      const auto est = estimate_true_probability(pe_l, pe_n, M, pe_alpha,
                                                 pe_trials, pe_seed);
      std::printf("P[margin >= %.3g] ~ %.4f  (95%% Wilson [%.4f, %.4f], "
                  "%d/%d successes)\n",
                  pe_alpha, est.estimate, est.wilson_low, est.wilson_high,
                  est.successes, est.trials);
      std::printf("rank(M) = %ld, rank bound l(1-alpha) = %.2f, "
                  "precondition %s\n",
                  static_cast<long>(est.rank_m), est.rank_bound,
                  est.rank_precondition ? "holds" : "violated");
      int inside = 0;
      for (int t = 0; t < pe_trials; ++t) {
        auto r2 = make_rng(derive_seed(pe_seed + 1, t));
        if (operator_norm(sample_sketch(pe_l, pe_n, r2)) <=
            kappa_bound(pe_l, pe_n))
          ++inside;
      }
      std::printf("P[||S|| <= 1.5+sqrt(n/l) = %.4f] ~ %.4f\n",
                  kappa_bound(pe_l, pe_n),
                  static_cast<double>(inside) / pe_trials);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
