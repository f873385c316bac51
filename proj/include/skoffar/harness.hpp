#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "skoffar/baselines.hpp"
#include "skoffar/common.hpp"
#include "skoffar/problems.hpp"
#include "skoffar/solver.hpp"
#include "skoffar/trace.hpp"

namespace skoffar {

/// Per-iteration cost of a sketched second-order iteration relative to one
/// full gradient evaluation: w1(tau, n) = tau + n tau^2.
inline double w1(double tau, Index n) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("w1: tau in (0,1]");
  if (n < 1) throw std::invalid_argument("w1: n >= 1");
  return tau + static_cast<double>(n) * tau * tau;
}

/// Same cost relative to one full-dimension second-order iteration:
/// w2(tau, n) = (tau + n tau^2) / (1 + n).
inline double w2(double tau, Index n) {
  return w1(tau, n) / (1.0 + static_cast<double>(n));
}

enum class SolverKind { skoffar1, skoffar2, skoffar2b, adagrad_norm, adam_norm };

inline std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::skoffar1: return "skoffar1";
    case SolverKind::skoffar2: return "skoffar2";
    case SolverKind::skoffar2b: return "skoffar2b";
    case SolverKind::adagrad_norm: return "adagrad_norm";
    case SolverKind::adam_norm: return "adam_norm";
  }
  return "?";
}

inline SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "skoffar1") return SolverKind::skoffar1;
  if (s == "skoffar2") return SolverKind::skoffar2;
  if (s == "skoffar2b") return SolverKind::skoffar2b;
  if (s == "adagrad_norm") return SolverKind::adagrad_norm;
  if (s == "adam_norm") return SolverKind::adam_norm;
  throw std::invalid_argument("unknown solver '" + s + "'");
}

inline bool is_baseline(SolverKind k) {
  return k == SolverKind::adagrad_norm || k == SolverKind::adam_norm;
}

struct ProblemSpec {
  std::string name;
  Index n_hat = 0;
  Index n = 0;  // embedded dimension; n == n_hat means no embedding
};

struct ExperimentConfig {
  std::vector<ProblemSpec> problems;
  std::vector<double> taus = {0.1};
  std::vector<SolverKind> solvers = {SolverKind::skoffar2};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double eps = 1e-3;
  long max_iter = 0;            // 0: the per-run default budget
  bool diagnostics = false;
  bool record_full = false;     // sweeps keep traces light by default
  int workers = 0;              // 0: hardware concurrency (capped at 8)
  std::string out = "results.csv";

  // solver parameter overrides applied to every skoffar cell
  double nu0 = 1.0;
  double vartheta = 1e-3;
  double mu_init = 1e3;
  double xi = 0.05;
  XiRule xi_rule = XiRule::constant;
  SigmaRule sigma_rule = SigmaRule::practical;
  KappaSMode kappa_s_mode = KappaSMode::beta_bound;
  BMode b_mode_2b = BMode::gauss_newton;

  // baseline overrides
  double eta = 1.0;
  double b0 = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.9999;

  void validate() const {
    if (problems.empty()) throw std::invalid_argument("experiment: no problems");
    if (taus.empty()) throw std::invalid_argument("experiment: no taus");
    if (solvers.empty()) throw std::invalid_argument("experiment: no solvers");
    if (seeds.empty()) throw std::invalid_argument("experiment: no seeds");
    for (double t : taus)
      if (!(t > 0.0 && t <= 1.0))
        throw std::invalid_argument("experiment: tau must lie in (0, 1]");
    if (!(eps > 0.0)) throw std::invalid_argument("experiment: eps must be positive");
  }
};

/// One (problem, solver, tau, seed) execution cell.
struct SweepCell {
  ProblemSpec problem;
  SolverKind solver = SolverKind::skoffar2;
  double tau = 1.0;  // ignored by baselines
  std::uint64_t seed = 0;
};

struct CellResult {
  SweepCell cell;
  bool ok = false;
  std::string error;
  RunTrace trace;
};

struct ResultRow {
  std::string problem;
  Index n = 0;
  std::string solver;
  double tau = 1.0;
  bool baseline = false;
  int runs = 0;
  int converged = 0;
  double success_fraction = 0.0;
  double mean_n1 = 0.0;       // over converged runs
  double mean_w1_cost = 0.0;  // mean N1 * w1 over converged runs
  double mean_w2_cost = 0.0;
  double mean_runtime_seconds = 0.0;
  long budget = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<CellResult> cells;  // canonical order (problem, solver, tau, seed)
  long total_f_calls = 0;
  InvariantTally skoffar_tally;   // aggregated over all skoffar cells
};

namespace detail {

inline SolverConfig solver_config_for(const ExperimentConfig& exp,
                                      const SweepCell& cell) {
  SolverConfig cfg;
  cfg.tau = cell.tau;
  cfg.eps = exp.eps;
  cfg.seed = cell.seed;
  cfg.max_iter = exp.max_iter;
  cfg.nu0 = exp.nu0;
  cfg.vartheta = exp.vartheta;
  cfg.mu_init = exp.mu_init;
  cfg.xi = exp.xi;
  cfg.xi_rule = exp.xi_rule;
  cfg.sigma_rule = exp.sigma_rule;
  cfg.kappa_s_mode = exp.kappa_s_mode;
  cfg.diagnostics = exp.diagnostics;
  cfg.record_full = exp.record_full;
  switch (cell.solver) {
    case SolverKind::skoffar1: cfg.p = 1; break;
    case SolverKind::skoffar2: cfg.p = 2; break;
    case SolverKind::skoffar2b:
      cfg.variant = Variant::skoffar_2b;
      cfg.b_mode = exp.b_mode_2b;
      break;
    default: break;
  }
  return cfg;
}

inline BaselineConfig baseline_config_for(const ExperimentConfig& exp,
                                          const SweepCell& cell) {
  BaselineConfig cfg;
  cfg.method = cell.solver == SolverKind::adagrad_norm
                   ? BaselineMethod::adagrad_norm
                   : BaselineMethod::adam_norm;
  cfg.eta = exp.eta;
  cfg.b0 = exp.b0;
  cfg.beta1 = exp.beta1;
  cfg.beta2 = exp.beta2;
  cfg.eps_stop = exp.eps;
  cfg.max_iter = exp.max_iter > 0 ? exp.max_iter : 100000;
  cfg.seed = cell.seed;
  cfg.diagnostics = exp.diagnostics;
  cfg.record_full = exp.record_full;
  return cfg;
}

inline ProblemInstance instantiate(const ProblemSpec& spec) {
  ProblemInstance base = make_problem(spec.name, spec.n_hat);
  if (spec.n == spec.n_hat) return base;
  return embed(base, spec.n).problem;
}

}  // namespace detail

inline CellResult run_cell(const ExperimentConfig& exp, const SweepCell& cell) {
  CellResult res;
  res.cell = cell;
  try {
    const ProblemInstance problem = detail::instantiate(cell.problem);
    if (is_baseline(cell.solver)) {
      res.trace = run_baseline(problem, detail::baseline_config_for(exp, cell));
    } else {
      res.trace = run_skoffar(problem, detail::solver_config_for(exp, cell));
    }
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
  }
  return res;
}

/// Executes every cell of the sweep (concurrently up to the worker limit) and
/// aggregates rows in canonical order.  Individual failures are recorded per
/// cell and never abort the sweep.
inline ExperimentResult run_experiment(const ExperimentConfig& exp) {
  exp.validate();

  // canonical cell list: problems x solvers x taus x seeds (baselines get a
  // single tau slot since their iteration cost does not depend on it)
  std::vector<SweepCell> cells;
  for (const ProblemSpec& p : exp.problems) {
    for (SolverKind solver : exp.solvers) {
      const std::vector<double> taus =
          is_baseline(solver) ? std::vector<double>{1.0} : exp.taus;
      for (double tau : taus)
        for (std::uint64_t seed : exp.seeds)
          cells.push_back(SweepCell{p, solver, tau, seed});
    }
  }

  std::vector<CellResult> results(cells.size());
  unsigned workers = exp.workers > 0
                         ? static_cast<unsigned>(exp.workers)
                         : std::min(8u, std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, static_cast<unsigned>(cells.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      results[i] = run_cell(exp, cells[i]);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentResult out;
  out.cells = std::move(results);

  // group rows by (problem, n, solver, tau) in cell order
  using RowKey = std::tuple<std::string, Index, std::string, double>;
  std::map<RowKey, ResultRow> rows;
  std::vector<RowKey> order;
  for (const CellResult& cr : out.cells) {
    out.total_f_calls += cr.ok ? cr.trace.f_calls : 0;
    const bool baseline = is_baseline(cr.cell.solver);
    if (cr.ok && !baseline) out.skoffar_tally.absorb(cr.trace.tally);
    const auto key =
        std::make_tuple(cr.cell.problem.name, cr.cell.problem.n,
                        to_string(cr.cell.solver), cr.cell.tau);
    auto it = rows.find(key);
    if (it == rows.end()) {
      ResultRow row;
      row.problem = cr.cell.problem.name;
      row.n = cr.cell.problem.n;
      row.solver = to_string(cr.cell.solver);
      row.tau = cr.cell.tau;
      row.baseline = baseline;
      it = rows.emplace(key, row).first;
      order.push_back(key);
    }
    ResultRow& row = it->second;
    ++row.runs;
    if (cr.ok) {
      row.budget = cr.trace.budget;
      row.mean_runtime_seconds += cr.trace.runtime_seconds;
      if (cr.trace.converged()) {
        ++row.converged;
        const double n1 = static_cast<double>(*cr.trace.hitting_time);
        row.mean_n1 += n1;
        row.mean_w1_cost += n1 * cr.trace.w1_per_iter;
        row.mean_w2_cost += n1 * cr.trace.w2_per_iter;
      }
    }
  }
  for (const auto& key : order) {
    ResultRow row = rows[key];
    if (row.converged > 0) {
      row.mean_n1 /= row.converged;
      row.mean_w1_cost /= row.converged;
      row.mean_w2_cost /= row.converged;
    }
    if (row.runs > 0) {
      row.success_fraction = static_cast<double>(row.converged) / row.runs;
      row.mean_runtime_seconds /= row.runs;
    }
    out.rows.push_back(row);
  }
  return out;
}

/// Deterministic CSV rendering of the result table.  Cells whose runs all hit
/// the budget carry the ">BUDGET" marker instead of a cost.  Wall-clock
/// runtimes stay out of the file (they would break byte-identity); they are
/// available on ResultRow for display.
inline std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out =
      "problem,n,solver,tau,runs,converged,success_fraction,mean_n1,"
      "mean_w1_cost,mean_w2_cost\n";
  char buf[64];
  for (const ResultRow& r : rows) {
    out += r.problem + ',' + std::to_string(r.n) + ',' + r.solver + ',';
    if (r.baseline) {
      out += '-';
    } else {
      std::snprintf(buf, sizeof(buf), "%.10g", r.tau);
      out += buf;
    }
    out += ',' + std::to_string(r.runs) + ',' + std::to_string(r.converged);
    std::snprintf(buf, sizeof(buf), ",%.10g", r.success_fraction);
    out += buf;
    if (r.converged > 0) {
      std::snprintf(buf, sizeof(buf), ",%.10g,%.10g,%.10g", r.mean_n1,
                    r.mean_w1_cost, r.mean_w2_cost);
      out += buf;
    } else {
      const std::string flag = ">" + std::to_string(r.budget);
      out += ',' + flag + ',' + flag + ',' + flag;
    }
    out += '\n';
  }
  return out;
}

/// Two-column plot series (cumulative w1 cost, diagnostic f): the j-th point
/// is (j * w1, f(x_j)).  Requires a trace recorded with diagnostics on.
inline std::vector<std::pair<double, double>> emit_trace_plot_data(
    const RunTrace& trace, double tau, Index n) {
  const bool baseline = trace.solver_label == "adagrad_norm" ||
                        trace.solver_label == "adam_norm";
  const double cost = baseline ? 1.0 : w1(tau, n);
  std::vector<std::pair<double, double>> series;
  for (const IterationRecord& r : trace.records) {
    if (!std::isfinite(r.f_diag))
      throw std::runtime_error(
          "emit_trace_plot_data: trace lacks diagnostic objective values");
    series.emplace_back(static_cast<double>(r.k) * cost, r.f_diag);
  }
  if (trace.final_f_diag)
    series.emplace_back(static_cast<double>(trace.iterations) * cost,
                        *trace.final_f_diag);
  if (series.empty())
    throw std::runtime_error("emit_trace_plot_data: no diagnostic data");
  return series;
}

inline std::string plot_data_csv(
    const std::vector<std::pair<double, double>>& series) {
  std::string out = "cum_w1,f\n";
  for (const auto& [c, f] : series) {
    detail::append_double(out, c);
    out += ',';
    detail::append_double(out, f);
    out += '\n';
  }
  return out;
}

/// The stock desk-scale sweep: the five comparison problems at moderate
/// ratios, three seeds, plus first-order baselines on rosenbr.
inline ExperimentConfig default_experiment() {
  ExperimentConfig exp;
  exp.problems = {{"rosenbr", 2, 200},
                  {"arwhead", 10, 1000},
                  {"broyden3d", 10, 1000},
                  {"tridia", 10, 1000},
                  {"dixmaana", 12, 1200}};
  exp.taus = {0.1, 0.05};
  exp.solvers = {SolverKind::skoffar2};
  exp.seeds = {1, 2, 3};
  exp.eps = 1e-3;
  return exp;
}

// --- flat key=value experiment files ----------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) items.push_back(trim(cur));
  return items;
}

}  // namespace detail

/// Parses the flat experiment format.  Keys:
///   problems = name:n_hat:n, ...      (n omitted -> n = n_hat)
///   taus     = 1, 0.1, 0.01
///   solvers  = skoffar2, adagrad_norm, ...
///   seeds    = 1..10  or  1, 2, 3
///   eps, max_iter, diagnostics, workers, out,
///   nu0, vartheta, mu_init, xi, xi_rule, sigma_rule, kappa_s_mode,
///   eta, b0, beta1, beta2
/// Lines starting with '#' are comments.
inline ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig exp;
  exp.problems.clear();
  exp.taus.clear();
  exp.solvers.clear();
  exp.seeds.clear();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value in '" + t + "'");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (key == "problems") {
      for (const std::string& item : detail::split_list(value)) {
        ProblemSpec spec;
        std::istringstream ps(item);
        std::string name, nh, nn;
        std::getline(ps, name, ':');
        std::getline(ps, nh, ':');
        std::getline(ps, nn, ':');
        spec.name = detail::trim(name);
        spec.n_hat = nh.empty() ? default_dimension(spec.name)
                                : static_cast<Index>(std::stol(nh));
        spec.n = nn.empty() ? spec.n_hat : static_cast<Index>(std::stol(nn));
        exp.problems.push_back(spec);
      }
    } else if (key == "taus") {
      for (const std::string& item : detail::split_list(value))
        exp.taus.push_back(std::stod(item));
    } else if (key == "solvers") {
      for (const std::string& item : detail::split_list(value))
        exp.solvers.push_back(solver_kind_from_string(item));
    } else if (key == "seeds") {
      const auto dots = value.find("..");
      if (dots != std::string::npos) {
        const long lo = std::stol(detail::trim(value.substr(0, dots)));
        const long hi = std::stol(detail::trim(value.substr(dots + 2)));
        for (long s = lo; s <= hi; ++s)
          exp.seeds.push_back(static_cast<std::uint64_t>(s));
      } else {
        for (const std::string& item : detail::split_list(value))
          exp.seeds.push_back(std::stoull(item));
      }
    } else if (key == "eps") {
      exp.eps = std::stod(value);
    } else if (key == "max_iter") {
      exp.max_iter = std::stol(value);
    } else if (key == "diagnostics") {
      exp.diagnostics = value == "true" || value == "1" || value == "on";
    } else if (key == "record_full") {
      exp.record_full = value == "true" || value == "1" || value == "on";
    } else if (key == "workers") {
      exp.workers = std::stoi(value);
    } else if (key == "out") {
      exp.out = value;
    } else if (key == "nu0") {
      exp.nu0 = std::stod(value);
    } else if (key == "vartheta") {
      exp.vartheta = std::stod(value);
    } else if (key == "mu_init") {
      exp.mu_init = std::stod(value);
    } else if (key == "xi") {
      exp.xi = std::stod(value);
    } else if (key == "xi_rule") {
      exp.xi_rule = value == "doubling" ? XiRule::doubling : XiRule::constant;
    } else if (key == "sigma_rule") {
      exp.sigma_rule =
          value == "theory" ? SigmaRule::theory : SigmaRule::practical;
    } else if (key == "kappa_s_mode") {
      exp.kappa_s_mode = value == "exact-norm" ? KappaSMode::exact_norm
                                               : KappaSMode::beta_bound;
    } else if (key == "eta") {
      exp.eta = std::stod(value);
    } else if (key == "b0") {
      exp.b0 = std::stod(value);
    } else if (key == "beta1") {
      exp.beta1 = std::stod(value);
    } else if (key == "beta2") {
      exp.beta2 = std::stod(value);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  if (exp.seeds.empty())
    exp.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  return exp;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

}  // namespace skoffar
