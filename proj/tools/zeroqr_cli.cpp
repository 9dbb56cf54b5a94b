// zeroqr: sparse quantile regression with zero-norm surrogates.
//
// Exit codes: 0 success, 1 input error, 2 solver did not converge.

#include "zeroqr/bench.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace zeroqr;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNoConvergence = 2;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  double tau = 0.5;
  std::optional<double> lambda;
  std::optional<double> nu;
  std::optional<double> gamma;
  std::string surrogate = "scad";
  std::optional<double> a;
  std::string solver = "pdsn";
  std::uint64_t seed = 1;
  int threads = default_threads();
  std::string out = "-";
  bool no_timing = false;
  int max_stages = 10;
};

struct DataOpts {
  std::string pattern = "fixed16";
  Index n = 200;
  Index p = 1000;
  std::string covariance = "identity";
  std::string noise = "normal:2";
  std::optional<double> snr;
  bool intercept = false;
};

void add_tau(CLI::App* cmd, Common& c) {
  cmd->add_option("--tau", c.tau, "quantile level in (0,1)")->capture_default_str();
}

void add_penalty(CLI::App* cmd, Common& c) {
  auto* lam = cmd->add_option("--lambda", c.lambda, "penalty weight λ");
  auto* nu = cmd->add_option("--nu", c.nu, "ν = 1/λ");
  auto* gam = cmd->add_option("--gamma", c.gamma, "λ = max(0.01, γ‖X‖₁/n)");
  lam->excludes(nu)->excludes(gam);
  nu->excludes(gam);
}

void add_surrogate(CLI::App* cmd, Common& c) {
  cmd->add_option("--surrogate", c.surrogate, "capped-l1 | scad | mcp")
      ->check(CLI::IsMember({"capped-l1", "scad", "mcp"}))
      ->capture_default_str();
  cmd->add_option("--a", c.a, "shape parameter for scad (a > 1) or mcp (a > 2), default 3.7");
  cmd->add_option("--max-stages", c.max_stages, "stage cap")->capture_default_str();
}

void add_run(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "master seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "output path, '-' for stdout")->capture_default_str();
  cmd->add_flag("--no-timing", c.no_timing, "write 0 for wall-clock fields (byte-reproducible output)");
}

void add_data(CLI::App* cmd, DataOpts& d) {
  cmd->add_option("--pattern", d.pattern, "alternating-decay | fixed16 | random-support | hetero")
      ->capture_default_str();
  cmd->add_option("--n", d.n, "samples")->capture_default_str();
  cmd->add_option("--p", d.p, "features")->capture_default_str();
  cmd->add_option("--covariance", d.covariance, "identity | ar:<r> | cs:<alpha>")->capture_default_str();
  cmd->add_option("--noise", d.noise, "normal:<var> | mn1 | mn2 | laplace | t4 | cauchy")->capture_default_str();
  cmd->add_option("--snr", d.snr, "calibrate the noise scale to this signal-to-noise ratio");
  cmd->add_flag("--intercept", d.intercept, "prepend an unpenalized all-ones column");
}

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("tau must be in (0,1)");
}

SyntheticSpec make_spec(const DataOpts& d, const Common& c) {
  SyntheticSpec s;
  s.n = d.n;
  s.p = d.p;
  s.beta_pattern = parse_pattern(d.pattern);
  s.covariance = parse_covariance(d.covariance);
  s.noise = parse_noise(d.noise);
  s.snr = d.snr;
  s.seed = c.seed;
  s.tau = c.tau;
  s.add_intercept = d.intercept;
  s.validate();
  return s;
}

SurrogateFamily make_surrogate(const Common& c) {
  const auto kind = parse_surrogate(c.surrogate);
  if (kind == SurrogateKind::CappedL1) {
    if (c.a) throw InputError("--a does not apply to capped-l1");
    return SurrogateFamily::capped_l1();
  }
  return SurrogateFamily(kind, c.a.value_or(3.7));
}

MscraConfig make_fit_config(const Common& c, const QuantileProblem* problem, double default_gamma) {
  MscraConfig cfg;
  if (c.lambda) {
    cfg.lambda = *c.lambda;
  } else if (c.nu) {
    if (!(*c.nu > 0.0)) throw InputError("nu must be positive");
    cfg.lambda = 1.0 / *c.nu;
  } else if (problem) {
    cfg.lambda = lambda_from_gamma(*problem, c.gamma.value_or(default_gamma));
  }
  cfg.surrogate = make_surrogate(c);
  cfg.solver = parse_solver(c.solver);
  cfg.max_stages = c.max_stages;
  cfg.validate();
  return cfg;
}

QuantileProblem read_problem(const std::string& path, const std::string& header, bool intercept, double tau) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  bool has_header = header == "yes";
  if (header == "auto") {
    std::string first;
    std::getline(in, first);
    const auto fields = detail::split_csv(first);
    double v = 0.0;
    const auto tok = fields.empty() ? std::string() : detail::trim(fields.front());
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    has_header = res.ec != std::errc{} || res.ptr != tok.data() + tok.size();
    in.clear();
    in.seekg(0);
  }
  return parse_csv(in, has_header, intercept, tau);
}

template <class Fn>
void with_output(const std::string& path, Fn&& fn) {
  auto file = open_output(path);
  std::ostream& out = file ? static_cast<std::ostream&>(*file) : std::cout;
  fn(out);
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

// ------------------------------------------------------------------ fit

int cmd_fit(const Common& c, const DataOpts& d, const std::string& csv, const std::string& header) {
  check_tau(c.tau);
  QuantileProblem problem;
  if (!csv.empty()) {
    problem = read_problem(csv, header, d.intercept, c.tau);
  } else {
    problem = generate(make_spec(d, c)).problem;
  }
  const MscraConfig cfg = make_fit_config(c, &problem, 0.116);
  MscraResult res;
  try {
    res = mscra_fit(problem, cfg);
  } catch (const MscraError& e) {
    std::cerr << "error: " << e.what() << " (after " << e.history.size() << " stages)\n";
    return kExitNoConvergence;
  }
  const FitReport report = make_fit_report(res, problem, cfg, !c.no_timing);
  with_output(c.out, [&](std::ostream& out) { write_json(out, to_json(report)); });
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  const bool solver_ok = res.final_stage.solver_report.converged;
  if (!res.converged || !solver_ok) {
    if (!res.converged) std::cerr << "not converged: " << res.stop_reason << '\n';
    else
      std::cerr << "not converged: final " << to_string(cfg.solver) << " solve stopped at its iteration limit ("
                << res.final_stage.solver_report.iterations << " iterations)\n";
    return kExitNoConvergence;
  }
  return kExitOk;
}

// -------------------------------------------------------------- datagen

int cmd_datagen(const Common& c, const DataOpts& d, std::string sidecar) {
  check_tau(c.tau);
  const SyntheticSpec spec = make_spec(d, c);
  const auto data = generate(spec);
  with_output(c.out, [&](std::ostream& out) { write_problem_csv(out, data.problem); });
  if (sidecar.empty() && c.out != "-") sidecar = c.out + ".json";
  if (!sidecar.empty()) with_output(sidecar, [&](std::ostream& out) { write_json(out, dataset_sidecar(spec, data)); });
  return kExitOk;
}

// --------------------------------------------------------- lambda-sweep

struct SweepOpts {
  double gamma_min = 0.05;
  double gamma_max = 0.2;
  int count = 50;
  std::vector<std::string> solvers{"pdsn", "admm"};
};

int cmd_lambda_sweep(Common c, const DataOpts& d, const std::string& csv, const std::string& header,
                     const SweepOpts& s) {
  check_tau(c.tau);
  QuantileProblem problem =
      csv.empty() ? generate(make_spec(d, c)).problem : read_problem(csv, header, d.intercept, c.tau);
  Vector lambdas;
  if (c.lambda || c.nu) {
    lambdas = Vector::Constant(1, c.lambda ? *c.lambda : 1.0 / *c.nu);
    if (!(lambdas(0) > 0.0) || !std::isfinite(lambdas(0))) throw InputError("lambda must be positive");
  } else {
    if (!(s.gamma_min > 0.0 && s.gamma_min <= s.gamma_max) || s.count < 1)
      throw InputError("need 0 < gamma-min <= gamma-max and count >= 1");
    lambdas = lambda_grid(problem, s.gamma_min, s.gamma_max, s.count);
  }
  LambdaSweepOptions opt;
  opt.solvers.clear();
  for (const auto& name : s.solvers) opt.solvers.push_back(parse_solver(name));
  opt.threads = c.threads;
  opt.timing = !c.no_timing;
  const auto rows = lambda_sweep(problem, lambdas, opt);
  with_output(c.out, [&](std::ostream& out) { write_lambda_sweep_csv(out, rows); });
  for (const auto& r : rows)
    if (!r.converged) {
      std::cerr << "not converged: " << r.solver << " at lambda " << format_double(r.lambda) << '\n';
      return kExitNoConvergence;
    }
  return kExitOk;
}

// ------------------------------------------------------------ tau-sweep

struct TauOpts {
  double tau_min = 0.05;
  double tau_max = 0.95;
  double tau_step = 0.05;
  int reps = 10;
};

int cmd_tau_sweep(const Common& c, const DataOpts& d, const TauOpts& t, bool single_tau) {
  TauSweepOptions opt;
  if (single_tau) {
    check_tau(c.tau);
    opt.taus = {c.tau};
  } else {
    check_tau(t.tau_min);
    check_tau(t.tau_max);
    opt.taus = tau_grid(t.tau_min, t.tau_max, t.tau_step);
  }
  opt.data = make_spec(d, c);
  opt.reps = t.reps;
  if (c.lambda) opt.lambda = *c.lambda;
  if (c.nu) opt.lambda = 1.0 / *c.nu;
  opt.fit = make_fit_config(c, nullptr, 0.0);
  opt.threads = c.threads;
  opt.timing = !c.no_timing;
  const auto rows = tau_sweep(opt);
  with_output(c.out, [&](std::ostream& out) { write_tau_sweep_csv(out, rows); });
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchOpts {
  std::string table = "simulation";
  int reps = 10;
  std::vector<double> taus{0.3, 0.5, 0.7};
};

int cmd_bench(const Common& c, const DataOpts& d, const BenchOpts& b) {
  if (b.reps < 1) throw InputError("reps must be >= 1");
  MscraConfig fit = make_fit_config(c, nullptr, 0.0);
  if (c.lambda || c.nu) throw InputError("bench sets lambda per replication; use --gamma");
  if (b.table == "hetero") {
    HeteroOptions opt;
    opt.n = d.n;
    opt.p = d.p;
    opt.covariance = parse_covariance(d.covariance);
    for (double tau : b.taus) check_tau(tau);
    opt.taus = b.taus;
    opt.reps = b.reps;
    opt.gamma = c.gamma.value_or(0.1);
    opt.seed = c.seed;
    opt.fit = fit;
    opt.threads = c.threads;
    const auto rows = hetero_table(opt);
    with_output(c.out, [&](std::ostream& out) {
      for (const auto& r : rows) out << to_json(r).dump() << '\n';
    });
    return kExitOk;
  }
  check_tau(c.tau);
  BenchOptions opt;
  opt.data = make_spec(d, c);
  opt.reps = b.reps;
  opt.gamma = c.gamma.value_or(0.116);
  opt.fit = fit;
  opt.threads = c.threads;
  opt.timing = !c.no_timing;
  const auto run = bench_table(opt);
  with_output(c.out, [&](std::ostream& out) { write_bench_jsonl(out, run); });
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse quantile regression with zero-norm surrogate penalties"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "zeroqr 0.1.0");

  Common c;
  DataOpts d;
  std::string csv, header = "auto", sidecar;
  SweepOpts sweep;
  TauOpts tau_opts;
  BenchOpts bench;

  auto* fit = app.add_subcommand("fit", "fit one model; JSON report");
  fit->add_option("data", csv, "CSV file: feature columns then the response (omit to generate data)");
  fit->add_option("--header", header, "auto | yes | no")->check(CLI::IsMember({"auto", "yes", "no"}));
  add_tau(fit, c);
  add_penalty(fit, c);
  add_surrogate(fit, c);
  fit->add_option("--solver", c.solver, "pdsn | admm")->check(CLI::IsMember({"pdsn", "admm"}))->capture_default_str();
  add_run(fit, c);
  add_data(fit, d);

  auto* gen = app.add_subcommand("datagen", "generate a synthetic data set as CSV plus a JSON sidecar");
  add_tau(gen, c);
  add_run(gen, c);
  add_data(gen, d);
  gen->add_option("--sidecar", sidecar, "ground-truth JSON path (default <out>.json)");

  auto* ls = app.add_subcommand("lambda-sweep", "first-stage solves over a λ grid, one CSV row per (λ, solver)");
  ls->add_option("data", csv, "CSV file (omit to generate data)");
  ls->add_option("--header", header, "auto | yes | no")->check(CLI::IsMember({"auto", "yes", "no"}));
  add_tau(ls, c);
  ls->add_option("--lambda", c.lambda, "single λ instead of a grid");
  ls->add_option("--nu", c.nu, "single ν = 1/λ instead of a grid");
  ls->add_option("--gamma-min", sweep.gamma_min)->capture_default_str();
  ls->add_option("--gamma-max", sweep.gamma_max)->capture_default_str();
  ls->add_option("--count", sweep.count, "grid size")->capture_default_str();
  ls->add_option("--solver", sweep.solvers, "pdsn and/or admm")
      ->check(CLI::IsMember({"pdsn", "admm"}))
      ->capture_default_str();
  add_run(ls, c);
  add_data(ls, d);

  auto* ts = app.add_subcommand("tau-sweep", "l2 error against τ, averaged over seeds");
  auto* single = ts->add_option("--tau", c.tau, "single τ instead of a grid");
  ts->add_option("--tau-min", tau_opts.tau_min)->capture_default_str()->excludes(single);
  ts->add_option("--tau-max", tau_opts.tau_max)->capture_default_str()->excludes(single);
  ts->add_option("--tau-step", tau_opts.tau_step)->capture_default_str()->excludes(single);
  ts->add_option("--reps", tau_opts.reps)->capture_default_str();
  ts->add_option("--lambda", c.lambda, "penalty weight (default 37.5/n)");
  ts->add_option("--nu", c.nu, "ν = 1/λ")->excludes("--lambda");
  add_surrogate(ts, c);
  ts->add_option("--solver", c.solver, "pdsn | admm")->check(CLI::IsMember({"pdsn", "admm"}))->capture_default_str();
  add_run(ts, c);
  add_data(ts, d);

  auto* bt = app.add_subcommand("bench", "replicated simulation table (JSON lines)");
  bt->add_option("--table", bench.table, "simulation | hetero")
      ->check(CLI::IsMember({"simulation", "hetero"}))
      ->capture_default_str();
  bt->add_option("--reps", bench.reps)->capture_default_str();
  add_tau(bt, c);
  bt->add_option("--taus", bench.taus, "quantile levels for the hetero table")->capture_default_str();
  bt->add_option("--gamma", c.gamma, "λ = max(0.01, γ‖X‖₁/n); default 0.116 (0.1 for hetero)");
  bt->add_option("--lambda", c.lambda, "not accepted; λ depends on each replication's design");
  bt->add_option("--nu", c.nu, "not accepted");
  add_surrogate(bt, c);
  bt->add_option("--solver", c.solver, "pdsn | admm")->check(CLI::IsMember({"pdsn", "admm"}))->capture_default_str();
  add_run(bt, c);
  add_data(bt, d);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  // subcommand-specific data defaults unless given explicitly
  if (ts->parsed()) {
    if (!ts->count("--pattern")) d.pattern = "random-support";
    if (!ts->count("--covariance")) d.covariance = "cs:0.6";
    if (!ts->count("--noise")) d.noise = "laplace";
    if (!ts->count("--n") && d.pattern == "random-support") d.n = random_support_samples(d.p);
  }
  if (bt->parsed() && bench.table == "hetero") {
    if (!bt->count("--n")) d.n = 400;
    if (!bt->count("--p")) d.p = 300;
    if (!bt->count("--covariance")) d.covariance = "ar:0.5";
  }

  try {
    if (fit->parsed()) return cmd_fit(c, d, csv, header);
    if (gen->parsed()) return cmd_datagen(c, d, sidecar);
    if (ls->parsed()) return cmd_lambda_sweep(c, d, csv, header, sweep);
    if (ts->parsed()) return cmd_tau_sweep(c, d, tau_opts, ts->count("--tau") > 0);
    if (bt->parsed()) return cmd_bench(c, d, bench);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const MscraError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNoConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
