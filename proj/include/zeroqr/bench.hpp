// Benchmark harness: λ sweeps, τ sweeps, replicated simulation tables and
// the heteroscedastic identification study. Work items are keyed by index,
// so results do not depend on the number of threads.
#pragma once

#include "zeroqr/admm.hpp"
#include "zeroqr/datagen.hpp"
#include "zeroqr/io.hpp"
#include "zeroqr/mscra.hpp"
#include "zeroqr/pdsn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace zeroqr {

inline int default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
/// exception is rethrown after all workers stop.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(count);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd m;
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

/// λ = max(0.01, γ‖X‖₁/n).
inline double lambda_from_gamma(const QuantileProblem& problem, double gamma) {
  return lambda_grid(problem, gamma, gamma, 1)(0);
}

// ---------------------------------------------------------------- λ sweep

struct LambdaSweepRow {
  double lambda = 0.0;
  std::string solver;
  double objective = 0.0;
  int nnz = 0;
  double wall_ms = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct LambdaSweepOptions {
  std::vector<SolverKind> solvers{SolverKind::Pdsn, SolverKind::Admm};
  PdsnConfig pdsn{};
  AdmmConfig admm{};
  int threads = 1;
  bool timing = true;
};

/// First-stage (plain weighted-l1, w = 0) solves at each λ with each solver.
/// Rows come back sorted by λ, then by solver name.
inline std::vector<LambdaSweepRow> lambda_sweep(const QuantileProblem& problem, const Vector& lambdas,
                                                const LambdaSweepOptions& opt) {
  problem.validate();
  if (opt.solvers.empty()) throw std::invalid_argument("no solvers selected");
  AdmmConfig admm = opt.admm;
  if (admm.xtx_norm <= 0.0) admm.xtx_norm = std::pow(spectral_norm(problem.design), 2);
  const std::size_t ns = opt.solvers.size();
  std::vector<LambdaSweepRow> rows(static_cast<std::size_t>(lambdas.size()) * ns);
  parallel_for(rows.size(), opt.threads, [&](std::size_t idx) {
    const double lam = lambdas(static_cast<Index>(idx / ns));
    const SolverKind kind = opt.solvers[idx % ns];
    auto spec = SubproblemSpec::make(problem, stage_weights(problem, lam, Vector::Zero(problem.features())));
    SolverReport rep;
    Vector beta;
    if (kind == SolverKind::Pdsn) {
      auto [st, r] = ppa_solve(spec, opt.pdsn);
      beta = std::move(st.beta);
      rep = std::move(r);
    } else {
      auto [st, r] = admm_solve(spec, admm);
      beta = std::move(st.beta);
      rep = std::move(r);
    }
    auto& row = rows[idx];
    row.lambda = lam;
    row.solver = to_string(kind);
    row.objective = rep.objective;
    row.nnz = count_nonzeros(beta);
    row.wall_ms = opt.timing ? rep.wall_ms : 0.0;
    row.iterations = rep.iterations;
    row.converged = rep.converged;
  });
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.lambda != b.lambda ? a.lambda < b.lambda : a.solver < b.solver;
  });
  return rows;
}

inline void write_lambda_sweep_csv(std::ostream& out, const std::vector<LambdaSweepRow>& rows) {
  write_csv_row(out, {"lambda", "solver", "objective", "nnz", "wall_ms", "iterations", "converged"});
  for (const auto& r : rows)
    write_csv_row(out, {format_double(r.lambda), r.solver, format_double(r.objective), std::to_string(r.nnz),
                        format_double(r.wall_ms), std::to_string(r.iterations), r.converged ? "1" : "0"});
}

// ---------------------------------------------------------------- τ sweep

/// τ grid from `lo` to `hi` in steps of `step`; both endpoints are exact.
inline std::vector<double> tau_grid(double lo, double hi, double step) {
  if (!(lo > 0.0 && hi < 1.0 && lo <= hi)) throw std::invalid_argument("tau must be in (0,1)");
  if (lo == hi) return {lo};
  if (!(step > 0.0)) throw std::invalid_argument("tau step must be positive");
  const auto count = static_cast<long>(std::llround((hi - lo) / step));
  std::vector<double> out;
  for (long i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
  out.push_back(hi);
  return out;
}

struct TauSweepRow {
  double tau = 0.0;
  MeanSd l2_error;
  MeanSd wall_ms;
  int reps = 0;
};

struct TauSweepOptions {
  SyntheticSpec data{};
  std::vector<double> taus;
  int reps = 10;
  std::optional<double> lambda;  // default 37.5/n
  MscraConfig fit{};
  int threads = 1;
  bool timing = true;
};

inline std::vector<TauSweepRow> tau_sweep(const TauSweepOptions& opt) {
  if (opt.taus.empty()) throw std::invalid_argument("empty tau grid");
  if (opt.reps < 1) throw std::invalid_argument("reps must be >= 1");
  const std::size_t nt = opt.taus.size();
  const auto reps = static_cast<std::size_t>(opt.reps);
  std::vector<double> l2(nt * reps), ms(nt * reps);
  parallel_for(reps, opt.threads, [&](std::size_t r) {
    SyntheticSpec spec = opt.data;
    spec.seed = replication_seed(opt.data.seed, r);
    const auto data = generate(spec);
    QuantileProblem problem = data.problem;
    MscraConfig cfg = opt.fit;
    cfg.lambda = opt.lambda ? *opt.lambda : 37.5 / static_cast<double>(problem.samples());
    for (std::size_t t = 0; t < nt; ++t) {
      problem.tau = opt.taus[t];
      const Stopwatch clock;
      const auto fit = mscra_fit(problem, cfg);
      ms[t * reps + r] = opt.timing ? clock.elapsed_ms() : 0.0;
      l2[t * reps + r] = (fit.final_stage.beta - data.beta_true).norm();
    }
  });
  std::vector<TauSweepRow> rows;
  for (std::size_t t = 0; t < nt; ++t) {
    TauSweepRow row;
    row.tau = opt.taus[t];
    row.reps = opt.reps;
    row.l2_error = mean_sd({l2.begin() + static_cast<long>(t * reps), l2.begin() + static_cast<long>((t + 1) * reps)});
    row.wall_ms = mean_sd({ms.begin() + static_cast<long>(t * reps), ms.begin() + static_cast<long>((t + 1) * reps)});
    rows.push_back(row);
  }
  return rows;
}

inline void write_tau_sweep_csv(std::ostream& out, const std::vector<TauSweepRow>& rows) {
  write_csv_row(out, {"tau", "l2_error", "l2_error_sd", "wall_ms", "wall_ms_sd", "reps"});
  for (const auto& r : rows)
    write_csv_row(out, {format_double(r.tau), format_double(r.l2_error.mean), format_double(r.l2_error.sd),
                        format_double(r.wall_ms.mean), format_double(r.wall_ms.sd), std::to_string(r.reps)});
}

// ---------------------------------------------------------- simulation table

struct BenchRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double l2_error = 0.0;
  int fp = 0;
  int fn = 0;
  int size = 0;
  double wall_ms = 0.0;
  int stages = 0;
  int solver_iters = 0;
  bool converged = false;
};

struct BenchAggregate {
  std::string scenario;
  int reps = 0;
  MeanSd l2_error, fp, fn, size, wall_ms;
};

struct BenchRun {
  std::vector<BenchRecord> records;
  BenchAggregate aggregate;
};

struct BenchOptions {
  SyntheticSpec data{};  // seed is the master seed
  int reps = 10;
  double gamma = 0.116;  // λ = max(0.01, γ‖X‖₁/n)
  MscraConfig fit{};
  int threads = 1;
  bool timing = true;
};

inline std::string scenario_id(const SyntheticSpec& s) {
  return to_string(s.beta_pattern) + "|" + to_string(s.covariance) + "|" + to_string(s.noise) + "|tau=" +
         format_double(s.tau) + "|n=" + std::to_string(s.n) + "|p=" + std::to_string(s.p);
}

inline BenchAggregate aggregate_records(const std::string& scenario, const std::vector<BenchRecord>& recs) {
  BenchAggregate a;
  a.scenario = scenario;
  a.reps = static_cast<int>(recs.size());
  std::vector<double> l2, fp, fn, size, ms;
  for (const auto& r : recs) {
    l2.push_back(r.l2_error);
    fp.push_back(r.fp);
    fn.push_back(r.fn);
    size.push_back(r.size);
    ms.push_back(r.wall_ms);
  }
  a.l2_error = mean_sd(l2);
  a.fp = mean_sd(fp);
  a.fn = mean_sd(fn);
  a.size = mean_sd(size);
  a.wall_ms = mean_sd(ms);
  return a;
}

inline BenchRun bench_table(const BenchOptions& opt) {
  if (opt.reps < 1) throw std::invalid_argument("reps must be >= 1");
  BenchRun run;
  run.records.resize(static_cast<std::size_t>(opt.reps));
  parallel_for(run.records.size(), opt.threads, [&](std::size_t r) {
    SyntheticSpec spec = opt.data;
    spec.seed = replication_seed(opt.data.seed, r);
    const auto data = generate(spec);
    MscraConfig cfg = opt.fit;
    cfg.lambda = lambda_from_gamma(data.problem, opt.gamma);
    const Stopwatch clock;
    const auto fit = mscra_fit(data.problem, cfg);
    const double ms = clock.elapsed_ms();
    const auto m = selection_metrics(fit.final_stage.beta, data);
    auto& rec = run.records[r];
    rec.rep = static_cast<int>(r);
    rec.seed = spec.seed;
    rec.lambda = cfg.lambda;
    rec.l2_error = m.l2_error;
    rec.fp = m.fp;
    rec.fn = m.fn;
    rec.size = m.size;
    rec.wall_ms = opt.timing ? ms : 0.0;
    rec.stages = static_cast<int>(fit.history.size());
    for (const auto& st : fit.history) rec.solver_iters += st.solver_report.iterations;
    rec.converged = fit.converged;
  });
  run.aggregate = aggregate_records(scenario_id(opt.data), run.records);
  return run;
}

inline Json to_json(const BenchRecord& r) {
  return Json{{"type", "replication"}, {"rep", r.rep},       {"seed", r.seed},       {"lambda", r.lambda},
              {"l2_error", r.l2_error}, {"fp", r.fp},         {"fn", r.fn},           {"size", r.size},
              {"wall_ms", r.wall_ms},   {"stages", r.stages}, {"solver_iters", r.solver_iters},
              {"converged", r.converged}};
}

inline BenchRecord bench_record_from_json(const Json& j) {
  BenchRecord r;
  r.rep = j.at("rep").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.lambda = j.at("lambda").get<double>();
  r.l2_error = j.at("l2_error").get<double>();
  r.fp = j.at("fp").get<int>();
  r.fn = j.at("fn").get<int>();
  r.size = j.at("size").get<int>();
  r.wall_ms = j.at("wall_ms").get<double>();
  r.stages = j.at("stages").get<int>();
  r.solver_iters = j.at("solver_iters").get<int>();
  r.converged = j.at("converged").get<bool>();
  return r;
}

inline Json to_json(const MeanSd& m) { return Json{{"mean", m.mean}, {"sd", m.sd}}; }

inline Json to_json(const BenchAggregate& a) {
  return Json{{"type", "aggregate"},       {"scenario", a.scenario}, {"reps", a.reps},
              {"l2_error", to_json(a.l2_error)}, {"fp", to_json(a.fp)},  {"fn", to_json(a.fn)},
              {"size", to_json(a.size)},   {"wall_ms", to_json(a.wall_ms)}};
}

/// One JSON object per line: the replications, then the aggregate.
inline void write_bench_jsonl(std::ostream& out, const BenchRun& run) {
  for (const auto& r : run.records) out << to_json(r).dump() << '\n';
  out << to_json(run.aggregate).dump() << '\n';
}

// ------------------------------------------------- heteroscedastic identification

struct HeteroRow {
  double tau = 0.0;
  int reps = 0;
  MeanSd size;
  double p1 = 0.0;  // share of runs selecting every location covariate
  double p2 = 0.0;  // share that also selects the scale covariate X₁
  MeanSd ae;        // Σ|β̂_i − β*_i| over the location coefficients
};

struct HeteroOptions {
  Index n = 400;
  Index p = 300;
  Covariance covariance{CovarianceKind::Ar, 0.5};
  std::vector<double> taus{0.3, 0.5, 0.7};
  int reps = 20;
  double gamma = 0.1;
  std::uint64_t seed = 1;
  MscraConfig fit{};
  int threads = 1;
};

inline std::vector<HeteroRow> hetero_table(const HeteroOptions& opt) {
  if (opt.reps < 1) throw std::invalid_argument("reps must be >= 1");
  const std::size_t nt = opt.taus.size();
  const auto reps = static_cast<std::size_t>(opt.reps);
  struct Cell {
    int size = 0;
    bool all_location = false;
    bool scale = false;
    double ae = 0.0;
  };
  std::vector<Cell> cells(nt * reps);
  parallel_for(reps, opt.threads, [&](std::size_t r) {
    SyntheticSpec spec;
    spec.n = opt.n;
    spec.p = opt.p;
    spec.beta_pattern = BetaPattern::Hetero;
    spec.covariance = opt.covariance;
    spec.seed = replication_seed(opt.seed, r);
    const auto data = generate(spec);
    QuantileProblem problem = data.problem;
    MscraConfig cfg = opt.fit;
    cfg.lambda = lambda_from_gamma(problem, opt.gamma);
    for (std::size_t t = 0; t < nt; ++t) {
      problem.tau = opt.taus[t];
      const auto fit = mscra_fit(problem, cfg);
      const Vector& b = fit.final_stage.beta;
      const double cut = stage_rules::kNnzRelative * std::max(1.0, b.cwiseAbs().maxCoeff());
      Cell& c = cells[t * reps + r];
      c.size = count_nonzeros(b);
      c.all_location = true;
      for (Index j : kHeteroMeanColumns) {
        c.all_location = c.all_location && std::abs(b(j)) > cut;
        c.ae += std::abs(b(j) - data.beta_true(j));
      }
      c.scale = c.all_location && std::abs(b(kHeteroScaleColumn)) > cut;
    }
  });
  std::vector<HeteroRow> rows;
  for (std::size_t t = 0; t < nt; ++t) {
    HeteroRow row;
    row.tau = opt.taus[t];
    row.reps = opt.reps;
    std::vector<double> size, ae;
    int p1 = 0, p2 = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const Cell& c = cells[t * reps + r];
      size.push_back(c.size);
      ae.push_back(c.ae);
      p1 += c.all_location;
      p2 += c.scale;
    }
    row.size = mean_sd(size);
    row.ae = mean_sd(ae);
    row.p1 = static_cast<double>(p1) / opt.reps;
    row.p2 = static_cast<double>(p2) / opt.reps;
    rows.push_back(row);
  }
  return rows;
}

inline Json to_json(const HeteroRow& r) {
  return Json{{"type", "hetero"}, {"tau", r.tau}, {"reps", r.reps}, {"size", to_json(r.size)},
              {"p1", r.p1},       {"p2", r.p2},   {"ae", to_json(r.ae)}};
}

}  // namespace zeroqr
