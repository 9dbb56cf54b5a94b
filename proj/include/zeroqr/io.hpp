// Serialization: JSON fit reports, CSV tables, dataset files.
// Numbers are written in shortest round-trip form so that identical inputs
// give byte-identical files.
#pragma once

#include "zeroqr/datagen.hpp"
#include "zeroqr/mscra.hpp"
#include "zeroqr/report.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

namespace zeroqr {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, res.ptr);
}

/// One CSV line; cells are already formatted.
inline void write_csv_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

/// features…, response per row; the intercept column, if any, is not written.
inline void write_problem_csv(std::ostream& out, const QuantileProblem& problem, bool header = true) {
  const Index first = problem.intercept_column ? 1 : 0;
  const Index p = problem.features();
  std::vector<std::string> cells;
  if (header) {
    for (Index j = first; j < p; ++j) cells.push_back("x" + std::to_string(j - first + 1));
    cells.push_back("y");
    write_csv_row(out, cells);
  }
  for (Index i = 0; i < problem.samples(); ++i) {
    cells.clear();
    for (Index j = first; j < p; ++j) cells.push_back(format_double(problem.design(i, j)));
    cells.push_back(format_double(problem.response(i)));
    write_csv_row(out, cells);
  }
}

inline Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vector vector_from_json(const Json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

/// Nonzero entries as [index, value] pairs.
inline Json sparse_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i)
    if (v(i) != 0.0) arr.push_back(Json::array({i, v(i)}));
  return arr;
}

inline Vector sparse_from_json(const Json& j, Index size) {
  Vector v = Vector::Zero(size);
  for (const auto& pair : j) v(pair.at(0).get<Index>()) = pair.at(1).get<double>();
  return v;
}

struct StageRecord {
  int k = 0;
  int nnz = 0;
  double err_k = 0.0;
  double rho = 0.0;
  int solver_iters = 0;
  int inner_iters = 0;
  bool solver_converged = false;
  double wall_ms = 0.0;

  bool operator==(const StageRecord&) const = default;
};

struct FitReport {
  double tau = 0.5;
  double lambda = 0.0;
  std::string surrogate;
  double a = 0.0;
  std::string solver;
  Index p = 0;
  bool converged = false;
  std::string stop_reason;
  int nnz = 0;
  double err_k = 0.0;
  Vector beta;
  std::vector<StageRecord> stages;
  double wall_ms = 0.0;
  std::vector<std::string> warnings;

  bool operator==(const FitReport& o) const {
    return tau == o.tau && lambda == o.lambda && surrogate == o.surrogate && a == o.a && solver == o.solver &&
           p == o.p && converged == o.converged && stop_reason == o.stop_reason && nnz == o.nnz &&
           err_k == o.err_k && beta.size() == o.beta.size() && beta == o.beta && stages == o.stages &&
           wall_ms == o.wall_ms && warnings == o.warnings;
  }
};

/// Builds the report; `timing = false` zeroes wall-clock fields so reruns
/// produce identical bytes.
inline FitReport make_fit_report(const MscraResult& res, const QuantileProblem& problem, const MscraConfig& cfg,
                                 bool timing = true) {
  FitReport r;
  r.tau = problem.tau;
  r.lambda = cfg.lambda;
  r.surrogate = to_string(cfg.surrogate.kind());
  r.a = cfg.surrogate.a();
  r.solver = to_string(cfg.solver);
  r.p = problem.features();
  r.converged = res.converged;
  r.stop_reason = res.stop_reason;
  r.nnz = res.final_stage.nnz;
  r.err_k = res.final_stage.err_k;
  r.beta = res.final_stage.beta;
  double total = 0.0;
  for (const auto& st : res.history) {
    StageRecord s;
    s.k = st.k;
    s.nnz = st.nnz;
    s.err_k = st.err_k;
    s.rho = st.rho;
    s.solver_iters = st.solver_report.iterations;
    s.inner_iters = st.solver_report.inner_iterations;
    s.solver_converged = st.solver_report.converged;
    s.wall_ms = timing ? st.wall_ms : 0.0;
    total += s.wall_ms;
    r.stages.push_back(s);
  }
  r.wall_ms = total;
  r.warnings = res.warnings;
  return r;
}

inline Json to_json(const StageRecord& s) {
  return Json{{"k", s.k},
              {"nnz", s.nnz},
              {"err_k", s.err_k},
              {"rho", s.rho},
              {"solver_iters", s.solver_iters},
              {"inner_iters", s.inner_iters},
              {"solver_converged", s.solver_converged},
              {"wall_ms", s.wall_ms}};
}

inline StageRecord stage_from_json(const Json& j) {
  StageRecord s;
  s.k = j.at("k").get<int>();
  s.nnz = j.at("nnz").get<int>();
  s.err_k = j.at("err_k").get<double>();
  s.rho = j.at("rho").get<double>();
  s.solver_iters = j.at("solver_iters").get<int>();
  s.inner_iters = j.at("inner_iters").get<int>();
  s.solver_converged = j.at("solver_converged").get<bool>();
  s.wall_ms = j.at("wall_ms").get<double>();
  return s;
}

inline Json to_json(const FitReport& r) {
  Json stages = Json::array();
  for (const auto& s : r.stages) stages.push_back(to_json(s));
  return Json{{"tau", r.tau},
              {"lambda", r.lambda},
              {"surrogate", r.surrogate},
              {"a", r.a},
              {"solver", r.solver},
              {"p", r.p},
              {"converged", r.converged},
              {"stop_reason", r.stop_reason},
              {"nnz", r.nnz},
              {"err_k", r.err_k},
              {"beta", sparse_to_json(r.beta)},
              {"stages", stages},
              {"wall_ms", r.wall_ms},
              {"warnings", r.warnings}};
}

inline FitReport fit_report_from_json(const Json& j) {
  FitReport r;
  r.tau = j.at("tau").get<double>();
  r.lambda = j.at("lambda").get<double>();
  r.surrogate = j.at("surrogate").get<std::string>();
  r.a = j.at("a").get<double>();
  r.solver = j.at("solver").get<std::string>();
  r.p = j.at("p").get<Index>();
  r.converged = j.at("converged").get<bool>();
  r.stop_reason = j.at("stop_reason").get<std::string>();
  r.nnz = j.at("nnz").get<int>();
  r.err_k = j.at("err_k").get<double>();
  r.beta = sparse_from_json(j.at("beta"), r.p);
  for (const auto& s : j.at("stages")) r.stages.push_back(stage_from_json(s));
  r.wall_ms = j.at("wall_ms").get<double>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

inline Json to_json(const SolverReport& r) {
  return Json{{"solver", r.solver},
              {"converged", r.converged},
              {"iterations", r.iterations},
              {"inner_iterations", r.inner_iterations},
              {"objective", r.objective},
              {"kkt_residual", r.kkt_residual},
              {"primal_objective", r.primal_objective},
              {"dual_objective", r.dual_objective},
              {"eps_pinf", r.eps_pinf},
              {"eps_dinf", r.eps_dinf},
              {"eps_gap", r.eps_gap},
              {"line_search_failures", r.line_search_failures},
              {"rejected_steps", r.rejected_steps},
              {"threads", r.threads},
              {"wall_ms", r.wall_ms},
              {"objective_trace", r.objective_trace},
              {"residual_trace", r.residual_trace},
              {"warnings", r.warnings}};
}

inline SolverReport solver_report_from_json(const Json& j) {
  SolverReport r;
  r.solver = j.at("solver").get<std::string>();
  r.converged = j.at("converged").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  r.inner_iterations = j.at("inner_iterations").get<int>();
  r.objective = j.at("objective").get<double>();
  r.kkt_residual = j.at("kkt_residual").get<double>();
  r.primal_objective = j.at("primal_objective").get<double>();
  r.dual_objective = j.at("dual_objective").get<double>();
  r.eps_pinf = j.at("eps_pinf").get<double>();
  r.eps_dinf = j.at("eps_dinf").get<double>();
  r.eps_gap = j.at("eps_gap").get<double>();
  r.line_search_failures = j.at("line_search_failures").get<int>();
  r.rejected_steps = j.at("rejected_steps").get<int>();
  r.threads = j.at("threads").get<int>();
  r.wall_ms = j.at("wall_ms").get<double>();
  r.objective_trace = j.at("objective_trace").get<std::vector<double>>();
  r.residual_trace = j.at("residual_trace").get<std::vector<double>>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

/// Sidecar for generated data: ground truth plus the generating spec.
inline Json dataset_sidecar(const SyntheticSpec& spec, const SyntheticDataset& data) {
  Json support = Json::array();
  for (Index j : data.support) support.push_back(j);
  return Json{{"n", spec.n},
              {"p", spec.p},
              {"pattern", to_string(spec.beta_pattern)},
              {"covariance", to_string(spec.covariance)},
              {"noise", to_string(spec.noise)},
              {"snr", spec.snr ? Json(*spec.snr) : Json(nullptr)},
              {"seed", spec.seed},
              {"kappa", data.kappa},
              {"intercept", spec.add_intercept},
              {"beta_true", vector_to_json(data.beta_true)},
              {"support", support}};
}

/// JSON with a trailing newline, two-space indent.
inline void write_json(std::ostream& out, const Json& j) { out << j.dump(2) << '\n'; }

/// Opens `path` for writing, or returns nullptr for "-" / empty (stdout).
inline std::unique_ptr<std::ofstream> open_output(const std::string& path) {
  if (path.empty() || path == "-") return nullptr;
  auto f = std::make_unique<std::ofstream>(path, std::ios::binary);
  if (!*f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

}  // namespace zeroqr
