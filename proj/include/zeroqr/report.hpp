#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace zeroqr {

/// Diagnostics of one subproblem solve.
struct SolverReport {
  std::string solver;
  bool converged = false;
  int iterations = 0;          // outer iterations (PPA steps or ADMM sweeps)
  int inner_iterations = 0;    // semismooth Newton steps, summed over PPA steps
  double objective = 0.0;      // subproblem objective at the returned beta
  double kkt_residual = 0.0;   // PDSN: Err_PPA; ADMM: max(pinf, dinf, gap)
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double eps_pinf = 0.0;
  double eps_dinf = 0.0;
  double eps_gap = 0.0;
  int line_search_failures = 0;
  int rejected_steps = 0;      // PDSN steps retried with larger proximal weights
  int threads = 1;
  double wall_ms = 0.0;
  std::vector<double> objective_trace;  // objective after each outer iteration
  std::vector<double> residual_trace;   // PDSN: Err_PPA per step; ADMM: ε_pinf per sweep
  std::vector<std::string> warnings;

  bool operator==(const SolverReport&) const = default;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace zeroqr
