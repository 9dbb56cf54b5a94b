// Multi-stage convex relaxation: alternate weighted-l1 solves with closed-form
// weight updates, with the ρ schedule, stage KKT residual and stage stopping
// rules.
#pragma once

#include "zeroqr/admm.hpp"
#include "zeroqr/pdsn.hpp"
#include "zeroqr/problem.hpp"
#include "zeroqr/prox.hpp"
#include "zeroqr/report.hpp"
#include "zeroqr/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace zeroqr {

enum class SolverKind { Pdsn, Admm };

inline std::string to_string(SolverKind kind) { return kind == SolverKind::Pdsn ? "pdsn" : "admm"; }

inline SolverKind parse_solver(const std::string& name) {
  if (name == "pdsn") return SolverKind::Pdsn;
  if (name == "admm") return SolverKind::Admm;
  throw std::invalid_argument("unknown solver '" + name + "'");
}

/// Stage stopping constants.
namespace stage_rules {
inline constexpr int kStableWindowTight = 4;  // N_nz equal over stages k−3..k and Err_k ≤ stage_tol
inline constexpr int kStableWindowLoose = 3;  // N_nz equal over stages k−2..k and |Err_k − Err_{k−2}| ≤ err_drift_tol
inline constexpr double kNnzRelative = 1e-6;
}  // namespace stage_rules

struct MscraConfig {
  double lambda = 0.1;  // λ = ρ₀/ν with ρ₀ = 1
  SurrogateFamily surrogate{};
  SolverKind solver = SolverKind::Pdsn;
  int max_stages = 10;
  double stage_tol = 1e-5;
  double err_drift_tol = 1e-6;
  double rho_cap = 1e8;
  std::optional<double> fixed_rho;  // freezes ρ_k for every stage when set
  bool warm_start = true;
  PdsnConfig pdsn{};
  AdmmConfig admm{};

  static MscraConfig from_nu(double nu) {
    MscraConfig cfg;
    cfg.lambda = PenaltyParams::from_nu(nu).lambda;
    return cfg;
  }

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive");
    if (max_stages < 1) throw std::invalid_argument("max_stages must be >= 1");
    if (fixed_rho && !(*fixed_rho > 0.0)) throw std::invalid_argument("fixed_rho must be positive");
  }
};

struct StageState {
  int k = 0;
  Vector beta;
  Vector w;
  double rho = 1.0;
  double err_k = 0.0;
  int nnz = 0;
  Vector z;
  Vector u;  // KKT-sign multiplier, u ∈ ∂f_τ(z)
  SolverReport solver_report;
  double wall_ms = 0.0;
};

struct MscraResult {
  StageState final_stage;
  std::vector<StageState> history;
  bool converged = false;  // stopped by a stability rule rather than max_stages
  std::string stop_reason;
  std::vector<std::string> warnings;
};

struct MscraError : std::runtime_error {
  MscraError(const std::string& what, std::vector<StageState> partial)
      : std::runtime_error(what), history(std::move(partial)) {}
  std::vector<StageState> history;
};

/// N_nz(β) = #{i : |β_i| > 1e-6 max(1, ‖β‖∞)}.
inline int count_nonzeros(const Vector& beta) {
  if (beta.size() == 0) return 0;
  const double cut = stage_rules::kNnzRelative * std::max(1.0, beta.cwiseAbs().maxCoeff());
  return static_cast<int>((beta.array().abs() > cut).count());
}

/// Stage weights ω = λ(e − w); the intercept column is never penalized.
inline Vector stage_weights(const QuantileProblem& problem, double lambda, const Vector& w) {
  Vector omega = lambda * (Vector::Ones(w.size()) - w);
  if (problem.intercept_column) omega(0) = 0.0;
  return omega.cwiseMax(0.0);
}

/// ρ₁ = max(1, 1/(3‖β¹‖∞)); ρ_k = max(ρ_{k−1}, min(1.25ρ_{k−1}, cap/‖β^k‖∞))
/// for k = 2, 3; constant afterwards. β¹ = 0 gives ρ₁ = 1.
inline double rho_schedule(int k, const Vector& beta, double prev_rho, double cap = 1e8) {
  const double inf_norm = beta.size() ? beta.cwiseAbs().maxCoeff() : 0.0;
  if (k <= 1) return inf_norm > 0.0 ? std::max(1.0, 1.0 / (3.0 * inf_norm)) : 1.0;
  if (k <= 3) {
    const double limit = inf_norm > 0.0 ? cap / inf_norm : std::numeric_limits<double>::infinity();
    return std::max(prev_rho, std::min(1.25 * prev_rho, limit));
  }
  return prev_rho;
}

/// Relative KKT residual of the penalized problem at (β, z, v) with weights
/// λ(e − w): blocks z − Pf_τ(z + v), β − Ph(β + Xᵀv), y − Xβ − z.
inline double stage_kkt_residual(const Vector& beta, const Vector& z, const Vector& v,
                                 const QuantileProblem& problem, double lambda, const Vector& w) {
  auto spec = SubproblemSpec::make(problem, stage_weights(problem, lambda, w));
  return subproblem_kkt_residual(spec, beta, z, v);
}

/// Θ(β) = f_τ(y − Xβ) + (λ/ρ) Σ h_ρ(β_i), the intercept excluded.
/// The λ/ρ factor makes the stage subproblem f + λ‖(e − w)∘β‖₁ (plus a
/// constant) a majorizer of Θ at the previous iterate, for any fixed ρ.
inline double dc_objective(const QuantileProblem& problem, const Vector& beta, double lambda, double rho,
                           const SurrogateFamily& family) {
  double pen = 0.0;
  for (Index i = problem.intercept_column ? 1 : 0; i < beta.size(); ++i) pen += family.h_rho(rho, beta(i));
  return check_loss(problem.response - design_times(problem.design, beta), problem.tau) + lambda / rho * pen;
}

/// λ_i = max(0.01, γ_i ‖X‖₁/n) with γ_i evenly spaced on [γ_min, γ_max].
inline Vector lambda_grid(const QuantileProblem& problem, double gamma_min, double gamma_max, int count) {
  if (!(gamma_min > 0.0) || gamma_max < gamma_min) throw std::invalid_argument("need 0 < gamma_min <= gamma_max");
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  const double scale = problem.design.cwiseAbs().colwise().sum().maxCoeff() / static_cast<double>(problem.samples());
  Vector grid(count);
  for (int i = 0; i < count; ++i) {
    const double g = count == 1 ? gamma_min : gamma_min + (gamma_max - gamma_min) * i / (count - 1.0);
    grid(i) = std::max(0.01, g * scale);
  }
  return grid;
}

/// Euclidean distance from 0 to ∂[f_τ(y − Xβ) + ‖ω∘β‖₁] at β, ω = λ(e − w_prev).
/// Residuals with |r_i| ≤ zero_tol are treated as exactly zero, which makes
/// their subgradient an interval; the resulting box-constrained least-squares
/// problem is solved by accelerated projected gradient.
inline double subproblem_inexactness(const Vector& beta, const Vector& w_prev, const QuantileProblem& problem,
                                     double lambda, double zero_tol = -1.0) {
  const auto& x = problem.design;
  const Index n = problem.samples();
  const Index p = problem.features();
  const double nn = static_cast<double>(n);
  const double tau = problem.tau;
  const Vector omega = stage_weights(problem, lambda, w_prev);
  const Vector r = problem.response - design_times(x, beta);
  if (zero_tol < 0.0) zero_tol = 1e-9 * (1.0 + problem.response.cwiseAbs().maxCoeff());

  Vector g = Vector::Zero(n);
  std::vector<Index> free_rows;
  for (Index i = 0; i < n; ++i) {
    if (r(i) > zero_tol) g(i) = tau / nn;
    else if (r(i) < -zero_tol) g(i) = (tau - 1.0) / nn;
    else free_rows.push_back(i);
  }
  const Vector c = -(x.transpose() * g);

  // distance of q_j to −I_j, I_j the subdifferential of ω_j|β_j|
  auto excess = [&](const Vector& q) {
    Vector e(p);
    for (Index j = 0; j < p; ++j) {
      if (beta(j) != 0.0 || omega(j) == 0.0) e(j) = q(j) + omega(j) * (beta(j) > 0.0 ? 1.0 : beta(j) < 0.0 ? -1.0 : 0.0);
      else e(j) = std::copysign(std::max(0.0, std::abs(q(j)) - omega(j)), q(j));
    }
    return e;
  };

  if (free_rows.empty()) return excess(c).norm();

  const Matrix a = x(free_rows, Eigen::all).transpose();  // p × |Z|
  const Index m = a.cols();
  const double lo = (tau - 1.0) / nn;
  const double hi = tau / nn;
  const double lip = std::max(std::pow(spectral_norm(a), 2), 1e-300);

  Vector v = Vector::Zero(m);
  Vector v_prev = v;
  double t = 1.0;
  double best = excess(c).squaredNorm();
  for (int it = 0; it < 20000; ++it) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const Vector yv = v + ((t - 1.0) / t_next) * (v - v_prev);
    const Vector e = excess(c - a * yv);
    const Vector grad = -(a.transpose() * e);
    v_prev = v;
    v = (yv - grad / lip).cwiseMax(lo).cwiseMin(hi);
    t = t_next;
    const double val = excess(c - a * v).squaredNorm();
    if (val < best) best = val;
    if ((v - v_prev).norm() <= 1e-15 * (1.0 + v.norm()) && it > 10) break;
  }
  return std::sqrt(best);
}

/// Runs the multi-stage relaxation from w⁰ = 0.
inline MscraResult mscra_fit(const QuantileProblem& problem, const MscraConfig& cfg) {
  problem.validate();
  cfg.validate();
  const Index p = problem.features();
  const auto& family = cfg.surrogate;

  MscraResult result;
  Vector w = Vector::Zero(p);
  Vector beta_prev = Vector::Zero(p);
  std::optional<Vector> dual_prev;
  double rho = 1.0;

  AdmmConfig admm_cfg = cfg.admm;
  if (cfg.solver == SolverKind::Admm && admm_cfg.xtx_norm <= 0.0)
    admm_cfg.xtx_norm = std::pow(spectral_norm(problem.design), 2);

  for (int k = 1; k <= cfg.max_stages; ++k) {
    const Stopwatch clock;
    auto spec = SubproblemSpec::make(problem, stage_weights(problem, cfg.lambda, w));
    spec.anchor = beta_prev;

    StageState stage;
    stage.k = k;
    Vector dual_u;
    try {
      const auto& warm = cfg.warm_start ? dual_prev : std::optional<Vector>{};
      if (cfg.solver == SolverKind::Pdsn) {
        auto [st, rep] = ppa_solve(spec, cfg.pdsn, warm);
        stage.beta = std::move(st.beta);
        stage.z = std::move(st.z);
        dual_u = std::move(st.u);
        stage.solver_report = std::move(rep);
      } else {
        auto [st, rep] = admm_solve(spec, admm_cfg, warm);
        stage.beta = std::move(st.beta);
        stage.z = std::move(st.z);
        dual_u = std::move(st.u);
        stage.solver_report = std::move(rep);
      }
    } catch (const std::exception& e) {
      throw MscraError(std::string("stage ") + std::to_string(k) + ": " + e.what(), std::move(result.history));
    }
    if (!stage.beta.allFinite())
      throw MscraError("stage " + std::to_string(k) + ": non-finite estimate", std::move(result.history));

    if (cfg.fixed_rho) {
      rho = *cfg.fixed_rho;
    } else {
      if (k == 1 && stage.beta.isZero(0.0)) result.warnings.push_back("degenerate first-stage fit: beta = 0, rho_1 = 1");
      rho = rho_schedule(k, stage.beta, rho, cfg.rho_cap);
    }
    stage.rho = rho;

    Vector w_next(p);
    for (Index i = 0; i < p; ++i) w_next(i) = family.w_update(rho, std::abs(stage.beta(i)));
    if (problem.intercept_column) w_next(0) = 1.0;
    stage.w = w_next;
    stage.u = -dual_u;
    // residual of the subproblem this stage solved, i.e. with the incoming weights
    stage.err_k = stage_kkt_residual(stage.beta, stage.z, stage.u, problem, cfg.lambda, w);
    stage.nnz = count_nonzeros(stage.beta);
    stage.wall_ms = clock.elapsed_ms();
    result.history.push_back(stage);

    const auto& h = result.history;
    auto nnz_stable = [&](int window) {
      if (static_cast<int>(h.size()) < window) return false;
      for (int i = 1; i < window; ++i)
        if (h[h.size() - 1 - i].nnz != stage.nnz) return false;
      return true;
    };
    if (nnz_stable(stage_rules::kStableWindowTight) && stage.err_k <= cfg.stage_tol) {
      result.converged = true;
      result.stop_reason = "nnz stable over 4 stages and Err_k <= tol";
    } else if (nnz_stable(stage_rules::kStableWindowLoose) &&
               std::abs(stage.err_k - h[h.size() - 3].err_k) <= cfg.err_drift_tol) {
      result.converged = true;
      result.stop_reason = "nnz stable over 3 stages and Err_k drift <= tol";
    }
    if (result.converged) break;

    w = std::move(w_next);
    beta_prev = stage.beta;
    dual_prev = std::move(dual_u);
  }
  if (!result.converged) result.stop_reason = "max_stages reached";
  result.final_stage = result.history.back();
  return result;
}

}  // namespace zeroqr
