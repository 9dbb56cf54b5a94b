// Proximal point method for the weighted-l1 check-loss subproblem
//
//   min_β  f_τ(y − Xβ) + ‖ω∘β‖₁ − ⟨δ, β − β_anchor⟩,
//
// whose inner steps are solved by a semismooth Newton method applied to the
// smooth dual Ψ. Every PPA step adds (γ₁/2)‖β − βʲ‖² + (γ₂/2)‖X(β − βʲ)‖².
//
// Sign convention: the dual variable `u` is the multiplier of the constraint
// Xβ + z − y = 0 entering the Lagrangian with a plus sign, so at a solution
// −u ∈ ∂f_τ(z). `kkt_multiplier()` returns −u.
#pragma once

#include "zeroqr/problem.hpp"
#include "zeroqr/prox.hpp"
#include "zeroqr/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace zeroqr {

struct PdsnConfig {
  double gamma1_0 = 0.0;  // <= 0 selects min(0.1, R0)
  double gamma2_0 = 0.0;
  double gamma_floor = 1e-8;
  double shrink = 5.0 / 7.0;
  double eps_ppa_0 = 1e-6;
  double eps_ppa_floor = 1e-8;
  double newton_mu = 1e-5;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_ppa_iters = 200;
  int max_newton_iters = 50;
  int max_line_search = 50;
  double reject_growth = 10.0;  // γ multiplier after an inner solve that did not converge
  TieRule tie_rule = TieRule::Zero;
  Index dense_limit = 2000;  // larger systems go to preconditioned CG
  double cg_rel_tol = 1e-9;

  void validate() const {
    if (!(gamma_floor > 0.0)) throw std::invalid_argument("gamma_floor must be positive");
    if (!(shrink > 0.0 && shrink < 1.0)) throw std::invalid_argument("shrink must be in (0,1)");
    if (!(eps_ppa_0 > 0.0 && eps_ppa_floor > 0.0)) throw std::invalid_argument("PPA tolerances must be positive");
    if (!(newton_mu > 0.0)) throw std::invalid_argument("newton_mu must be positive");
    if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0))
      throw std::invalid_argument("need 0 < c1 < c2 < 1");
    if (max_ppa_iters < 1 || max_newton_iters < 1) throw std::invalid_argument("iteration limits must be >= 1");
    if (!(reject_growth > 1.0)) throw std::invalid_argument("reject_growth must be > 1");
  }
};

/// One weighted-l1 subproblem. `weights` is ω = λ(e − w), `delta` the
/// inexactness shift and `anchor` the previous-stage estimate.
struct SubproblemSpec {
  const QuantileProblem& problem;
  Vector weights;
  Vector delta;
  Vector anchor;

  static SubproblemSpec make(const QuantileProblem& problem, Vector weights) {
    const Index p = problem.features();
    return {problem, std::move(weights), Vector::Zero(p), Vector::Zero(p)};
  }

  void validate() const {
    const Index p = problem.features();
    if (weights.size() != p || delta.size() != p || anchor.size() != p)
      throw std::invalid_argument("subproblem vectors must have length p");
    if ((weights.array() < 0.0).any()) throw std::invalid_argument("weights must be nonnegative");
    if (!weights.allFinite() || !delta.allFinite() || !anchor.allFinite())
      throw std::invalid_argument("subproblem vectors must be finite");
  }
};

/// f_τ(y − Xβ) + ‖ω∘β‖₁ − ⟨δ, β − anchor⟩.
inline double subproblem_objective(const SubproblemSpec& spec, const Vector& beta) {
  const auto& pr = spec.problem;
  const Vector r = pr.response - design_times(pr.design, beta);
  return check_loss(r, pr.tau) + weighted_l1(beta, spec.weights) - spec.delta.dot(beta - spec.anchor);
}

struct PdsnState {
  Vector beta;
  Vector z;
  Vector u;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double err_ppa = 0.0;
  int inner_newton_iters = 0;

  Vector kkt_multiplier() const { return -u; }
};

/// Relative KKT residual of the subproblem at (β, z, v) with v ∈ ∂f_τ(z)
/// the multiplier in KKT sign:
///   ‖z − Pf_τ(z + v)‖, ‖β − Ph(β + Xᵀv + δ)‖, ‖y − Xβ − z‖.
inline double subproblem_kkt_residual(const SubproblemSpec& spec, const Vector& beta, const Vector& z,
                                      const Vector& v) {
  const auto& pr = spec.problem;
  const Index n = pr.samples();
  const Vector d1 = z - prox_check_loss(z + v, 1.0, pr.tau, n);
  const Vector d2 = beta - prox_weighted_l1(beta + pr.design.transpose() * v + spec.delta, spec.weights, 1.0);
  const Vector d3 = pr.response - design_times(pr.design, beta) - z;
  return std::sqrt(d1.squaredNorm() + d2.squaredNorm() + d3.squaredNorm()) / (1.0 + pr.response.norm());
}

/// The dual of one PPA step, centered at (βʲ, zʲ = y − Xβʲ) with
/// proximal weights γ₁, γ₂.
class PpaDual {
 public:
  PpaDual(const SubproblemSpec& spec, Vector beta_center, double gamma1, double gamma2)
      : spec_(spec),
        x_(spec.problem.design),
        y_(spec.problem.response),
        tau_(spec.problem.tau),
        n_(spec.problem.samples()),
        beta_c_(std::move(beta_center)),
        z_c_(y_ - design_times(x_, beta_c_)),
        gamma1_(gamma1),
        gamma2_(gamma2) {}

  double gamma1() const { return gamma1_; }
  double gamma2() const { return gamma2_; }
  const Vector& beta_center() const { return beta_c_; }
  const Vector& z_center() const { return z_c_; }
  const Matrix& design() const { return x_; }
  const Vector& response() const { return y_; }

  /// Arguments of the two proxes given Xᵀu.
  Vector z_argument(const Vector& u) const { return z_c_ - u / gamma2_; }
  Vector beta_argument_from_xtu(const Vector& xtu) const { return beta_c_ - (xtu - spec_.delta) / gamma1_; }

  /// Φ(u) = y − Pf_τ(zʲ − u/γ₂) − X Ph(βʲ − (Xᵀu − δ)/γ₁) = ∇Ψ(u).
  Vector residual(const Vector& u) const { return residual_from_xtu(u, x_.transpose() * u); }

  Vector residual_from_xtu(const Vector& u, const Vector& xtu) const {
    const Vector zp = prox_check_loss(z_argument(u), gamma2_, tau_, n_);
    const Vector bp = prox_weighted_l1(beta_argument_from_xtu(xtu), spec_.weights, gamma1_);
    return y_ - zp - design_times(x_, bp);
  }

  /// Ψ(u) = ‖u‖²/(2γ₂) − e f_τ(zʲ − u/γ₂) − e h(βʲ − (Xᵀu − δ)/γ₁)
  ///        + ‖Xᵀu − δ‖²/(2γ₁) + ⟨δ, βʲ − anchor⟩.
  double objective(const Vector& u) const { return objective_from_xtu(u, x_.transpose() * u); }

  double objective_from_xtu(const Vector& u, const Vector& xtu) const { return objective_terms(u, xtu).value; }

  /// Ψ together with the sum of the magnitudes of its terms, which bounds
  /// the rounding error of the value (the terms cancel heavily for small γ).
  struct Value {
    double value;
    double magnitude;
  };
  Value objective_terms(const Vector& u, const Vector& xtu) const {
    const Vector shifted = xtu - spec_.delta;
    const double t[] = {u.squaredNorm() / (2.0 * gamma2_), -moreau_env_check_loss(z_argument(u), gamma2_, tau_, n_),
                        -moreau_env_weighted_l1(beta_argument_from_xtu(xtu), spec_.weights, gamma1_),
                        shifted.squaredNorm() / (2.0 * gamma1_), spec_.delta.dot(beta_c_ - spec_.anchor)};
    Value v{0.0, 0.0};
    for (double x : t) {
      v.value += x;
      v.magnitude += std::abs(x);
    }
    return v;
  }

  /// Primal pair recovered from a dual point.
  std::pair<Vector, Vector> recover(const Vector& u) const {
    const Vector xtu = x_.transpose() * u;
    return {prox_weighted_l1(beta_argument_from_xtu(xtu), spec_.weights, gamma1_),
            prox_check_loss(z_argument(u), gamma2_, tau_, n_)};
  }

  struct Jacobian {
    Vector u_diag;               // selection from the check-loss prox Jacobian
    std::vector<Index> active;   // J: coordinates where the l1 prox is the identity
  };

  Jacobian jacobian(const Vector& u, const Vector& xtu, TieRule tie) const {
    Jacobian jac;
    jac.u_diag = clarke_jacobian_check_loss_prox(z_argument(u), gamma2_, tau_, n_, tie).diag;
    const Vector v = clarke_jacobian_weighted_l1_prox(beta_argument_from_xtu(xtu), spec_.weights, gamma1_, tie).diag;
    for (Index i = 0; i < v.size(); ++i)
      if (v(i) > 0.0) jac.active.push_back(i);
    // With TieRule::One a tie entry is 1 as well; fractional entries never occur.
    return jac;
  }

  /// Dense W + μI = U/γ₂ + X_J X_Jᵀ/γ₁ + μI.
  Matrix newton_matrix(const Jacobian& jac, double mu) const {
    Matrix w = Matrix::Zero(n_, n_);
    if (!jac.active.empty()) {
      const Matrix xj = x_(Eigen::all, jac.active);
      w.selfadjointView<Eigen::Lower>().rankUpdate(xj, 1.0 / gamma1_);
      w.triangularView<Eigen::StrictlyUpper>() = w.transpose();
    }
    w.diagonal() += jac.u_diag / gamma2_ + Vector::Constant(n_, mu);
    return w;
  }

  /// Solves (W + μI) d = rhs using the structure W = D + X_J X_Jᵀ/γ₁.
  Vector solve_newton(const Jacobian& jac, double mu, const Vector& rhs, const PdsnConfig& cfg) const {
    const Vector diag = jac.u_diag / gamma2_ + Vector::Constant(n_, mu);
    const Index m = static_cast<Index>(jac.active.size());
    if (m == 0) return rhs.cwiseQuotient(diag);
    if (n_ > cfg.dense_limit) return solve_cg(jac, diag, rhs, cfg.cg_rel_tol);
    const Matrix xj = x_(Eigen::all, jac.active);
    if (2 * m < n_) {
      // Woodbury: (D + X_J X_Jᵀ/γ₁)⁻¹ = D⁻¹ − D⁻¹X_J (γ₁I + X_JᵀD⁻¹X_J)⁻¹ X_JᵀD⁻¹.
      const Vector dinv = diag.cwiseInverse();
      const Matrix scaled = dinv.asDiagonal() * xj;
      Matrix small = Matrix::Identity(m, m) * gamma1_;
      small.noalias() += xj.transpose() * scaled;
      const Vector t = dinv.cwiseProduct(rhs);
      const Eigen::LLT<Matrix> llt(small);
      return t - scaled * llt.solve(xj.transpose() * t);
    }
    Matrix w = Matrix::Zero(n_, n_);
    w.selfadjointView<Eigen::Lower>().rankUpdate(xj, 1.0 / gamma1_);
    w.diagonal() += diag;
    return w.selfadjointView<Eigen::Lower>().llt().solve(rhs);
  }

 private:
  Vector solve_cg(const Jacobian& jac, const Vector& diag, const Vector& rhs, double rel_tol) const {
    const Matrix xj = x_(Eigen::all, jac.active);
    auto apply = [&](const Vector& v) -> Vector {
      return diag.cwiseProduct(v) + xj * (xj.transpose() * v) / gamma1_;
    };
    const Vector precond = (diag + xj.rowwise().squaredNorm() / gamma1_).cwiseInverse();
    Vector d = Vector::Zero(n_);
    Vector r = rhs;
    Vector zv = precond.cwiseProduct(r);
    Vector p = zv;
    double rz = r.dot(zv);
    const double target = rel_tol * rhs.norm();
    for (Index it = 0; it < 10 * n_ && r.norm() > target; ++it) {
      const Vector ap = apply(p);
      const double alpha = rz / p.dot(ap);
      d += alpha * p;
      r -= alpha * ap;
      zv = precond.cwiseProduct(r);
      const double rz_next = r.dot(zv);
      p = zv + (rz_next / rz) * p;
      rz = rz_next;
    }
    return d;
  }

  const SubproblemSpec& spec_;
  const Matrix& x_;
  const Vector& y_;
  double tau_;
  Index n_;
  Vector beta_c_;
  Vector z_c_;
  double gamma1_;
  double gamma2_;
};

struct NewtonResult {
  Vector u;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  double residual = 0.0;  // ‖Φ(u)‖/(1 + ‖y‖)
  std::vector<double> psi_trace;
};

/// Semismooth Newton on Ψ with a strong-Wolfe line search. Stops when
/// ‖Φ(u)‖/(1 + ‖y‖) ≤ tol or after cfg.max_newton_iters steps.
inline NewtonResult semismooth_newton(const PpaDual& dual, Vector u0, double tol, const PdsnConfig& cfg) {
  const Matrix& x = dual.design();
  const double scale = 1.0 + dual.response().norm();

  NewtonResult res;
  Vector u = std::move(u0);
  Vector xtu = x.transpose() * u;
  Vector phi = dual.residual_from_xtu(u, xtu);
  auto terms = dual.objective_terms(u, xtu);
  double psi = terms.value;
  double psi_mag = terms.magnitude;
  if (!std::isfinite(psi)) throw std::runtime_error("semismooth Newton: non-finite dual objective");
  res.psi_trace.push_back(psi);

  for (;;) {
    res.residual = phi.norm() / scale;
    if (res.residual <= tol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= cfg.max_newton_iters) break;

    const auto jac = dual.jacobian(u, xtu, cfg.tie_rule);
    Vector d = dual.solve_newton(jac, cfg.newton_mu, -phi, cfg);
    double slope0 = phi.dot(d);
    if (!(slope0 < 0.0) || !d.allFinite()) {
      d = -phi;
      slope0 = -phi.squaredNorm();
    }
    const Vector xtd = x.transpose() * d;

    // Bracketing + bisection for the strong Wolfe conditions. Ψ is convex,
    // so the directional derivative is nondecreasing in the step.
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double alpha = 1.0;
    bool accepted = false;
    Vector u_try, xtu_try, phi_try;
    double psi_try = psi;
    double mag_try = psi_mag;
    double best_psi = psi;
    double best_mag = psi_mag;
    double best_alpha = 0.0;
    for (int ls = 0; ls < cfg.max_line_search; ++ls) {
      u_try = u + alpha * d;
      xtu_try = xtu + alpha * xtd;
      const auto try_terms = dual.objective_terms(u_try, xtu_try);
      psi_try = try_terms.value;
      mag_try = try_terms.magnitude;
      if (!std::isfinite(psi_try)) throw std::runtime_error("semismooth Newton: non-finite dual objective");
      if (psi_try < best_psi) {
        best_psi = psi_try;
        best_mag = try_terms.magnitude;
        best_alpha = alpha;
      }
      // near the solution the decrease drops below rounding of Ψ; allow that much slack
      const double noise =
          64.0 * std::numeric_limits<double>::epsilon() * std::max({1.0, psi_mag, try_terms.magnitude});
      if (psi_try > psi + cfg.wolfe_c1 * alpha * slope0 + noise) {
        // Armijo fails: no need for the gradient, which costs a product with X
        hi = alpha;
        alpha = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * alpha;
        continue;
      }
      phi_try = dual.residual_from_xtu(u_try, xtu_try);
      const double slope = phi_try.dot(d);
      if (slope > -cfg.wolfe_c2 * slope0) {
        hi = alpha;
      } else if (slope < cfg.wolfe_c2 * slope0) {
        lo = alpha;
      } else {
        accepted = true;
        break;
      }
      alpha = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * alpha;
    }
    if (!accepted) {
      res.line_search_failed = true;
      if (best_alpha > 0.0) {
        u += best_alpha * d;
        xtu += best_alpha * xtd;
        phi = dual.residual_from_xtu(u, xtu);
        psi = best_psi;
        psi_mag = best_mag;
        res.psi_trace.push_back(psi);
        ++res.iterations;
      }
      res.residual = phi.norm() / scale;
      break;
    }
    u = std::move(u_try);
    xtu = std::move(xtu_try);
    phi = std::move(phi_try);
    psi = psi_try;
    psi_mag = mag_try;
    res.psi_trace.push_back(psi);
    ++res.iterations;
  }
  res.u = std::move(u);
  return res;
}

/// Proximal point method with semismooth Newton inner solves. `initial_u`
/// warm-starts the dual (same sign convention as PdsnState::u); β starts at
/// the anchor.
inline std::pair<PdsnState, SolverReport> ppa_solve(const SubproblemSpec& spec, const PdsnConfig& cfg,
                                                    const std::optional<Vector>& initial_u = std::nullopt) {
  spec.problem.validate();
  spec.validate();
  cfg.validate();
  const Stopwatch clock;
  const auto& pr = spec.problem;
  const Index n = pr.samples();

  SolverReport report;
  report.solver = "pdsn";

  PdsnState st;
  st.beta = spec.anchor;
  st.z = pr.response - design_times(pr.design, st.beta);
  st.u = initial_u && initial_u->size() == n ? *initial_u : Vector::Zero(n);
  st.err_ppa = subproblem_kkt_residual(spec, st.beta, st.z, st.kkt_multiplier());

  const double r0 = st.err_ppa;
  st.gamma1 = cfg.gamma1_0 > 0.0 ? cfg.gamma1_0 : std::max(cfg.gamma_floor, std::min(0.1, r0));
  st.gamma2 = cfg.gamma2_0 > 0.0 ? cfg.gamma2_0 : std::max(cfg.gamma_floor, std::min(0.1, r0));
  double eps = cfg.eps_ppa_0;

  if (st.err_ppa <= eps) report.converged = true;
  int attempts = 0;
  while (!report.converged && attempts < cfg.max_ppa_iters) {
    ++attempts;
    const PpaDual dual(spec, st.beta, st.gamma1, st.gamma2);
    auto newton = semismooth_newton(dual, st.u, 0.1 * eps, cfg);
    st.inner_newton_iters += newton.iterations;
    if (newton.line_search_failed) ++report.line_search_failures;
    if (!newton.converged) {
      // An unconverged dual point gives a meaningless proximal center. Keep
      // the current one and retry with a better conditioned dual.
      st.gamma1 = std::min(1.0, cfg.reject_growth * st.gamma1);
      st.gamma2 = std::min(1.0, cfg.reject_growth * st.gamma2);
      ++report.rejected_steps;
      continue;
    }
    st.u = std::move(newton.u);
    auto [beta, z] = dual.recover(st.u);
    st.beta = std::move(beta);
    st.z = std::move(z);
    st.err_ppa = subproblem_kkt_residual(spec, st.beta, st.z, st.kkt_multiplier());
    ++report.iterations;
    report.objective_trace.push_back(subproblem_objective(spec, st.beta));
    report.residual_trace.push_back(st.err_ppa);
    if (!st.beta.allFinite()) throw std::runtime_error("PDSN: non-finite iterate");
    if (st.err_ppa <= eps) {
      report.converged = true;
      break;
    }
    st.gamma1 = std::max(cfg.gamma_floor, cfg.shrink * st.gamma1);
    st.gamma2 = std::max(cfg.gamma_floor, cfg.shrink * st.gamma2);
    eps = std::max(cfg.eps_ppa_floor, 0.1 * eps);
  }
  if (report.line_search_failures > 0)
    report.warnings.push_back(std::to_string(report.line_search_failures) + " line search failures");
  if (report.rejected_steps > 0)
    report.warnings.push_back(std::to_string(report.rejected_steps) + " PPA steps rejected");
  if (!report.converged) report.warnings.push_back("PPA reached max_ppa_iters");

  report.inner_iterations = st.inner_newton_iters;
  report.objective = subproblem_objective(spec, st.beta);
  report.primal_objective = report.objective;
  report.kkt_residual = st.err_ppa;
  report.wall_ms = clock.elapsed_ms();
  return {std::move(st), std::move(report)};
}

}  // namespace zeroqr
