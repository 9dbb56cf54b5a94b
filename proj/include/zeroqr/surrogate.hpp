// The convex family φ used to relax the zero-norm, its conjugate ψ*, the
// induced DC penalty h_ρ, the closed-form weight update and the exact
// penalty threshold.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace zeroqr {

enum class SurrogateKind {
  CappedL1,  // φ(t) = t
  Scad,      // φ(t) = (a−1)/(a+1) t² + 2/(a+1) t, a > 1
  Mcp,       // φ(t) = a²/4 t² − a²/2 t + a t + (a−2)²/4, a > 2
};

inline std::string to_string(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::CappedL1: return "capped-l1";
    case SurrogateKind::Scad: return "scad";
    case SurrogateKind::Mcp: return "mcp";
  }
  return "unknown";
}

inline SurrogateKind parse_surrogate(const std::string& name) {
  if (name == "capped-l1") return SurrogateKind::CappedL1;
  if (name == "scad") return SurrogateKind::Scad;
  if (name == "mcp") return SurrogateKind::Mcp;
  throw std::invalid_argument("unknown surrogate '" + name + "'");
}

class SurrogateFamily {
 public:
  /// Validates the shape parameter and checks numerically that the
  /// minimum of φ over [0,1] is 0 and φ(1) = 1.
  explicit SurrogateFamily(SurrogateKind kind = SurrogateKind::Scad, double a = 3.7)
      : kind_(kind), a_(a) {
    if (kind == SurrogateKind::Scad && !(a > 1.0))
      throw std::invalid_argument("scad surrogate requires a > 1");
    if (kind == SurrogateKind::Mcp && !(a > 2.0))
      throw std::invalid_argument("mcp surrogate requires a > 2");
    if (std::abs(phi(1.0) - 1.0) > 1e-9) throw std::logic_error("surrogate violates phi(1) = 1");
    if (std::abs(grid_min_over_unit()) > 1e-9)
      throw std::logic_error("surrogate minimum over [0,1] is not zero");
  }

  static SurrogateFamily capped_l1() { return SurrogateFamily(SurrogateKind::CappedL1, 0.0); }
  static SurrogateFamily scad(double a) { return SurrogateFamily(SurrogateKind::Scad, a); }
  static SurrogateFamily mcp(double a) { return SurrogateFamily(SurrogateKind::Mcp, a); }

  SurrogateKind kind() const { return kind_; }
  double a() const { return a_; }

  double phi(double t) const {
    switch (kind_) {
      case SurrogateKind::CappedL1: return t;
      case SurrogateKind::Scad: return (a_ - 1.0) / (a_ + 1.0) * t * t + 2.0 / (a_ + 1.0) * t;
      case SurrogateKind::Mcp:
        return a_ * a_ / 4.0 * t * t - a_ * a_ / 2.0 * t + a_ * t + (a_ - 2.0) * (a_ - 2.0) / 4.0;
    }
    return 0.0;
  }

  double phi_derivative(double t) const {
    switch (kind_) {
      case SurrogateKind::CappedL1: return 1.0;
      case SurrogateKind::Scad: return 2.0 * (a_ - 1.0) / (a_ + 1.0) * t + 2.0 / (a_ + 1.0);
      case SurrogateKind::Mcp: return a_ * a_ / 2.0 * t - a_ * a_ / 2.0 + a_;
    }
    return 0.0;
  }

  /// argmin of φ over [0,1].
  double t_star() const {
    switch (kind_) {
      case SurrogateKind::CappedL1:
      case SurrogateKind::Scad: return 0.0;
      case SurrogateKind::Mcp: return (a_ - 2.0) / a_;
    }
    return 0.0;
  }

  /// Conjugate of ψ = φ + indicator of [0,1].
  double psi_star(double s) const {
    switch (kind_) {
      case SurrogateKind::CappedL1: return s <= 1.0 ? 0.0 : s - 1.0;
      case SurrogateKind::Scad: {
        const double lo = 2.0 / (a_ + 1.0);
        const double hi = 2.0 * a_ / (a_ + 1.0);
        if (s <= lo) return 0.0;
        if (s <= hi) {
          const double r = (a_ + 1.0) * s - 2.0;
          return r * r / (4.0 * (a_ * a_ - 1.0));
        }
        return s - 1.0;
      }
      case SurrogateKind::Mcp: {
        const double base = (a_ - 2.0) * (a_ - 2.0) / 4.0;
        if (s <= a_ - a_ * a_ / 2.0) return -base;
        if (s <= a_) {
          const double r = a_ * (a_ - 2.0) / 2.0 + s;
          return r * r / (a_ * a_) - base;
        }
        return s - 1.0;
      }
    }
    return 0.0;
  }

  /// h_ρ(t) = ρ|t| − ψ*(ρ|t|), a DC surrogate of the indicator t ≠ 0.
  double h_rho(double rho, double t) const {
    const double s = rho * std::abs(t);
    return s - psi_star(s);
  }

  /// argmin_{0≤w≤1} φ(w) − ρ w |β|. Ties of the linear family go to 0.
  double w_update(double rho, double beta_abs) const {
    const double s = rho * beta_abs;
    switch (kind_) {
      case SurrogateKind::CappedL1: return s > 1.0 ? 1.0 : 0.0;
      case SurrogateKind::Scad:
        return std::clamp(((a_ + 1.0) * s - 2.0) / (2.0 * (a_ - 1.0)), 0.0, 1.0);
      case SurrogateKind::Mcp: return std::clamp(1.0 + 2.0 * (s - a_) / (a_ * a_), 0.0, 1.0);
    }
    return 0.0;
  }

  /// Smallest t in [t*, 1) with 1/(1 − t*) ∈ ∂φ(t).
  double t_zero() const {
    const double target = 1.0 / (1.0 - t_star());
    double t = 0.0;
    switch (kind_) {
      case SurrogateKind::CappedL1: t = 0.0; break;
      case SurrogateKind::Scad: t = (target - 2.0 / (a_ + 1.0)) * (a_ + 1.0) / (2.0 * (a_ - 1.0)); break;
      case SurrogateKind::Mcp: t = (target + a_ * a_ / 2.0 - a_) * 2.0 / (a_ * a_); break;
    }
    return std::clamp(t, t_star(), std::nextafter(1.0, 0.0));
  }

  /// Penalty level above which the penalized problem shares the global
  /// solution set of the complementarity-constrained one.
  double exact_penalty_threshold(double nu, double spectral_norm, double tau) const {
    if (!(nu > 0.0) || !(spectral_norm > 0.0)) throw std::invalid_argument("nu and ||X|| must be positive");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in (0,1)");
    const double tau_bar = std::max(tau, 1.0 - tau);
    const double left_slope_at_one = phi_derivative(1.0);
    return left_slope_at_one * (1.0 - t_star()) * tau_bar * nu * spectral_norm / (1.0 - t_zero());
  }

 private:
  double grid_min_over_unit() const {
    constexpr int kGrid = 100000;
    double best = phi(0.0);
    int best_i = 0;
    for (int i = 1; i <= kGrid; ++i) {
      const double v = phi(static_cast<double>(i) / kGrid);
      if (v < best) {
        best = v;
        best_i = i;
      }
    }
    // golden-section polish inside the bracketing cell
    double lo = std::max(0.0, (best_i - 1.0) / kGrid);
    double hi = std::min(1.0, (best_i + 1.0) / kGrid);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 60; ++it) {
      const double m1 = hi - g * (hi - lo);
      const double m2 = lo + g * (hi - lo);
      if (phi(m1) < phi(m2)) hi = m2; else lo = m1;
    }
    return std::min(best, phi(0.5 * (lo + hi)));
  }

  SurrogateKind kind_;
  double a_;
};

/// ν, λ = ρ₀/ν with ρ₀ = 1, and the current ρ.
struct PenaltyParams {
  double nu = 1.0;
  double lambda = 1.0;
  double rho = 1.0;

  static PenaltyParams from_lambda(double lambda, double rho = 1.0) {
    if (!(lambda > 0.0) || !(rho > 0.0)) throw std::invalid_argument("lambda and rho must be positive");
    return {1.0 / lambda, lambda, rho};
  }
  static PenaltyParams from_nu(double nu, double rho = 1.0) {
    if (!(nu > 0.0) || !(rho > 0.0)) throw std::invalid_argument("nu and rho must be positive");
    return {nu, 1.0 / nu, rho};
  }
};

}  // namespace zeroqr
