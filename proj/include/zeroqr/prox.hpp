// Proximal maps, Moreau envelopes and Clarke Jacobian selections for the
// check loss and the weighted l1 norm.
//
// Parametrization: every function taking `gamma` works with
//   P(z) = argmin_t g(t) + (gamma/2) ||t − z||²,
//   e(z) = min_t    g(t) + (gamma/2) ||t − z||²,
// so gamma is the weight of the quadratic term (∇e(z) = gamma (z − P(z))).
#pragma once

#include "zeroqr/problem.hpp"

#include <cmath>

namespace zeroqr {

enum class TieRule { Zero, One };

/// Diagonal of a Clarke Jacobian element; entries in [0,1].
struct ProxJacobianElement {
  Vector diag;
};

namespace prox {

inline double soft_threshold(double z, double threshold) {
  if (z > threshold) return z - threshold;
  if (z < -threshold) return z + threshold;
  return 0.0;
}

inline double check_loss_scalar(double z, double gamma, double tau, double n) {
  const double upper = tau / (n * gamma);
  const double lower = (tau - 1.0) / (n * gamma);
  if (z > upper) return z - upper;
  if (z < lower) return z - lower;
  return 0.0;
}

}  // namespace prox

/// Componentwise soft threshold with threshold omega_i / gamma.
inline Vector prox_weighted_l1(const Vector& z, const Vector& omega, double gamma) {
  Vector out(z.size());
  for (Index i = 0; i < z.size(); ++i) out(i) = prox::soft_threshold(z(i), omega(i) / gamma);
  return out;
}

/// Prox of f_τ(t) = (1/n) Σ θ_τ(t_i): two-sided shift with kinks
/// τ/(nγ) and (τ−1)/(nγ), zero in between.
inline Vector prox_check_loss(const Vector& z, double gamma, double tau, Index n) {
  const double nn = static_cast<double>(n);
  Vector out(z.size());
  for (Index i = 0; i < z.size(); ++i) out(i) = prox::check_loss_scalar(z(i), gamma, tau, nn);
  return out;
}

inline double weighted_l1(const Vector& beta, const Vector& omega) {
  return omega.cwiseProduct(beta.cwiseAbs()).sum();
}

/// (1/n) Σ θ_τ(z_i) with an explicit n (the vector may be a block of a longer one).
inline double check_loss_n(const Vector& z, double tau, Index n) {
  double sum = 0.0;
  for (Index i = 0; i < z.size(); ++i) sum += z(i) > 0.0 ? tau * z(i) : (tau - 1.0) * z(i);
  return sum / static_cast<double>(n);
}

inline double moreau_env_check_loss(const Vector& z, double gamma, double tau, Index n) {
  const Vector p = prox_check_loss(z, gamma, tau, n);
  return check_loss_n(p, tau, n) + 0.5 * gamma * (p - z).squaredNorm();
}

inline double moreau_env_weighted_l1(const Vector& z, const Vector& omega, double gamma) {
  const Vector p = prox_weighted_l1(z, omega, gamma);
  return weighted_l1(p, omega) + 0.5 * gamma * (p - z).squaredNorm();
}

inline ProxJacobianElement clarke_jacobian_check_loss_prox(const Vector& z, double gamma, double tau,
                                                           Index n, TieRule tie = TieRule::Zero) {
  const double nn = static_cast<double>(n);
  const double upper = tau / (nn * gamma);
  const double lower = (tau - 1.0) / (nn * gamma);
  const double tie_value = tie == TieRule::One ? 1.0 : 0.0;
  ProxJacobianElement el{Vector(z.size())};
  for (Index i = 0; i < z.size(); ++i) {
    const double t = z(i);
    if (t > upper || t < lower) el.diag(i) = 1.0;
    else if (t == upper || t == lower) el.diag(i) = tie_value;
    else el.diag(i) = 0.0;
  }
  return el;
}

inline ProxJacobianElement clarke_jacobian_weighted_l1_prox(const Vector& z, const Vector& omega,
                                                            double gamma, TieRule tie = TieRule::Zero) {
  const double tie_value = tie == TieRule::One ? 1.0 : 0.0;
  ProxJacobianElement el{Vector(z.size())};
  for (Index i = 0; i < z.size(); ++i) {
    const double s = std::abs(gamma * z(i));
    // an unpenalized coordinate is the identity map, kink or not
    if (s > omega(i) || omega(i) == 0.0) el.diag(i) = 1.0;
    else if (s == omega(i)) el.diag(i) = tie_value;
    else el.diag(i) = 0.0;
  }
  return el;
}

}  // namespace zeroqr
