// Synthetic sparse quantile-regression data.
//
// Rows are drawn row-by-row from structured samplers whose law is exactly
// N(0, Σ) for the supported covariance families:
//   AR(r):  x_1 = z_1,  x_j = r x_{j−1} + sqrt(1 − r²) z_j
//   CS(α):  x_j = sqrt(α) g + sqrt(1 − α) z_j,  g shared by the row
// which avoids a p×p Cholesky factor (p reaches 15000) and keeps every entry
// a function of (seed, row, column) only.
#pragma once

#include "zeroqr/mscra.hpp"
#include "zeroqr/problem.hpp"
#include "zeroqr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace zeroqr {

enum class BetaPattern { AlternatingDecay, Fixed16, RandomSupport, Hetero };
enum class CovarianceKind { Identity, Ar, Cs };
enum class NoiseKind { Normal, MixMn1, MixMn2, Laplace, ScaledT4, Cauchy };

struct Covariance {
  CovarianceKind kind = CovarianceKind::Identity;
  double param = 0.0;
};

struct Noise {
  NoiseKind kind = NoiseKind::Normal;
  double variance = 1.0;  // only used by Normal
};

inline std::string to_string(BetaPattern p) {
  switch (p) {
    case BetaPattern::AlternatingDecay: return "alternating-decay";
    case BetaPattern::Fixed16: return "fixed16";
    case BetaPattern::RandomSupport: return "random-support";
    case BetaPattern::Hetero: return "hetero";
  }
  return "?";
}

inline BetaPattern parse_pattern(const std::string& s) {
  if (s == "alternating-decay") return BetaPattern::AlternatingDecay;
  if (s == "fixed16") return BetaPattern::Fixed16;
  if (s == "random-support") return BetaPattern::RandomSupport;
  if (s == "hetero") return BetaPattern::Hetero;
  throw std::invalid_argument("unknown beta pattern '" + s + "'");
}

inline std::string to_string(const Covariance& c) {
  switch (c.kind) {
    case CovarianceKind::Identity: return "identity";
    case CovarianceKind::Ar: return "ar:" + std::to_string(c.param).substr(0, 4);
    case CovarianceKind::Cs: return "cs:" + std::to_string(c.param).substr(0, 4);
  }
  return "?";
}

/// "identity", "ar:0.5", "cs:0.95".
inline Covariance parse_covariance(const std::string& s) {
  if (s == "identity" || s == "I") return {};
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("covariance must be identity, ar:<r> or cs:<alpha>");
  const std::string head = s.substr(0, colon);
  double value = 0.0;
  try {
    value = std::stod(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad covariance parameter in '" + s + "'");
  }
  if (head == "ar") return {CovarianceKind::Ar, value};
  if (head == "cs") return {CovarianceKind::Cs, value};
  throw std::invalid_argument("unknown covariance '" + s + "'");
}

inline std::string to_string(const Noise& nz) {
  switch (nz.kind) {
    case NoiseKind::Normal: return "normal:" + std::to_string(nz.variance).substr(0, 4);
    case NoiseKind::MixMn1: return "mn1";
    case NoiseKind::MixMn2: return "mn2";
    case NoiseKind::Laplace: return "laplace";
    case NoiseKind::ScaledT4: return "t4";
    case NoiseKind::Cauchy: return "cauchy";
  }
  return "?";
}

/// "normal:2", "mn1", "mn2", "laplace", "t4", "cauchy".
inline Noise parse_noise(const std::string& s) {
  if (s == "mn1") return {NoiseKind::MixMn1, 0.0};
  if (s == "mn2") return {NoiseKind::MixMn2, 0.0};
  if (s == "laplace") return {NoiseKind::Laplace, 0.0};
  if (s == "t4") return {NoiseKind::ScaledT4, 0.0};
  if (s == "cauchy") return {NoiseKind::Cauchy, 0.0};
  if (s == "normal") return {NoiseKind::Normal, 1.0};
  if (s.rfind("normal:", 0) == 0) {
    double v = 0.0;
    try {
      v = std::stod(s.substr(7));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad noise variance in '" + s + "'");
    }
    return {NoiseKind::Normal, v};
  }
  throw std::invalid_argument("unknown noise '" + s + "'");
}

/// Analytic standard deviation of a noise law; empty for laws without one.
inline std::optional<double> noise_sd(const Noise& nz) {
  switch (nz.kind) {
    case NoiseKind::Normal: return std::sqrt(nz.variance);
    case NoiseKind::MixMn1: return std::sqrt(0.9 + 0.1 * 25.0);
    case NoiseKind::MixMn2: return std::sqrt(31.0 / 3.0);  // E σ² for σ ~ U(1,5)
    case NoiseKind::Laplace: return std::sqrt(2.0);
    case NoiseKind::ScaledT4: return 2.0;  // 2 · var(t₄) = 4
    case NoiseKind::Cauchy: return std::nullopt;
  }
  return std::nullopt;
}

namespace rng_stream {
inline constexpr std::uint64_t kCovariates = 1ULL << 40;
inline constexpr std::uint64_t kNoise = 2ULL << 40;
inline constexpr std::uint64_t kBeta = 3ULL << 40;
}  // namespace rng_stream

inline double draw_noise(const Noise& nz, CounterRng& rng) {
  switch (nz.kind) {
    case NoiseKind::Normal: return std::sqrt(nz.variance) * rng.normal();
    case NoiseKind::MixMn1: {
      const double pick = rng.uniform();
      const double z = rng.normal();
      return pick < 0.9 ? z : 5.0 * z;
    }
    case NoiseKind::MixMn2: {
      const double sigma = 1.0 + 4.0 * rng.uniform();
      return sigma * rng.normal();
    }
    case NoiseKind::Laplace: {
      const double u = rng.uniform() - 0.5;
      return -std::copysign(std::log1p(-2.0 * std::abs(u)), u);
    }
    case NoiseKind::ScaledT4: {
      const double z = rng.normal();
      const double chi2 = -2.0 * std::log(rng.uniform() * rng.uniform());
      return std::numbers::sqrt2 * z / std::sqrt(chi2 / 4.0);
    }
    case NoiseKind::Cauchy: return std::tan(std::numbers::pi * (rng.uniform() - 0.5));
  }
  return 0.0;
}

/// `count` i.i.d. draws; draw i only depends on (seed, i).
inline Vector sample_noise(const Noise& nz, Index count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  Vector out(count);
  for (Index i = 0; i < count; ++i) {
    CounterRng rng(seed, rng_stream::kNoise + static_cast<std::uint64_t>(i));
    out(i) = draw_noise(nz, rng);
  }
  return out;
}

struct SyntheticSpec {
  Index n = 100;
  Index p = 50;
  BetaPattern beta_pattern = BetaPattern::Fixed16;
  Covariance covariance{};
  Noise noise{};
  std::optional<double> snr;  // κ chosen so sqrt(β*ᵀΣβ*)/(κ sd(ε)) = snr
  std::uint64_t seed = 1;
  double tau = 0.5;
  bool add_intercept = false;
  double hetero_scale = 0.7;  // coefficient of X₁ε in the heteroscedastic model

  void validate() const {
    if (n < 1 || p < 1) throw std::invalid_argument("n and p must be >= 1");
    if (covariance.kind == CovarianceKind::Ar && !(covariance.param > 0.0 && covariance.param < 1.0))
      throw std::invalid_argument("AR parameter must be in (0,1)");
    if (covariance.kind == CovarianceKind::Cs && !(covariance.param >= 0.0 && covariance.param < 1.0))
      throw std::invalid_argument("CS parameter must be in [0,1)");
    if (noise.kind == NoiseKind::Normal && !(noise.variance > 0.0))
      throw std::invalid_argument("noise variance must be positive");
    if (beta_pattern == BetaPattern::Hetero && p < 20) throw std::invalid_argument("hetero model needs p >= 20");
    if (snr) {
      if (!(*snr > 0.0)) throw std::invalid_argument("snr must be positive");
      if (!noise_sd(noise)) throw std::invalid_argument("snr calibration needs a noise law with finite variance");
      if (beta_pattern == BetaPattern::Hetero) throw std::invalid_argument("snr calibration does not apply to hetero");
    }
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in (0,1)");
  }
};

struct SyntheticDataset {
  QuantileProblem problem;
  Vector beta_true;
  std::vector<Index> support;
  double kappa = 1.0;
};

/// s* = ⌊0.5 √p⌋ and the matching sample size ⌊2 s* log p⌋.
inline Index random_support_size(Index p) { return static_cast<Index>(std::floor(0.5 * std::sqrt(static_cast<double>(p)))); }
inline Index random_support_samples(Index p) {
  return static_cast<Index>(std::floor(2.0 * random_support_size(p) * std::log(static_cast<double>(p))));
}

/// Columns of the heteroscedastic model: X₆, X₁₂, X₁₅, X₂₀ carry the location
/// effect, X₁ the scale effect.
inline constexpr Index kHeteroScaleColumn = 0;
inline constexpr Index kHeteroMeanColumns[] = {5, 11, 14, 19};

inline Matrix covariance_matrix(const Covariance& c, Index p) {
  Matrix s = Matrix::Identity(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) {
      if (i == j) continue;
      if (c.kind == CovarianceKind::Ar) s(i, j) = std::pow(c.param, static_cast<double>(std::abs(i - j)));
      else if (c.kind == CovarianceKind::Cs) s(i, j) = c.param;
    }
  return s;
}

inline Vector make_beta(const SyntheticSpec& spec) {
  const Index p = spec.p;
  Vector beta = Vector::Zero(p);
  switch (spec.beta_pattern) {
    case BetaPattern::AlternatingDecay:
      for (Index j = 1; j <= p; ++j)
        beta(j - 1) = (j % 2 == 0 ? 1.0 : -1.0) * std::exp(-(2.0 * j - 1.0) / 20.0);
      break;
    case BetaPattern::Fixed16: {
      static constexpr double head[] = {2, 0, 1.5, 0, 0.8, 0, 0, 1, 0, 1.75, 0, 0, 0.75, 0, 0, 0.3};
      for (Index j = 0; j < std::min<Index>(p, 16); ++j) beta(j) = head[j];
      break;
    }
    case BetaPattern::RandomSupport: {
      const Index s = std::max<Index>(1, random_support_size(p));
      CounterRng rng(spec.seed, rng_stream::kBeta);
      std::vector<Index> idx(static_cast<std::size_t>(p));
      for (Index j = 0; j < p; ++j) idx[static_cast<std::size_t>(j)] = j;
      for (Index j = 0; j < s; ++j) {  // partial Fisher–Yates
        const auto pick = j + static_cast<Index>(rng.below(static_cast<std::uint64_t>(p - j)));
        std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick)]);
      }
      for (Index j = 0; j < s; ++j) beta(idx[static_cast<std::size_t>(j)]) = rng.normal();
      break;
    }
    case BetaPattern::Hetero:
      for (Index j : kHeteroMeanColumns) beta(j) = 1.0;
      break;
  }
  return beta;
}

inline void fill_row(const SyntheticSpec& spec, Index i, Eigen::Ref<Vector> row) {
  CounterRng rng(spec.seed, rng_stream::kCovariates + static_cast<std::uint64_t>(i));
  const Index p = spec.p;
  const auto& c = spec.covariance;
  switch (c.kind) {
    case CovarianceKind::Identity:
      for (Index j = 0; j < p; ++j) row(j) = rng.normal();
      break;
    case CovarianceKind::Ar: {
      const double s = std::sqrt(1.0 - c.param * c.param);
      row(0) = rng.normal();
      for (Index j = 1; j < p; ++j) row(j) = c.param * row(j - 1) + s * rng.normal();
      break;
    }
    case CovarianceKind::Cs: {
      const double g = std::sqrt(c.param) * rng.normal();
      const double s = std::sqrt(1.0 - c.param);
      for (Index j = 0; j < p; ++j) row(j) = g + s * rng.normal();
      break;
    }
  }
}

inline SyntheticDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const Index n = spec.n;
  const Index p = spec.p;
  Vector beta = make_beta(spec);

  Matrix x(n, p);
  Vector row(p);
  for (Index i = 0; i < n; ++i) {
    fill_row(spec, i, row);
    x.row(i) = row.transpose();
  }
  const Vector eps = sample_noise(spec.noise, n, spec.seed);

  double kappa = 1.0;
  Vector y(n);
  if (spec.beta_pattern == BetaPattern::Hetero) {
    // X₁ = Φ(X̃₁) is uniform on (0,1), so the τ-quantile of the response
    // moves linearly with X₁ except at the median.
    for (Index i = 0; i < n; ++i) x(i, kHeteroScaleColumn) = normal_cdf(x(i, kHeteroScaleColumn));
    y = x * beta + spec.hetero_scale * x.col(kHeteroScaleColumn).cwiseProduct(eps);
  } else {
    if (spec.snr) {
      const Matrix sigma = covariance_matrix(spec.covariance, p);
      const double signal = std::sqrt(beta.dot(sigma * beta));
      kappa = signal / (*spec.snr * *noise_sd(spec.noise));
    }
    y = x * beta + kappa * eps;
  }

  SyntheticDataset out;
  if (spec.add_intercept) {
    Matrix xi(n, p + 1);
    xi.col(0).setOnes();
    xi.rightCols(p) = x;
    Vector bi(p + 1);
    bi(0) = 0.0;
    bi.tail(p) = beta;
    out.problem = make_problem(std::move(xi), std::move(y), spec.tau, true);
    beta = std::move(bi);
  } else {
    out.problem = make_problem(std::move(x), std::move(y), spec.tau, false);
  }
  for (Index j = 0; j < beta.size(); ++j)
    if (beta(j) != 0.0) out.support.push_back(j);
  out.beta_true = std::move(beta);
  out.kappa = kappa;
  return out;
}

struct SelectionMetrics {
  double l2_error = 0.0;
  int fp = 0;
  int fn = 0;
  int size = 0;
};

/// FP/FN/size under the N_nz threshold; l2_error = ‖β̂ − β*‖.
inline SelectionMetrics selection_metrics(const Vector& estimate, const Vector& truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("estimate and truth differ in length");
  SelectionMetrics m;
  const double cut = stage_rules::kNnzRelative *
                     std::max(1.0, estimate.size() ? estimate.cwiseAbs().maxCoeff() : 0.0);
  for (Index j = 0; j < estimate.size(); ++j) {
    const bool selected = std::abs(estimate(j)) > cut;
    const bool active = truth(j) != 0.0;
    m.size += selected;
    m.fp += selected && !active;
    m.fn += !selected && active;
  }
  m.l2_error = (estimate - truth).norm();
  return m;
}

inline SelectionMetrics selection_metrics(const Vector& estimate, const SyntheticDataset& truth) {
  return selection_metrics(estimate, truth.beta_true);
}

/// Replication seeds: master ⊕ replication index.
inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t rep) { return master ^ rep; }

}  // namespace zeroqr
