#include "oracles.hpp"
#include "zeroqr/datagen.hpp"
#include "zeroqr/mscra.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace zeroqr;

namespace {

QuantileProblem random_problem(int n, int p, double tau, std::uint64_t seed) {
  auto ins = oracle::gaussian_instance(n, p, std::min(5, p), 0.5, seed);
  return make_problem(ins.x, ins.y, tau);
}

}  // namespace

TEST(RhoSchedule, Examples) {
  EXPECT_NEAR(rho_schedule(1, Vector::Constant(3, 0.1), 1.0), 10.0 / 3.0, 1e-15);
  EXPECT_EQ(rho_schedule(1, Vector::Constant(3, 2.0), 1.0), 1.0);
  EXPECT_EQ(rho_schedule(2, Vector::Constant(3, 1.0), 2.0), 2.5);
  EXPECT_EQ(rho_schedule(1, Vector::Zero(3), 1.0), 1.0);
  // capped growth never falls below the previous value
  EXPECT_EQ(rho_schedule(3, Vector::Constant(3, 1e9), 2.0), 2.0);
  EXPECT_EQ(rho_schedule(5, Vector::Constant(3, 0.01), 2.0), 2.0);
}

TEST(LambdaGrid, Endpoints) {
  const auto pr = random_problem(30, 10, 0.5, 1);
  const double scale = pr.design.cwiseAbs().colwise().sum().maxCoeff() / 30.0;
  const Vector g = lambda_grid(pr, 0.02, 0.25, 50);
  ASSERT_EQ(g.size(), 50);
  EXPECT_DOUBLE_EQ(g(0), std::max(0.01, 0.02 * scale));
  EXPECT_DOUBLE_EQ(g(49), std::max(0.01, 0.25 * scale));
  const Vector flat = lambda_grid(pr, 0.1, 0.1, 4);
  EXPECT_TRUE((flat.array() == flat(0)).all());
  const auto tiny = make_problem(1e-4 * pr.design, pr.response, 0.5);
  EXPECT_TRUE((lambda_grid(tiny, 0.02, 0.25, 5).array() == 0.01).all());
}

TEST(StageWeights, FirstStageIsLambdaAndInterceptFree) {
  const auto pr = random_problem(10, 4, 0.5, 2);
  EXPECT_EQ(stage_weights(pr, 0.3, Vector::Zero(4)), Vector::Constant(4, 0.3));
  Matrix x = pr.design;
  x.col(0).setOnes();
  const auto with_icpt = make_problem(x, pr.response, 0.5, true);
  EXPECT_EQ(stage_weights(with_icpt, 0.3, Vector::Zero(4))(0), 0.0);
}

TEST(StageKkt, ZeroAtConstructedPointAndLipschitzInZ) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  const int n = 25, p = 9;
  const double tau = 0.4, lambda = 0.2;
  const Matrix x = oracle::gaussian_instance(n, p, 1, 0.0, 3).x;
  Vector z(n), v(n);
  for (int i = 0; i < n; ++i) {
    z(i) = i % 5 == 0 ? 0.0 : nd(gen);
    v(i) = z(i) > 0 ? tau / n : z(i) < 0 ? (tau - 1.0) / n : 0.0;
  }
  // pick weights w so that λ(1 − w_j) = |(Xᵀv)_j| on the support, bigger off it
  const Vector g = x.transpose() * v;
  const double gmax = g.cwiseAbs().maxCoeff();
  const double lam = std::max(lambda, 2 * gmax);
  Vector beta = Vector::Zero(p), w(p);
  for (int j = 0; j < p; ++j) {
    if (j % 2 == 0) {
      beta(j) = g(j) >= 0 ? 1.0 + j : -1.0 - j;
      w(j) = 1.0 - std::abs(g(j)) / lam;
    } else {
      w(j) = 0.1;
    }
  }
  const auto pr = make_problem(x, x * beta + z, tau);
  EXPECT_LE(stage_kkt_residual(beta, z, v, pr, lam, w), 1e-12);
  const double scale = 1.0 + pr.response.norm();
  for (double eps : {1e-6, 1e-3, 0.1}) {
    Vector zp = z;
    zp(3) += eps;
    const double d = stage_kkt_residual(beta, zp, v, pr, lam, w) - stage_kkt_residual(beta, z, v, pr, lam, w);
    EXPECT_LE(std::abs(d), 2 * eps / scale + 1e-15);
  }
}

TEST(MscraFit, SingleStageIsPlainL1Fit) {
  const auto pr = random_problem(80, 40, 0.5, 4);
  MscraConfig cfg;
  cfg.lambda = 0.05;
  cfg.max_stages = 1;
  const auto res = mscra_fit(pr, cfg);
  const auto [st, rep] = ppa_solve(SubproblemSpec::make(pr, Vector::Constant(40, 0.05)), PdsnConfig{});
  ASSERT_EQ(res.history.size(), 1u);
  EXPECT_LE(std::abs(res.history[0].solver_report.objective - rep.objective), 1e-7 * (1 + rep.objective));
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.stop_reason, "max_stages reached");
}

TEST(MscraFit, HugeLambdaGivesEmptyModel) {
  const auto pr = random_problem(40, 30, 0.5, 5);
  MscraConfig cfg;
  cfg.lambda = 1e3;
  const auto res = mscra_fit(pr, cfg);
  EXPECT_EQ(res.final_stage.nnz, 0);
  EXPECT_TRUE(res.history.front().w.isZero(0.0));
  EXPECT_TRUE(res.converged);
  ASSERT_FALSE(res.warnings.empty());
  EXPECT_NE(res.warnings.front().find("degenerate"), std::string::npos);
}

TEST(MscraFit, StageInvariants) {
  for (int rep = 0; rep < 5; ++rep) {
    const auto pr = random_problem(100, 200, 0.3 + 0.1 * rep, 10 + rep);
    MscraConfig cfg;
    cfg.lambda = 0.03;
    const auto res = mscra_fit(pr, cfg);
    double prev_rho = 0.0;
    for (const auto& st : res.history) {
      EXPECT_TRUE((st.w.array() >= 0.0).all() && (st.w.array() <= 1.0).all());
      EXPECT_GE(st.rho, prev_rho);
      if (st.k >= 4) {
        EXPECT_EQ(st.rho, prev_rho);
      }
      prev_rho = st.rho;
      // ρ|β_i| ∈ ∂ψ(w_i): Fenchel equality of the surrogate
      for (Index i = 0; i < pr.features(); ++i) {
        const double s = st.rho * std::abs(st.beta(i));
        EXPECT_NEAR(cfg.surrogate.phi(st.w(i)) + cfg.surrogate.psi_star(s), s * st.w(i), 1e-8);
      }
      if (st.solver_report.converged) {
        EXPECT_LE(st.err_k, cfg.stage_tol);
      }
    }
  }
}

TEST(MscraFit, MajorizationMinimizationIsMonotone) {
  for (int rep = 0; rep < 5; ++rep) {
    const auto pr = random_problem(50, 100, 0.5, 20 + rep);
    MscraConfig cfg;
    cfg.lambda = 0.04;
    cfg.fixed_rho = 2.0;
    cfg.pdsn.eps_ppa_0 = 1e-10;
    cfg.pdsn.eps_ppa_floor = 1e-10;
    cfg.stage_tol = 0.0;
    cfg.err_drift_tol = -1.0;
    const auto res = mscra_fit(pr, cfg);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& st : res.history) {
      const double theta = dc_objective(pr, st.beta, cfg.lambda, 2.0, cfg.surrogate);
      EXPECT_LE(theta, prev + 1e-8) << "stage " << st.k;
      prev = theta;
    }
  }
}

TEST(MscraFit, AdmmPathAgreesWithPdsn) {
  const auto pr = random_problem(100, 60, 0.5, 30);
  MscraConfig a, b;
  a.lambda = b.lambda = 0.05;
  b.solver = SolverKind::Admm;
  b.admm.j_max = 50000;
  b.admm.adapt_slowdown = 1;
  const auto ra = mscra_fit(pr, a);
  const auto rb = mscra_fit(pr, b);
  EXPECT_EQ(ra.history.front().nnz, rb.history.front().nnz);
  EXPECT_LE(std::abs(ra.history.front().solver_report.objective - rb.history.front().solver_report.objective),
            1e-5 * ra.history.front().solver_report.objective);
}

TEST(MscraFit, RandomSupportRecoveryMatchesAdmmPath) {
  // p = 300, s* = 8, n = 2⌊2 s* log p⌋, λ from the 37.5/n rule rescaled to this n.
  // Standard-normal coefficients leave a few entries below the noise level, so
  // exact recovery is out of reach; the band is the ADMM path on the same seeds.
  int pdsn_errors = 0, admm_errors = 0;
  for (int rep = 0; rep < 10; ++rep) {
    SyntheticSpec spec;
    spec.p = 300;
    spec.n = 2 * static_cast<Index>(std::floor(2 * 8 * std::log(300.0)));
    spec.beta_pattern = BetaPattern::RandomSupport;
    spec.covariance = {CovarianceKind::Cs, 0.6};
    spec.noise = {NoiseKind::Laplace, 0.0};
    spec.seed = 40 + rep;
    const auto data = generate(spec);
    MscraConfig cfg;
    cfg.lambda = 37.5 / 1173.0 * std::sqrt(1173.0 / spec.n);
    const auto m = selection_metrics(mscra_fit(data.problem, cfg).final_stage.beta, data);
    cfg.solver = SolverKind::Admm;
    const auto ma = selection_metrics(mscra_fit(data.problem, cfg).final_stage.beta, data);
    EXPECT_LE(m.fp, 3) << "seed " << spec.seed;
    EXPECT_LT(m.fn, 8) << "seed " << spec.seed;
    pdsn_errors += m.fp + m.fn;
    admm_errors += ma.fp + ma.fn;
  }
  EXPECT_LE(pdsn_errors, admm_errors + 10);  // mean FP+FN within one of the ADMM path
}

TEST(SubproblemInexactness, ZeroAtOptimumOfOneDimensionalInstance) {
  // min (1/3)Σθ(y_i − β) + λ|β| with τ = 0.5: the median of (−1, 2, 5) when λ is small
  Vector y(3);
  y << -1, 2, 5;
  const auto pr = make_problem(Matrix::Ones(3, 1), y, 0.5);
  EXPECT_NEAR(subproblem_inexactness(Vector::Constant(1, 2.0), Vector::Zero(1), pr, 0.01), 0.0, 1e-12);
}

TEST(SubproblemInexactness, EqualsGradientNormInSmoothRegion) {
  // away from kinks the objective is affine in β; the residual is its gradient norm
  Vector y(3);
  y << -1, 2, 5;
  const auto pr = make_problem(Matrix::Ones(3, 1), y, 0.5);
  for (double t : {0.1, 0.5, 0.9}) {
    const double beta = 2.0 + t;  // residuals (−3−t, −t, 3−t)
    const double lam = 0.01;
    // d/dβ (1/3)Σθ(y_i − β) = (1/3)Σ[(1 − τ)1{y_i < β} − τ1{y_i > β}] = (1/3)(0.5·2 − 0.5·1)
    const double grad = (0.5 * 2 - 0.5 * 1) / 3.0 + lam;
    EXPECT_NEAR(subproblem_inexactness(Vector::Constant(1, beta), Vector::Zero(1), pr, lam), grad, 1e-12);
  }
}

TEST(SubproblemInexactness, MatchesSubgradientEnumeration) {
  // n = 3, p = 2: dist(0, ∂F(β)) by enumerating the extreme points of the subdifferential box
  std::mt19937_64 gen(50);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 30; ++rep) {
    Matrix x(3, 2);
    for (Index i = 0; i < 6; ++i) x.data()[i] = nd(gen);
    Vector beta(2);
    beta << nd(gen), rep % 3 == 0 ? 0.0 : nd(gen);
    Vector y = x * beta;
    // make one residual exactly zero, the others random
    y(1) += nd(gen);
    y(2) += nd(gen);
    const double tau = 0.3, lambda = 0.2;
    const auto pr = make_problem(x, y, tau);
    const Vector r = y - x * beta;
    // F's subdifferential: −(1/3)Σ x_i s_i + λ ∂|β|, s_i = τ or τ−1 or [τ−1, τ] at r_i = 0
    double best = 1e300;
    const int steps = 400;
    for (int a = 0; a <= steps; ++a) {
      const double s0 = (tau - 1.0) + a / static_cast<double>(steps);
      Vector g = Vector::Zero(2);
      for (int i = 0; i < 3; ++i) {
        const double s = std::abs(r(i)) < 1e-12 ? s0 : (r(i) > 0 ? tau : tau - 1.0);
        g -= x.row(i).transpose() * s / 3.0;
      }
      double d2 = 0.0;
      for (int j = 0; j < 2; ++j) {
        if (beta(j) != 0.0) d2 += std::pow(g(j) + lambda * (beta(j) > 0 ? 1 : -1), 2);
        else d2 += std::pow(std::max(0.0, std::abs(g(j)) - lambda), 2);
      }
      best = std::min(best, std::sqrt(d2));
    }
    const double got = subproblem_inexactness(beta, Vector::Zero(2), pr, lambda);
    EXPECT_LE(got, best + 1e-9);
    EXPECT_GE(got, best - 2e-3 * (1 + best));  // grid resolution of the oracle
  }
}

TEST(MscraConfig, Validation) {
  MscraConfig cfg;
  cfg.lambda = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_NEAR(MscraConfig::from_nu(4.0).lambda, 0.25, 1e-15);
  EXPECT_EQ(parse_solver("admm"), SolverKind::Admm);
  EXPECT_THROW(parse_solver("ipm"), std::invalid_argument);
}
