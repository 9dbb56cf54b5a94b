#include "oracles.hpp"
#include "zeroqr/bench.hpp"
#include "zeroqr/io.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <sstream>

using namespace zeroqr;

namespace {

QuantileProblem small_problem(double tau, std::uint64_t seed) {
  auto ins = oracle::gaussian_instance(80, 40, 4, 0.5, seed);
  return make_problem(ins.x, ins.y, tau);
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0, 1e-7}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(ProblemCsv, WriteThenLoad) {
  const auto pr = small_problem(0.5, 1);
  std::stringstream buf;
  write_problem_csv(buf, pr);
  const auto back = parse_csv(buf, true, false, 0.5);
  EXPECT_EQ(back.design, pr.design);
  EXPECT_EQ(back.response, pr.response);
}

TEST(FitReport, JsonRoundTrip) {
  const auto pr = small_problem(0.3, 2);
  MscraConfig cfg;
  cfg.lambda = 0.05;
  const auto res = mscra_fit(pr, cfg);
  const auto rep = make_fit_report(res, pr, cfg);
  const Json j = to_json(rep);
  const auto back = fit_report_from_json(Json::parse(j.dump()));
  EXPECT_TRUE(back == rep);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(rep.stages.size(), res.history.size());
  EXPECT_EQ(rep.nnz, res.final_stage.nnz);
}

TEST(FitReport, TimingOffIsReproducible) {
  const auto pr = small_problem(0.6, 3);
  MscraConfig cfg;
  cfg.lambda = 0.05;
  const auto a = to_json(make_fit_report(mscra_fit(pr, cfg), pr, cfg, false)).dump();
  const auto b = to_json(make_fit_report(mscra_fit(pr, cfg), pr, cfg, false)).dump();
  EXPECT_EQ(a, b);
}

TEST(SolverReport, JsonRoundTrip) {
  const auto pr = small_problem(0.5, 4);
  const auto [st, rep] = ppa_solve(SubproblemSpec::make(pr, Vector::Constant(40, 0.05)), PdsnConfig{});
  const auto back = solver_report_from_json(Json::parse(to_json(rep).dump()));
  EXPECT_TRUE(back == rep);
}

TEST(LambdaSweep, RowsSortedAndSolversAgree) {
  const auto pr = small_problem(0.5, 5);
  LambdaSweepOptions opt;
  opt.admm.j_max = 50000;
  const Vector grid = lambda_grid(pr, 0.05, 0.2, 5);
  const auto rows = lambda_sweep(pr, grid, opt);
  ASSERT_EQ(rows.size(), 10u);
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    EXPECT_EQ(rows[i].lambda, rows[i + 1].lambda);
    EXPECT_EQ(rows[i].solver, "admm");
    EXPECT_EQ(rows[i + 1].solver, "pdsn");
    if (i) {
      EXPECT_GE(rows[i].lambda, rows[i - 1].lambda);
    }
    EXPECT_TRUE(rows[i].converged && rows[i + 1].converged);
    EXPECT_LE(std::abs(rows[i].objective - rows[i + 1].objective), 1e-4 * std::max(1.0, rows[i + 1].objective));
  }
  std::ostringstream csv;
  write_lambda_sweep_csv(csv, rows);
  EXPECT_EQ(lines(csv.str()).size(), 11u);
}

TEST(TauGrid, Endpoints) {
  const auto g = tau_grid(0.05, 0.95, 0.05);
  ASSERT_EQ(g.size(), 19u);
  EXPECT_EQ(g.front(), 0.05);
  EXPECT_EQ(g.back(), 0.95);
  EXPECT_EQ(tau_grid(0.3, 0.3, 0.05), std::vector<double>{0.3});
  EXPECT_THROW(tau_grid(0.0, 0.5, 0.1), std::invalid_argument);
  EXPECT_THROW(tau_grid(0.5, 1.0, 0.1), std::invalid_argument);
  try {
    tau_grid(1.5, 1.5, 0.1);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "tau must be in (0,1)");
  }
}

TEST(TauSweep, SingleTauGivesOneRow) {
  TauSweepOptions opt;
  opt.data.n = 60;
  opt.data.p = 30;
  opt.taus = {0.4};
  opt.reps = 2;
  opt.lambda = 0.05;
  const auto rows = tau_sweep(opt);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].reps, 2);
  std::ostringstream csv;
  write_tau_sweep_csv(csv, rows);
  EXPECT_EQ(lines(csv.str()).size(), 2u);
}

TEST(TauSweep, SymmetricNoiseGivesMirroredError) {
  // Laplace noise is symmetric, so τ and 1 − τ see the same problem up to sign of ε
  TauSweepOptions opt;
  opt.data.n = 150;
  opt.data.p = 100;
  opt.data.beta_pattern = BetaPattern::Fixed16;
  opt.data.noise = {NoiseKind::Laplace, 0.0};
  opt.taus = {0.2, 0.8};
  opt.reps = 12;
  opt.lambda = 0.03;
  opt.timing = false;
  const auto rows = tau_sweep(opt);
  const double se = std::sqrt((rows[0].l2_error.sd * rows[0].l2_error.sd + rows[1].l2_error.sd * rows[1].l2_error.sd) /
                              opt.reps);
  EXPECT_LE(std::abs(rows[0].l2_error.mean - rows[1].l2_error.mean), 2 * se);
}

TEST(Bench, RecordsAndAggregate) {
  BenchOptions opt;
  opt.data.n = 80;
  opt.data.p = 60;
  opt.reps = 10;
  opt.timing = false;
  const auto run = bench_table(opt);
  ASSERT_EQ(run.records.size(), 10u);
  double l2 = 0.0, fp = 0.0;
  for (const auto& r : run.records) {
    l2 += r.l2_error;
    fp += r.fp;
  }
  EXPECT_NEAR(run.aggregate.l2_error.mean, l2 / 10, 1e-12);
  EXPECT_NEAR(run.aggregate.fp.mean, fp / 10, 1e-12);
  std::ostringstream out;
  write_bench_jsonl(out, run);
  const auto ls = lines(out.str());
  ASSERT_EQ(ls.size(), 11u);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto j = Json::parse(ls[i]);
    EXPECT_EQ(j.at("type"), "replication");
    const auto back = bench_record_from_json(j);
    EXPECT_EQ(back.l2_error, run.records[i].l2_error);
    EXPECT_EQ(back.seed, run.records[i].seed);
  }
  EXPECT_EQ(Json::parse(ls[10]).at("type"), "aggregate");
}

TEST(Bench, ThreadCountDoesNotChangeOutput) {
  BenchOptions opt;
  opt.data.n = 60;
  opt.data.p = 40;
  opt.reps = 4;
  opt.timing = false;
  std::ostringstream a, b;
  write_bench_jsonl(a, bench_table(opt));
  opt.threads = 3;
  write_bench_jsonl(b, bench_table(opt));
  EXPECT_EQ(a.str(), b.str());
}

TEST(ParallelFor, VisitsEveryIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(50, 3,
                            [](std::size_t i) {
                              if (i == 17) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(MeanSd, Examples) {
  const auto m = mean_sd({1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.sd, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_sd({7.0}).sd, 0.0);
}

TEST(Sidecar, DescribesDataset) {
  SyntheticSpec spec;
  spec.n = 10;
  spec.p = 20;
  const auto d = generate(spec);
  const Json j = dataset_sidecar(spec, d);
  EXPECT_EQ(j.at("n").get<int>(), 10);
  EXPECT_EQ(vector_from_json(j.at("beta_true")), d.beta_true);
}
