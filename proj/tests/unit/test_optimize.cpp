#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "qanneal/optimize.hpp"

using namespace qanneal;

namespace {

OptimizerConfig box(double lo, double hi, int iters) {
  OptimizerConfig cfg;
  cfg.lower = lo;
  cfg.upper = hi;
  cfg.max_iters = iters;
  cfg.f_tol = 1e-14;
  cfg.x_tol = 1e-10;
  return cfg;
}

void expect_monotone(const OptimizationRun& run) {
  for (std::size_t k = 1; k < run.iterates.size(); ++k) EXPECT_LE(run.iterates[k].y, run.iterates[k - 1].y);
}

AnnealingProblem single_qubit_problem() {
  SpinGraph g = make_graph(1, {});
  g.J = RealMatrix::Zero(1, 1);
  g.m0 = 0.5;
  AnnealingProblem prob;
  prob.h = make_hamiltonians(g, {10.0, 0.5, ScheduleMode::annealed});
  prob.bath = {2.0, 30.0, 1.0};
  prob.evolve.t_max = 3.0;
  prob.evolve.sample_dt = 0.06;
  return prob;
}

}  // namespace

TEST(NelderMead, OneDimensionalQuadratic) {
  const OptimizerConfig cfg = box(1e-3, 3.0, 200);
  const auto run = nelder_mead([](const RealVector& x) { return (x(0) - 1.0) * (x(0) - 1.0); },
                               project_to_bounds(RealVector::Zero(1), cfg), cfg);
  EXPECT_NEAR(run.best.x(0), 1.0, 1e-4);
  EXPECT_LE(run.iterates.back().iter, 200);
  expect_monotone(run);
}

TEST(NelderMead, RosenbrockInPositiveQuadrant) {
  const OptimizerConfig cfg = box(0.01, 3.0, 2000);
  RealVector x0(2);
  x0 << -1.2, 1.0;
  auto rosen = [](const RealVector& x) {
    return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
  };
  const auto run = nelder_mead(rosen, project_to_bounds(x0, cfg), cfg);
  EXPECT_LT(run.best.y, 1e-3);
  expect_monotone(run);
}

TEST(NelderMead, CandidatesAreProjected) {
  const OptimizerConfig cfg = box(0.01, 2.5, 100);
  // minimum outside the box drives reflections below zero
  auto f = [](const RealVector& x) {
    EXPECT_GE(x.minCoeff(), 0.01);
    EXPECT_LE(x.maxCoeff(), 2.5);
    return (x.array() + 1.0).square().sum();
  };
  RealVector x0 = RealVector::Constant(3, 0.3);
  const auto run = nelder_mead(f, x0, cfg);
  for (const auto& e : run.evaluations) {
    EXPECT_GE(e.x.minCoeff(), 0.01);
    EXPECT_LE(e.x.maxCoeff(), 2.5);
  }
  EXPECT_NEAR(run.best.x.maxCoeff(), 0.01, 1e-6);
}

TEST(NelderMead, ZeroIterationsReturnsInitialEvaluation) {
  const OptimizerConfig cfg = box(0.01, 2.5, 0);
  const auto run = nelder_mead([](const RealVector& x) { return x.sum(); }, RealVector::Constant(2, 1.0), cfg);
  ASSERT_EQ(run.iterates.size(), 1u);
  EXPECT_EQ(run.evaluation_count(), 1u);
  EXPECT_EQ(run.iterates.front().iter, 0);
  EXPECT_DOUBLE_EQ(run.best.y, 2.0);
}

TEST(NelderMead, NonFiniteIsPenalised) {
  const OptimizerConfig cfg = box(0.01, 3.0, 200);
  auto f = [](const RealVector& x) {
    return x(0) > 1.5 ? std::numeric_limits<double>::quiet_NaN() : (x(0) - 1.2) * (x(0) - 1.2);
  };
  const auto run = nelder_mead(f, RealVector::Constant(1, 1.4), cfg);
  EXPECT_NEAR(run.best.x(0), 1.2, 1e-4);
  expect_monotone(run);

  auto all_bad = [](const RealVector&) { return std::numeric_limits<double>::infinity(); };
  try {
    nelder_mead(all_bad, RealVector::Constant(2, 1.0), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::optimization_failure);
  }
}

TEST(NelderMead, Validation) {
  OptimizerConfig cfg;
  EXPECT_THROW(nelder_mead([](const RealVector&) { return 0.0; }, RealVector::Constant(1, 3.0), cfg), Error);
  cfg.lower = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = OptimizerConfig{};
  cfg.gamma = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = OptimizerConfig{};
  cfg.sigma = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(NelderMead, Deterministic) {
  const OptimizerConfig cfg = box(0.01, 3.0, 60);
  auto f = [](const RealVector& x) { return std::sin(3 * x(0)) + std::pow(x(1) - 0.7, 2); };
  const auto a = nelder_mead(f, RealVector::Constant(2, 1.0), cfg);
  const auto b = nelder_mead(f, RealVector::Constant(2, 1.0), cfg);
  ASSERT_EQ(a.iterates.size(), b.iterates.size());
  for (std::size_t k = 0; k < a.iterates.size(); ++k) {
    EXPECT_EQ(a.iterates[k].y, b.iterates[k].y);
    EXPECT_EQ(a.iterates[k].x, b.iterates[k].x);
  }
}

TEST(AnnealingObjective, RepeatableAndInRange) {
  const auto prob = single_qubit_problem();
  const auto f = annealing_objective(prob);
  const RealVector k = RealVector::Constant(1, 0.8);
  const auto a = f(k), b = f(k);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.p_fin, b.p_fin);
  EXPECT_GE(a.y, 0.0);
  EXPECT_LE(a.y, 1.0);

  AnnealingProblem inst = prob;
  inst.target = FidelityTarget::instantaneous;
  // the run starts in the instantaneous ground state
  EXPECT_NEAR(evaluate_annealing(inst, k).y, 0.0, 1e-12);
}

TEST(OptimizeCouplings, UniformSingleQubitBeatsGridScan) {
  const auto prob = single_qubit_problem();
  OptimizerConfig cfg;
  cfg.max_iters = 40;
  double grid_best = 2.0;
  for (int i = 0; i < 50; ++i) {
    const double k = cfg.lower + (cfg.upper - cfg.lower) * i / 49.0;
    grid_best = std::min(grid_best, evaluate_annealing(prob, RealVector::Constant(1, k)).y);
  }
  // the objective is monotone in kappa here; start from the middle of the box
  const auto run = optimize_couplings(prob, CouplingSearch::uniform, RealVector::Constant(1, 1.25), cfg);
  EXPECT_LE(run.best.y, grid_best + 1e-9);
  EXPECT_GE(run.best.x(0), cfg.lower);
  EXPECT_LE(run.best.x(0), cfg.upper);
  expect_monotone(run);
}

TEST(Cumulative, Examples) {
  auto r = cumulative_probability({0.5, 0.5, 0.5});
  EXPECT_EQ(r.cumulative.back(), 0.125);
  r = cumulative_probability({0.3, 1.0, 0.2});
  EXPECT_EQ(r.cumulative[1], 0.0);
  EXPECT_EQ(r.cumulative[2], 0.0);
  EXPECT_THROW(cumulative_probability({0.5, 1.1}), Error);
  EXPECT_THROW(cumulative_probability({-0.01}), Error);
  EXPECT_NO_THROW(cumulative_probability({1.0 + 1e-12, -1e-12}));
}

TEST(Cumulative, FixedProtocolIsExactPower) {
  const double p1 = 0.3141592653589793;
  const auto r = cumulative_probability(std::vector<double>(20, p1));
  double power = 1.0;
  for (std::size_t n = 0; n < 20; ++n) {
    power *= 1.0 - p1;
    EXPECT_EQ(r.cumulative[n], power);
    if (n > 0) EXPECT_LE(r.cumulative[n], r.cumulative[n - 1]);
  }
}

TEST(Cumulative, IncreasingRunsBeatFixed) {
  const std::vector<double> p{0.2, 0.25, 0.3, 0.4, 0.55};
  const auto r = cumulative_probability(p);
  double power = 1.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    power *= 1.0 - p[0];
    if (n >= 1) EXPECT_LT(r.cumulative[n], power);
  }
}

TEST(OptimizationCsv, HeaderAndRows) {
  const OptimizerConfig cfg = box(0.01, 3.0, 3);
  const auto run = nelder_mead([](const RealVector& x) { return x.squaredNorm(); }, RealVector::Constant(2, 1.0), cfg);
  std::ostringstream os;
  write_optimization_csv(run, os);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "iter,y,P_fin,kappa_mean,kappa_0,kappa_1");
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), run.iterates.size() + 1);
  std::ostringstream cs;
  write_cumulative_csv(cumulative_probability({0.5, 0.5}), cs);
  EXPECT_EQ(cs.str(), "n,P_n,P_c\n1,0.5,0.5\n2,0.5,0.25\n");
}

TEST(NelderMead, ZeroTolerancesRunTheFullBudget) {
  OptimizerConfig cfg = box(0.01, 2.5, 25);
  cfg.f_tol = cfg.x_tol = 0.0;
  // the minimum sits in a corner of the box, where the projected simplex collapses
  const auto run = nelder_mead([](const RealVector& x) { return -x.sum(); }, RealVector::Constant(2, 1.0), cfg);
  EXPECT_EQ(run.iterates.back().iter, 25);
  EXPECT_EQ(run.stop_reason, "max_iters");
  EXPECT_DOUBLE_EQ(run.best.y, -5.0);
}
