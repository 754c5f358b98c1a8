#include <gtest/gtest.h>

#include "common.hpp"

using namespace lqsadp;
using namespace lqsadp::test;

namespace {

const DataMatrices& exact_data() {
  static const DataMatrices d = collect_data_exact(
      propagate_moments(two_state_system(), Mat::Zero(1, 2), three_sines(), two_state_rollout()));
  return d;
}

const DataMatrices& unexcited_data() {
  static const DataMatrices d = collect_data_exact(propagate_moments(
      two_state_system(), Mat::Zero(1, 2), ExplorationSignal::none(1), two_state_rollout()));
  return d;
}

const RunReport& model_reference() {
  static const RunReport r = run_model_pi(two_state_system(), two_state_cost(), Mat::Zero(1, 2));
  return r;
}

Vec stack_triple(const EvaluationTriple& t) {
  const Index n = t.P.dim(), m = t.H.dim();
  Vec z(regression_columns(n, m));
  z << vech(t.P), vec(t.M), vech(t.H);
  return z;
}

}  // namespace

TEST(CheckRank, RequiredCount) {
  EXPECT_EQ(regression_columns(2, 1), 6);
  EXPECT_EQ(regression_columns(3, 2), 6 + 6 + 3);
  const RankReport r = check_rank(exact_data());
  EXPECT_EQ(r.required, 6u);
}

TEST(CheckRank, ExcitedDataPasses) {
  const RankReport r = check_rank(exact_data());
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.rank, 6u);
  EXPECT_EQ(r.singular_values.size(), 7u);  // [eta_xx | eta_xu | eta_ubar] has 4 + 2 + 1 columns
  EXPECT_DOUBLE_EQ(r.threshold, 1e-8);
  for (std::size_t i = 1; i < r.singular_values.size(); ++i)
    EXPECT_LE(r.singular_values[i], r.singular_values[i - 1]);
}

TEST(CheckRank, ZeroExplorationFails) {
  const RankReport r = check_rank(unexcited_data());
  EXPECT_FALSE(r.passed);
  EXPECT_LT(r.rank, r.required);
}

TEST(CheckRank, ZeroExplorationFailsForAnyBehaviourGain) {
  Gen g(61);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat k0 = g.matrix(1, 2, 0.3);
    if (!is_ms_stabilizing(two_state_system(), k0).stable) continue;
    const auto d = collect_data_exact(propagate_moments(two_state_system(), k0,
                                                        ExplorationSignal::none(1),
                                                        two_state_rollout()));
    EXPECT_FALSE(check_rank(d).passed);
  }
}

TEST(NumericalRank, Cutoff) {
  Mat x = Mat::Zero(4, 3);
  x(0, 0) = 1.0;
  x(1, 1) = 1e-7;
  x(2, 2) = 1e-9;
  const RankReport r = numerical_rank(x, 3);
  EXPECT_EQ(r.rank, 2u);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(numerical_rank(Mat::Zero(3, 3), 3).rank, 0u);
}

TEST(Assemble, ZeroGainBlocks) {
  const DataMatrices& d = exact_data();
  const CostWeights w = two_state_cost();
  const RegressionSystem rs = assemble(d, w, Mat::Zero(1, 2));
  ASSERT_EQ(rs.Psi.cols(), 6);
  ASSERT_EQ(rs.Psi.rows(), 60);
  EXPECT_EQ(Mat(rs.Psi.leftCols(3)), d.eta_xbar);
  EXPECT_EQ(Mat(rs.Psi.middleCols(3, 2)), Mat(-2.0 * d.eta_xu));
  EXPECT_EQ(Mat(rs.Psi.rightCols(1)), Mat(-d.eta_ubar));
  EXPECT_LE((rs.Theta + d.eta_xx * vec(w.Q.mat())).norm(), 1e-15);
  EXPECT_GT(rs.cond, 1.0);
}

TEST(Assemble, GeneralGainBlocks) {
  // Row r of the middle block is vec(2 K int S - 2 int u x^T) and the last
  // column is K (int S) K^T - E int u^2.
  const DataMatrices& d = exact_data();
  const Mat k{{-0.2, 0.1}};
  const RegressionSystem rs = assemble(d, two_state_cost(), k);
  for (Index r = 0; r < d.rows(); ++r) {
    const Mat int_s = unvec(d.eta_xx.row(r).transpose(), 2, 2);  // E int x x^T
    const Mat int_ux = unvec(d.eta_xu.row(r).transpose(), 1, 2);  // E int u x^T
    const Vec want_mid = vec(Mat(2.0 * k * int_s - 2.0 * int_ux));
    EXPECT_LE((rs.Psi.row(r).segment(3, 2).transpose() - want_mid).norm(), 1e-14);
    const double want_last = (k * int_s * k.transpose())(0, 0) - d.eta_ubar(r, 0);
    EXPECT_NEAR(rs.Psi(r, 5), want_last, 1e-14);
  }
}

TEST(Assemble, TrueTripleSatisfiesRegression) {
  const CostWeights w = two_state_cost();
  Gen g(62);
  std::vector<Mat> gains = {Mat::Zero(1, 2), model_reference().final_K};
  for (int i = 0; i < 3; ++i) gains.push_back(g.matrix(1, 2, 0.3));
  for (const Mat& k : gains) {
    if (!is_ms_stabilizing(two_state_system(), k).stable) continue;
    const RegressionSystem rs = assemble(exact_data(), w, k);
    const Vec z = stack_triple(policy_eval(two_state_system(), w, k));
    EXPECT_LE((rs.Psi * z - rs.Theta).norm(), 1e-6 * rs.Theta.norm());
  }
}

TEST(Assemble, DimensionMismatch) {
  EXPECT_THROW(assemble(exact_data(), two_state_cost(), Mat::Zero(2, 2)), DimensionError);
  const CostWeights wrong{SymMat::identity(3), SymMat::identity(1)};
  EXPECT_THROW(assemble(exact_data(), wrong, Mat::Zero(1, 2)), DimensionError);
}

TEST(Assemble, FullRankForEveryGainWhenDataExcited) {
  Gen g(63);
  for (int trial = 0; trial < 50; ++trial) {
    const RegressionSystem rs = assemble(exact_data(), two_state_cost(), g.matrix(1, 2, 2.0));
    EXPECT_EQ(numerical_rank(rs.Psi, 6).rank, 6u);
  }
}

TEST(SolveLs, SquareSystemMatchesDirectSolve) {
  Gen g(64);
  RegressionSystem rs;
  rs.Psi = g.matrix(6, 6) + 3.0 * Mat::Identity(6, 6);
  rs.Theta = g.vector(6);
  const LsSolution sol = solve_ls(rs, 2, 1);
  const Vec direct = rs.Psi.partialPivLu().solve(rs.Theta);
  EXPECT_LE((stack_triple(sol.triple) - direct).norm(), 1e-10 * direct.norm());
  EXPECT_LE(sol.residual, 1e-12);
}

TEST(SolveLs, FirstIterateMatchesPolicyEvaluation) {
  const CostWeights w = two_state_cost();
  const LsSolution sol = solve_ls(assemble(exact_data(), w, Mat::Zero(1, 2)), 2, 1);
  const auto t = policy_eval(two_state_system(), w, Mat::Zero(1, 2));
  EXPECT_LE((sol.triple.P.mat() - t.P.mat()).norm(), 1e-5);
  EXPECT_LE((sol.triple.M - t.M).norm(), 1e-5);
  EXPECT_LE((sol.triple.H.mat() - t.H.mat()).norm(), 1e-5);
}

TEST(SolveLs, HomogeneousRightHandSide) {
  RegressionSystem rs = assemble(exact_data(), two_state_cost(), Mat::Zero(1, 2));
  rs.Theta.setZero();
  const LsSolution sol = solve_ls(rs, 2, 1);
  EXPECT_TRUE(sol.triple.P.mat().isZero(0.0));
  EXPECT_TRUE(sol.triple.M.isZero(0.0));
  EXPECT_TRUE(sol.triple.H.mat().isZero(0.0));
}

TEST(SolveLs, RankDeficiencyCarriesReport) {
  const RegressionSystem rs = assemble(unexcited_data(), two_state_cost(), Mat::Zero(1, 2));
  try {
    solve_ls(rs, 2, 1);
    FAIL() << "expected RankDeficiencyError";
  } catch (const RankDeficiencyError& e) {
    EXPECT_FALSE(e.report().passed);
    EXPECT_EQ(e.report().required, 6u);
    EXPECT_EQ(e.report().singular_values.size(), 6u);
  }
}

TEST(SolveLs, TooFewRows) {
  Gen g(65);
  RegressionSystem rs;
  rs.Psi = g.matrix(5, 6);
  rs.Theta = g.vector(5);
  EXPECT_THROW(solve_ls(rs, 2, 1), RankDeficiencyError);
  rs.Psi = g.matrix(8, 5);
  rs.Theta = g.vector(8);
  EXPECT_THROW(solve_ls(rs, 2, 1), DimensionError);
}

TEST(SolveLs, NonFiniteSolution) {
  RegressionSystem rs;
  rs.Psi = Mat::Identity(6, 6);
  rs.Theta = Vec::Zero(6);
  rs.Theta(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(solve_ls(rs, 2, 1), NumericalError);
}

TEST(RunAdp, ExactDataReproducesModelSolution) {
  const RunReport rep = run_adp(exact_data(), two_state_cost(), Mat::Zero(1, 2), 1e-8, 200);
  ASSERT_TRUE(rep.converged());
  EXPECT_EQ(rep.mode, "adp_exact");
  EXPECT_LE((rep.final_triple.P.mat() - model_reference().final_triple.P.mat()).norm(), 1e-4);
  EXPECT_LE((rep.final_K - model_reference().final_K).norm(), 1e-4);
}

TEST(RunAdp, PerIterationEquivalenceWithModelPi) {
  const SystemModel sys = two_state_system();
  const CostWeights w = two_state_cost();
  Mat k_adp = Mat::Zero(1, 2), k_model = Mat::Zero(1, 2);
  for (int i = 0; i <= 5; ++i) {
    const LsSolution sol = solve_ls(assemble(exact_data(), w, k_adp, std::size_t(i)), 2, 1);
    const EvaluationTriple t = policy_eval(sys, w, k_model);
    EXPECT_LE((sol.triple.P.mat() - t.P.mat()).norm(), 1e-5) << "i = " << i;
    k_adp = policy_improve(w, sol.triple);
    k_model = policy_improve(w, t);
    EXPECT_LE((k_adp - k_model).norm(), 1e-5) << "i = " << i;
  }
}

TEST(RunAdp, IterateInvariants) {
  const SystemModel sys = two_state_system();
  const RunReport rep = run_adp(exact_data(), two_state_cost(), Mat::Zero(1, 2), 1e-8, 200, &sys);
  ASSERT_TRUE(rep.converged());
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const auto& rec = rep.records[i];
    EXPECT_EQ(rec.index, i);
    ASSERT_TRUE(rec.rank.has_value());
    EXPECT_EQ(*rec.rank, 6u);
    EXPECT_TRUE(rec.cond_psi.has_value());
    EXPECT_GE(rec.triple.H.min_eigenvalue(), -1e-8);
    EXPECT_EQ(rec.triple.P.mat(), rec.triple.P.mat().transpose());
    ASSERT_TRUE(rec.ms_abscissa.has_value());
    EXPECT_LT(*rec.ms_abscissa, 0.0);
    if (i > 0 && i + 1 < rep.records.size()) EXPECT_GE(*rec.delta_P, 1e-8);
  }
  EXPECT_LT(*rep.records.back().delta_P, 1e-8);
  EXPECT_TRUE(rep.model_assisted);
  ASSERT_TRUE(rep.residual_R1.has_value());
  EXPECT_LE(*rep.residual_R1, 1e-6);
  ASSERT_TRUE(rep.rank.has_value());
  EXPECT_TRUE(rep.rank->passed);
}

TEST(RunAdp, ModelFreeRunHasNoModelDiagnostics) {
  const RunReport rep = run_adp(exact_data(), two_state_cost(), Mat::Zero(1, 2), 1e-8, 200);
  EXPECT_FALSE(rep.model_assisted);
  EXPECT_FALSE(rep.residual_R1.has_value());
  EXPECT_FALSE(rep.residual_R2.has_value());
  for (const auto& rec : rep.records) EXPECT_FALSE(rec.ms_abscissa.has_value());
}

TEST(RunAdp, MonteCarloWithinTenPercent) {
  const DataMatrices d =
      collect_data_mc(two_state_system(), Mat::Zero(1, 2), three_sines(), two_state_rollout(10000, 42));
  const RunReport rep = run_adp(d, two_state_cost(), Mat::Zero(1, 2), 1e-4, 200);
  ASSERT_TRUE(rep.converged());
  EXPECT_EQ(rep.mode, "adp_mc");
  EXPECT_EQ(rep.data_paths, 10000u);
  EXPECT_EQ(rep.data_seed, 42u);
  const Mat& p_star = model_reference().final_triple.P.mat();
  EXPECT_LE((rep.final_triple.P.mat() - p_star).norm() / p_star.norm(), 0.10);
}

TEST(RunAdp, RankFailureBeforeIterating) {
  try {
    run_adp(unexcited_data(), two_state_cost(), Mat::Zero(1, 2), 1e-8, 200);
    FAIL() << "expected RankDeficiencyError";
  } catch (const RankDeficiencyError& e) {
    EXPECT_FALSE(e.report().passed);
    EXPECT_EQ(e.report().singular_values.size(), 7u);
  }
}

TEST(RunAdp, IndefiniteCurvatureBlamesNoise) {
  DataMatrices d = exact_data();
  d.eta_ubar *= -1e-3;  // scales the learned H by -1000
  try {
    run_adp(d, two_state_cost(), Mat::Zero(1, 2), 1e-8, 200);
    FAIL() << "expected IndefiniteCurvature";
  } catch (const IndefiniteCurvature& e) {
    EXPECT_NE(std::string(e.what()).find("noise"), std::string::npos);
  }
}

TEST(RunAdp, IterationCapIsAStatus) {
  const RunReport rep = run_adp(exact_data(), two_state_cost(), Mat::Zero(1, 2), 1e-8, 1);
  EXPECT_EQ(rep.status, RunStatus::max_iterations);
  EXPECT_EQ(rep.records.size(), 1u);
}

TEST(RunAdp, BadArguments) {
  EXPECT_THROW(run_adp(exact_data(), two_state_cost(), Mat::Zero(1, 2), -1.0, 10), ConfigError);
  EXPECT_THROW(run_adp(exact_data(), two_state_cost(), Mat::Zero(1, 2), 1e-8, 0), ConfigError);
  EXPECT_THROW(run_adp(exact_data(), two_state_cost(), Mat::Zero(1, 3), 1e-8, 10), DimensionError);
}
