#include <gtest/gtest.h>

#include "oracles/kkt_oracle.hpp"
#include "random_gen.hpp"
#include "rtlplan/qp.hpp"

using namespace rtlplan;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double gauss(testgen::Rng& rng) { return std::normal_distribution<double>(0, 1)(rng); }

MatrixXd random_matrix(testgen::Rng& rng, int r, int c) {
  MatrixXd M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = gauss(rng);
  return M;
}

// Feasible by construction: b is built from a point that satisfies every row,
// with some rows tight at that point.
QpProblem random_feasible(testgen::Rng& rng, int n, int m) {
  QpProblem p;
  MatrixXd R = random_matrix(rng, n, n);
  p.H = R.transpose() * R + 0.1 * MatrixXd::Identity(n, n);
  p.g = random_matrix(rng, n, 1);
  p.A = random_matrix(rng, m, n);
  VectorXd z0 = random_matrix(rng, n, 1);
  p.b.resize(m);
  for (int i = 0; i < m; ++i) {
    double s = testgen::uniform(rng, 0, 2) == 0 ? 0.0 : std::abs(gauss(rng));
    p.b[i] = p.A.row(i).dot(z0) - s;
  }
  return p;
}

QpProblem one_d(double h, double g) {
  QpProblem p;
  p.H = MatrixXd::Constant(1, 1, h);
  p.g = VectorXd::Constant(1, g);
  p.A.resize(0, 1);
  p.b.resize(0);
  return p;
}

}  // namespace

TEST(Qp, Unconstrained) {
  QpProblem p;
  p.H = MatrixXd::Identity(3, 3);
  p.g = VectorXd::Zero(3);
  p.A.resize(0, 3);
  p.b.resize(0);
  auto s = solve_qp(p);
  EXPECT_EQ(s.status, QpStatus::optimal);
  EXPECT_EQ(s.z, VectorXd::Zero(3));
  EXPECT_TRUE(s.active_set.empty());
}

TEST(Qp, SingleActiveRow) {
  QpProblem p = one_d(2, 0);  // min v^2
  p.A = MatrixXd::Constant(1, 1, 1);
  p.b = VectorXd::Constant(1, 3);
  auto s = solve_qp(p);
  EXPECT_EQ(s.status, QpStatus::optimal);
  EXPECT_DOUBLE_EQ(s.z[0], 3.0);
  EXPECT_EQ(s.active_set, std::vector<int>{0});
  EXPECT_NEAR(s.multipliers[0], 6.0, 1e-12);
}

TEST(Qp, Infeasible) {
  QpProblem p = one_d(1, 0);
  p.A.resize(2, 1);
  p.A << 1, -1;
  p.b.resize(2);
  p.b << 1, 0;  // v >= 1 and v <= 0
  EXPECT_EQ(solve_qp(p).status, QpStatus::infeasible);
}

TEST(Qp, RejectsBadProblems) {
  QpProblem p = one_d(-1, 0);
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
  QpProblem q;
  q.H = MatrixXd::Identity(2, 2);
  q.H(0, 1) = 0.5;
  q.g = VectorXd::Zero(2);
  q.A.resize(0, 2);
  q.b.resize(0);
  EXPECT_THROW(solve_qp(q), std::invalid_argument);
  QpProblem big;
  big.H = MatrixXd::Identity(9, 9);
  big.g = VectorXd::Zero(9);
  big.A.resize(0, 9);
  big.b.resize(0);
  EXPECT_THROW(solve_qp(big), std::invalid_argument);
}

TEST(Qp, MatchesKktEnumeration) {
  testgen::Rng rng(101);
  int max_iter = 0;
  for (int k = 0; k < 1000; ++k) {
    int n = testgen::uniform(rng, 1, 4), m = testgen::uniform(rng, 0, 6);
    auto p = random_feasible(rng, n, m);
    auto s = solve_qp(p);
    auto ref = oracle::kkt_enumerate(p.H, p.g, p.A, p.b);
    ASSERT_TRUE(ref.has_value());
    max_iter += s.status == QpStatus::max_iter;
    ASSERT_EQ(s.status, QpStatus::optimal) << k;
    ASSERT_LE((s.z - ref->z).cwiseAbs().maxCoeff(), 1e-8) << k;
    ASSERT_NEAR(s.objective, ref->objective, 1e-8) << k;
    ASSERT_LE(kkt_residual(p, s), 1e-7) << k;
  }
  EXPECT_EQ(max_iter, 0);
}

TEST(Qp, LocalSamplingOptimality) {
  testgen::Rng rng(103);
  for (int k = 0; k < 100; ++k) {
    auto p = random_feasible(rng, testgen::uniform(rng, 1, 4), testgen::uniform(rng, 1, 6));
    auto s = solve_qp(p);
    for (int j = 0; j < 200; ++j) {
      VectorXd z = s.z + 1e-3 * random_matrix(rng, p.n(), 1).normalized() * std::uniform_real_distribution<>(0, 1)(rng);
      bool feasible = ((p.A * z - p.b).array() >= 0).all();
      if (feasible) {
        ASSERT_GE(qp_objective(p, z), s.objective - 1e-12);
      }
    }
  }
}

TEST(Qp, ScalingLeavesMinimizer) {
  testgen::Rng rng(107);
  for (int k = 0; k < 200; ++k) {
    auto p = random_feasible(rng, testgen::uniform(rng, 1, 4), testgen::uniform(rng, 0, 6));
    auto s = solve_qp(p);
    auto q = p;
    double c = std::exp(std::uniform_real_distribution<>(-3, 3)(rng));
    q.H *= c;
    q.g *= c;
    auto t = solve_qp(q);
    ASSERT_LE((s.z - t.z).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Qp, AddingRowNeverLowersObjective) {
  testgen::Rng rng(109);
  for (int k = 0; k < 300; ++k) {
    int n = testgen::uniform(rng, 1, 4), m = testgen::uniform(rng, 1, 6);
    auto full = random_feasible(rng, n, m);
    auto less = full;
    less.A = full.A.topRows(m - 1);
    less.b = full.b.head(m - 1);
    ASSERT_GE(solve_qp(full).objective, solve_qp(less).objective - 1e-10);
  }
}

TEST(Qp, WarmStartSameAnswer) {
  testgen::Rng rng(113);
  QpSolver warm;
  for (int k = 0; k < 300; ++k) {
    auto p = random_feasible(rng, 3, 5);
    // small perturbation of a fixed base keeps the active set mostly stable
    auto a = warm.solve(p);
    auto b = solve_qp(p);
    ASSERT_EQ(a.status, QpStatus::optimal);
    ASSERT_LE((a.z - b.z).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(warm.warm_set(), a.active_set);
  }
}

TEST(Qp, Deterministic) {
  testgen::Rng rng(127);
  auto p = random_feasible(rng, 4, 6);
  auto a = solve_qp(p), b = solve_qp(p);
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.active_set, b.active_set);
}
