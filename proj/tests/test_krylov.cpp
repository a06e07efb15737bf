#include "slod/error.hpp"
#include "slod/krylov.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace slod;
using namespace slod::test;

namespace {

CgOptions tolerance(double tol = 1e-14) {
    CgOptions o;
    o.mode = CgMode::Tolerance;
    o.tol = tol;
    return o;
}

CgOptions fixed(int k) {
    CgOptions o;
    o.mode = CgMode::FixedIterations;
    o.iterations = k;
    return o;
}

} // namespace

TEST(Cg, IdentityOneStep) {
    const DenseLinearOperator op(Matrix::Identity(5, 5));
    const Vector b = random_vector(5, 1);
    const CgResult r = cg(op, b, tolerance());
    EXPECT_EQ(r.report.iterations, 1);
    EXPECT_LT((r.x - b).norm(), 1e-15);
    EXPECT_NEAR(r.report.condition, 1.0, 1e-14);
    EXPECT_NEAR(r.report.q, 0.0, 1e-14);
}

TEST(Cg, TwoByTwoRitzValues) {
    const DenseLinearOperator op(Eigen::Vector2d(1.0, 4.0).asDiagonal());
    const CgResult r = cg(op, Vector::Ones(2), tolerance());
    EXPECT_EQ(r.report.iterations, 2);
    EXPECT_NEAR(r.report.condition, 4.0, 1e-12);
    EXPECT_NEAR(r.report.q, 1.0 / 3.0, 1e-12);
}

TEST(Cg, RandomSpdMatchesDenseSolveAndCondition) {
    const Matrix m = random_spd(50, 21, 1.0);
    const DenseLinearOperator op(m);
    const Vector b = random_vector(50, 22);
    const CgResult r = cg(op, b, tolerance(1e-13));
    const Vector oracle = m.ldlt().solve(b);
    EXPECT_LT((r.x - oracle).norm(), 1e-10 * oracle.norm());
    const auto [lam, vec] = jacobi_eigen(m);
    const double cond = lam[49] / lam[0];
    EXPECT_NEAR(r.report.condition, cond, 0.05 * cond);
}

TEST(Cg, FiniteTerminationOnFewDistinctEigenvalues) {
    for (int distinct = 1; distinct <= 5; ++distinct) {
        Vector d(20);
        for (int i = 0; i < 20; ++i) d[i] = 1.0 + (i % distinct);
        const DenseLinearOperator op(d.asDiagonal());
        const CgResult r = cg(op, random_vector(20, distinct), tolerance(1e-12));
        EXPECT_LE(r.report.iterations, distinct);
    }
}

TEST(Cg, FixedModeRunsExactlyK) {
    const DenseLinearOperator op(random_spd(40, 5, 0.1));
    const CgResult r = cg(op, random_vector(40, 6), fixed(7));
    EXPECT_EQ(r.report.iterations, 7);
    EXPECT_EQ(r.report.residual_history.size(), 8u);
}

TEST(Cg, ErrorContractionBound) {
    const Matrix m = random_spd(60, 31, 0.2);
    const DenseLinearOperator op(m);
    const Vector b = random_vector(60, 32);
    const Vector exact = m.ldlt().solve(b);
    const auto [lam, vec] = jacobi_eigen(m);
    const double q = contraction_factor(lam[59] / lam[0]);
    const double e0 = std::sqrt(exact.dot(m * exact));
    for (int k = 1; k <= 25; ++k) {
        const CgResult r = cg(op, b, fixed(k));
        const Vector e = exact - r.x;
        const double bound = 2 * std::pow(q, k) / (1 + std::pow(q, 2 * k)) * e0;
        EXPECT_LE(std::sqrt(e.dot(m * e)), bound * (1 + 1e-8) + 1e-13);
    }
}

TEST(Cg, BreakdownAndCap) {
    const DenseLinearOperator indefinite(Eigen::Vector2d(1.0, -1.0).asDiagonal());
    EXPECT_THROW(cg(indefinite, Vector::Ones(2), tolerance()), NumericalError);
    const DenseLinearOperator op(random_spd(30, 3, 1e-6));
    CgOptions o = tolerance(1e-300);
    o.max_iterations = 3;
    EXPECT_THROW(cg(op, random_vector(30, 4), o, true), NumericalError);
}

TEST(Cg, ZeroRightHandSide) {
    const DenseLinearOperator op(random_spd(10, 3));
    const CgResult r = cg(op, Vector::Zero(10), fixed(5));
    EXPECT_EQ(r.x.norm(), 0.0);
}

TEST(ConditionEstimate, IdentityAndKnownSpectrum) {
    const ConditionEstimate id = estimate_condition(DenseLinearOperator(Matrix::Identity(30, 30)), 1);
    EXPECT_NEAR(id.condition, 1.0, 1e-12);
    EXPECT_NEAR(id.q, 0.0, 1e-12);
    Vector d = Vector::Ones(30);
    d[29] = 9.0;
    const ConditionEstimate e = estimate_condition(DenseLinearOperator(d.asDiagonal()), 1);
    EXPECT_NEAR(e.condition, 9.0, 1e-8);
    EXPECT_NEAR(e.q, 0.5, 1e-8);
}

TEST(ConditionEstimate, SeedDeterministic) {
    const DenseLinearOperator op(random_spd(80, 40, 0.05));
    const ConditionEstimate a = estimate_condition(op, 17);
    const ConditionEstimate b = estimate_condition(op, 17);
    EXPECT_EQ(a.condition, b.condition);
}

TEST(BatchCg, MatchesSingleSolves) {
    const Matrix m = random_spd(45, 8, 0.3);
    const DenseLinearOperator op(m);
    const Matrix b = random_matrix(45, 37, 9);
    const BatchCgResult batch = cg_fixed_batch(op, b, 12);
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
        const CgResult single = cg(op, b.col(c), fixed(12));
        EXPECT_LT((batch.x.col(c) - single.x).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_EQ(batch.iterations[c], single.report.iterations);
    }
}

TEST(BatchCg, EarlyExitAndZeroColumns) {
    const DenseLinearOperator op(Matrix::Identity(6, 6));
    Matrix b = random_matrix(6, 3, 2);
    b.col(1).setZero();
    const BatchCgResult r = cg_fixed_batch(op, b, 10);
    EXPECT_EQ(r.iterations[0], 1);
    EXPECT_EQ(r.iterations[1], 0);
    EXPECT_EQ(r.x.col(1).norm(), 0.0);
    EXPECT_LT((r.x.col(2) - b.col(2)).norm(), 1e-15);
}
