#include "slod/dense.hpp"
#include "slod/error.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace slod;
using namespace slod::test;

namespace {

InnerProductOperator with(const Matrix& a) {
    return [a](const Matrix& v) -> Matrix { return a * v; };
}

} // namespace

TEST(GeneralizedEig, DiagonalPencil) {
    const Matrix a = Eigen::Vector2d(0.0, 2.0).asDiagonal();
    const EigenDecomposition ed = sym_generalized_eig(a, Matrix::Identity(2, 2));
    EXPECT_NEAR(ed.eigenvalues[0], 0.0, 1e-15);
    EXPECT_NEAR(ed.eigenvalues[1], 2.0, 1e-15);
    EXPECT_NEAR(std::abs(ed.eigenvectors(0, 0)), 1.0, 1e-15);
    EXPECT_NEAR(std::abs(ed.eigenvectors(1, 1)), 1.0, 1e-15);
}

TEST(GeneralizedEig, TwoByTwoCharacteristicPolynomial) {
    Matrix a(2, 2);
    a << 2, -1, -1, 2;
    const Matrix s = 2.0 * Matrix::Identity(2, 2);
    // det(A - l S) = (2 - 2l)^2 - 1 = 0 -> l = 1/2, 3/2.
    const EigenDecomposition ed = sym_generalized_eig(a, s);
    EXPECT_NEAR(ed.eigenvalues[0], 0.5, 1e-14);
    EXPECT_NEAR(ed.eigenvalues[1], 1.5, 1e-14);
}

TEST(GeneralizedEig, MatchesJacobiOracleOnRandomPencils) {
    for (int n = 2; n <= 8; ++n)
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const Matrix a = random_spd(n, 10 * n + seed, 0.0);
            const Matrix s = random_spd(n, 1000 + 10 * n + seed, 1.0);
            const EigenDecomposition ed = sym_generalized_eig(a, s);
            // Oracle: own Cholesky of S (unblocked), then Jacobi on L^-1 A L^-T.
            Matrix l = Matrix::Zero(n, n);
            for (int j = 0; j < n; ++j) {
                double d = s(j, j);
                for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
                l(j, j) = std::sqrt(d);
                for (int i = j + 1; i < n; ++i) {
                    double v = s(i, j);
                    for (int k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
                    l(i, j) = v / l(j, j);
                }
            }
            const Matrix linv = l.inverse();
            const auto [lam, vec] = jacobi_eigen(linv * a * linv.transpose());
            const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
            EXPECT_LT((ed.eigenvalues - lam).cwiseAbs().maxCoeff(), 1e-10 * scale) << "n=" << n;
            // S-orthonormal eigenvectors with small residual.
            const Matrix& psi = ed.eigenvectors;
            EXPECT_LT((psi.transpose() * s * psi - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
            EXPECT_LT((a * psi - s * psi * ed.eigenvalues.asDiagonal()).cwiseAbs().maxCoeff(), 1e-9 * a.norm());
            // Trace identity.
            EXPECT_NEAR(ed.eigenvalues.sum(), (s.inverse() * a).trace(), 1e-8 * std::abs((s.inverse() * a).trace()));
        }
}

TEST(GeneralizedEig, RejectsInvalidInput) {
    Matrix a(2, 2);
    a << 1, 2, 0, 1;
    EXPECT_THROW(sym_generalized_eig(a, Matrix::Identity(2, 2)), InvalidArgument);
    Matrix s(2, 2);
    s << 1, 0, 0, -1;
    EXPECT_THROW(sym_generalized_eig(Matrix::Identity(2, 2), s), NumericalError);
}

TEST(Mgs, OrthonormalInputUnchanged) {
    Matrix v = Matrix::Identity(4, 3);
    const Matrix before = v;
    const MgsResult r = mgs_orthonormalize(v, with(Matrix::Identity(4, 4)));
    EXPECT_LT((v - before).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((r.r - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Mgs, ClassicalExample) {
    Matrix v(2, 2);
    v << 1, 1, 0, 1;
    mgs_orthonormalize(v, with(Matrix::Identity(2, 2)));
    EXPECT_NEAR(v(0, 1), 0.0, 1e-15);
    EXPECT_NEAR(v(1, 1), 1.0, 1e-15);
}

TEST(Mgs, RandomSpdInnerProduct) {
    const Matrix a = random_spd(40, 7);
    Matrix v = random_matrix(40, 20, 8);
    const Matrix v0 = v;
    const MgsResult r = mgs_orthonormalize(v, with(a));
    EXPECT_LT((v.transpose() * a * v - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-8);
    // Span preserved: V0 = V R with R upper triangular, positive diagonal.
    EXPECT_LT((v * r.r - v0).cwiseAbs().maxCoeff(), 1e-10);
    for (int i = 0; i < 20; ++i) {
        EXPECT_GT(r.r(i, i), 0.0);
        for (int j = 0; j < i; ++j) EXPECT_EQ(r.r(i, j), 0.0);
    }
}

TEST(Mgs, IllConditionedInputTriggersSecondPass) {
    // Nearly dependent columns lose orthogonality in one MGS pass.
    const Matrix a = Matrix::Identity(30, 30);
    Matrix v = random_matrix(30, 1, 1).replicate(1, 8) + 1e-9 * random_matrix(30, 8, 2);
    const MgsResult r = mgs_orthonormalize(v, with(a));
    EXPECT_LT((v.transpose() * v - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(r.passes, 2);
}

TEST(Mgs, BreakdownOnDependentInput) {
    Matrix v = random_matrix(6, 2, 3);
    v.col(1) = 2.0 * v.col(0);
    EXPECT_THROW(mgs_orthonormalize(v, with(Matrix::Identity(6, 6))), NumericalError);
}

TEST(Mgs, Deterministic) {
    const Matrix a = random_spd(25, 4);
    Matrix v1 = random_matrix(25, 10, 5);
    Matrix v2 = v1;
    mgs_orthonormalize(v1, with(a));
    mgs_orthonormalize(v2, with(a));
    EXPECT_TRUE((v1.array() == v2.array()).all());
}

TEST(ProjectOut, Cases) {
    const Matrix a = random_spd(12, 9);
    Matrix basis = random_matrix(12, 4, 10);
    mgs_orthonormalize(basis, with(a));
    const Matrix in_span = basis * random_matrix(4, 1, 11);
    EXPECT_LT(project_out(in_span, basis, with(a)).norm(), 1e-10);
    const Matrix v = random_matrix(12, 3, 12);
    EXPECT_EQ(project_out(v, Matrix(12, 0), with(a)), v);
    const Matrix p = project_out(v, basis, with(a));
    EXPECT_LT((basis.transpose() * a * p).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((project_out(p, basis, with(a)) - p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DenseSolve, SpdAndFailure) {
    const Matrix m = random_spd(10, 13);
    const Vector b = random_vector(10, 14);
    EXPECT_LT((m * dense_spd_solve(m, b) - b).norm(), 1e-10);
    Matrix bad = Matrix::Identity(3, 3);
    bad(2, 2) = -1;
    EXPECT_THROW(dense_spd_solve(bad, Vector(Vector::Ones(3))), NumericalError);
}

TEST(Singular, SimpleCases) {
    EXPECT_NEAR(two_norm(Matrix::Identity(3, 3)), 1.0, 1e-10);
    EXPECT_NEAR(min_singular(Matrix::Identity(3, 3)), 1.0, 1e-14);
    const Matrix d = Eigen::Vector2d(3.0, 1.0).asDiagonal();
    EXPECT_NEAR(two_norm(d), 3.0, 3e-10);
    EXPECT_NEAR(min_singular(d), 1.0, 1e-14);
}

TEST(Singular, MatchesEigenOracleOfGram) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix m = random_matrix(6, 6, 50 + seed);
        const auto [lam, vec] = jacobi_eigen(m.transpose() * m);
        EXPECT_NEAR(two_norm(m), std::sqrt(lam[5]), 1e-8 * std::sqrt(lam[5]));
        EXPECT_NEAR(min_singular(m), std::sqrt(std::max(lam[0], 0.0)), 1e-8);
    }
}
