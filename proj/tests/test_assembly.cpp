#include "slod/assembly.hpp"
#include "slod/error.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace slod;
using namespace slod::test;

TEST(ElementMatrices, ClosedFormsMatchQuadrature) {
    for (double h : {1.0, 0.25, 1.0 / 64})
        for (double kap : {1.0, 6.0, 1e4}) {
            const ElementMatrices e = q1_element_matrices(h, kap);
            const auto [k, m] = quadrature_element(h, kap);
            EXPECT_LT((e.stiffness - k).cwiseAbs().maxCoeff(), 1e-12 * kap);
            EXPECT_LT((e.mass - kap * m).cwiseAbs().maxCoeff(), 1e-15 * kap);
        }
}

TEST(ElementMatrices, Properties) {
    const ElementMatrices e = q1_element_matrices(1.0, 1.0);
    EXPECT_LT(e.stiffness.rowwise().sum().cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(e.mass.sum(), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(q1_element_matrices(0.3, 6.0).stiffness(0, 0), 4.0);
    EXPECT_THROW(q1_element_matrices(0.0, 1.0), InvalidArgument);
    EXPECT_THROW(q1_element_matrices(1.0, -1.0), InvalidArgument);
}

TEST(Stiffness, ToyDiagonal) {
    const MeshHierarchy mesh(2, 4);
    const SparseOperator a = assemble_stiffness(mesh, constant_field(mesh, 1.0));
    for (int p : mesh.element_interior_nodes(0)) EXPECT_NEAR(a.entry(p, p), 8.0 / 3.0, 1e-15);
}

TEST(Stiffness, MatchesQuadratureOracle) {
    const MeshHierarchy mesh(2, 4);
    const CoefficientField kappa = random_field(8, 1e3, 5);
    const SparseOperator a = assemble_stiffness(mesh, kappa);
    const Matrix oracle = oracle_global(8, kappa, false);
    EXPECT_LT((Matrix(a.matrix()) - oracle).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Stiffness, SymmetricPositiveDefiniteNinePoint) {
    const MeshHierarchy mesh(3, 4);
    const SparseOperator a = assemble_stiffness(mesh, random_field(12, 1e4, 2));
    const Matrix d = a.matrix();
    EXPECT_EQ((d - d.transpose()).cwiseAbs().maxCoeff(), 0.0);
    for (Eigen::Index r = 0; r < a.matrix().rows(); ++r) EXPECT_LE(a.matrix().row(r).nonZeros(), 9);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Vector x = random_vector(mesh.n(), s);
        EXPECT_GT(a.quadratic(x), 0.0);
    }
}

TEST(Stiffness, LinearInKappa) {
    const MeshHierarchy mesh(2, 4);
    CoefficientField k1 = random_field(8, 10.0, 3);
    std::vector<double> scaled = k1.values;
    for (auto& v : scaled) v *= 7.0;
    const SparseOperator a1 = assemble_stiffness(mesh, k1);
    const SparseOperator a7 = assemble_stiffness(mesh, make_field(8, scaled));
    EXPECT_LT((Matrix(a7.matrix()) - 7.0 * Matrix(a1.matrix())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Stiffness, RejectsMismatchedField) {
    const MeshHierarchy mesh(2, 4);
    EXPECT_THROW(assemble_stiffness(mesh, constant_field(16, 1.0)), InvalidArgument);
}

TEST(Load, ConstantSource) {
    const MeshHierarchy mesh(2, 8);
    const Vector b = assemble_load(mesh, constant_source(16, 1.0));
    const double h = mesh.h();
    for (Eigen::Index i = 0; i < b.size(); ++i) EXPECT_NEAR(b[i], h * h, 1e-17);
}

TEST(Load, RightHalfSupport) {
    const MeshHierarchy mesh(2, 8);
    const Vector b = assemble_load(mesh, right_half_source(16));
    const double h = mesh.h();
    for (int p = 0; p < mesh.n(); ++p) {
        const double x = mesh.node_point(p).x * h;
        if (x < 0.5 - h + 1e-12) EXPECT_EQ(b[p], 0.0);
        if (x > 0.5 + 1e-12) EXPECT_NEAR(b[p], h * h, 1e-17);
    }
}

TEST(Load, RejectsMismatchedSource) {
    const MeshHierarchy mesh(2, 8);
    EXPECT_THROW(assemble_load(mesh, constant_source(8, 1.0)), InvalidArgument);
}

TEST(LocalForms, CornerElementAndNeumannKernel) {
    const MeshHierarchy mesh(3, 4);
    const CoefficientField one = constant_field(mesh, 1.0);
    EXPECT_EQ(assemble_local_forms(mesh, one, 0).stiffness.rows(), 16);
    const LocalForms f = assemble_local_forms(mesh, one, 4);  // the interior element
    EXPECT_EQ(f.stiffness.rows(), 25);
    EXPECT_LT((f.stiffness * Vector::Ones(25)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(LocalForms, WeightedMassTraceAndGlobalConsistency) {
    const MeshHierarchy mesh(3, 4);
    const CoefficientField kappa = random_field(12, 1e2, 9);
    const int e = 4;
    const LocalForms f = assemble_local_forms(mesh, kappa, e);
    // Trace: sum over the fine elements of kappa_e times the diagonal of the
    // unit element mass (4 h^2/36 per corner), all corners interior here.
    double trace = 0.0;
    for (int fe : mesh.element_fine_elements(e)) {
        const int ex = fe % mesh.fine_divisions(), ey = fe / mesh.fine_divisions();
        trace += kappa.at(ex, ey) * 4.0 * 4.0 * mesh.h() * mesh.h() / 36.0;
    }
    EXPECT_NEAR(f.weighted_mass.trace(), trace / (mesh.H() * mesh.H()), 1e-12);

    // v supported in the open element: v^T A v equals the local form.
    const SparseOperator a = assemble_stiffness(mesh, kappa);
    Vector v = Vector::Zero(mesh.n());
    Vector v_loc = Vector::Zero(static_cast<Eigen::Index>(f.nodes.size()));
    const auto& interior = mesh.element_interior_nodes(e);
    const Vector r = random_vector(static_cast<Eigen::Index>(interior.size()), 4);
    for (std::size_t i = 0; i < interior.size(); ++i) {
        v[interior[i]] = r[i];
        const auto pos = std::find(f.nodes.begin(), f.nodes.end(), interior[i]) - f.nodes.begin();
        v_loc[pos] = r[i];
    }
    EXPECT_NEAR(a.quadratic(v), v_loc.dot(f.stiffness * v_loc), 1e-10);
}

TEST(LocalForms, BoundaryElementStiffnessIsDefinite) {
    const MeshHierarchy mesh(3, 4);
    const LocalForms f = assemble_local_forms(mesh, constant_field(mesh, 1.0), 1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(f.stiffness);
    EXPECT_GT(es.eigenvalues().minCoeff(), 1e-6);
}

TEST(Norms, BasicRelations) {
    const MeshHierarchy mesh(2, 8);
    const CoefficientField kappa = random_field(16, 1e3, 8);
    const NormOperators ops = build_norm_operators(mesh, kappa);
    const Norms zero = norms(ops, Vector::Zero(mesh.n()));
    EXPECT_EQ(zero.energy, 0.0);
    EXPECT_EQ(zero.l2, 0.0);
    EXPECT_EQ(zero.l2_kappa, 0.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Vector v = random_vector(mesh.n(), 100 + s);
        const Norms nv = norms(ops, v);
        EXPECT_LE(nv.l2, nv.l2_kappa * (1 + 1e-12));
        EXPECT_LE(nv.h1_semi, nv.energy * (1 + 1e-12));
        // Friedrichs on the unit square.
        EXPECT_LE(nv.l2, nv.h1_semi);
    }
}

TEST(Norms, MassMatchesOracle) {
    const MeshHierarchy mesh(2, 4);
    const CoefficientField kappa = random_field(8, 50.0, 1);
    const NormOperators ops = build_norm_operators(mesh, kappa);
    const CoefficientField one = constant_field(8, 1.0);
    EXPECT_LT((Matrix(ops.mass.matrix()) - oracle_global(8, one, true)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((Matrix(ops.weighted_mass.matrix()) - oracle_global(8, one, true, &kappa)).cwiseAbs().maxCoeff(), 1e-13);
}
