#include "slod/error.hpp"
#include "slod/kernel_basis.hpp"
#include "slod/krylov.hpp"
#include "slod/parallel.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace slod;
using namespace slod::test;

namespace {

bool is_dual(const Toy& toy, int p) {
    for (const DualElement& de : toy.dual.elements)
        if (std::find(de.nodes.begin(), de.nodes.end(), p) != de.nodes.end()) return true;
    return false;
}

/// Nodes of the closed coarse elements in `elements`.
std::set<int> nodes_of(const MeshHierarchy& mesh, const std::vector<int>& elements) {
    std::set<int> out;
    for (int e : elements) out.insert(mesh.element_nodes(e).begin(), mesh.element_nodes(e).end());
    return out;
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "slod_kernel_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST(RawKernelVector, Properties) {
    Toy toy(3, 6, random_field(18, 1e4, 12), 3);
    const Matrix p = toy.pi_matrix();
    const Vector diag = toy.a.diagonal();
    int checked = 0;
    for (int node = 0; node < toy.mesh.n(); ++node) {
        if (is_dual(toy, node)) {
            EXPECT_THROW(raw_kernel_vector(toy.context(), node), InvalidArgument);
            continue;
        }
        const Vector v = raw_kernel_vector(toy.context(), node);
        EXPECT_LT((p * v).cwiseAbs().maxCoeff(), 1e-10 * v.cwiseAbs().maxCoeff());
        EXPECT_DOUBLE_EQ(v[node], 1.0 / std::sqrt(diag[node]));
        // vanishes on every other non-dual node
        for (int q = 0; q < toy.mesh.n(); ++q)
            if (q != node && v[q] != 0.0) EXPECT_TRUE(is_dual(toy, q));
        // support on the 1, 2 or 4 coarse elements holding the node
        const std::vector<int> owners = elements_containing(toy.mesh, toy.classes, node);
        const NodeKind kind = toy.classes.labels[node].kind;
        EXPECT_EQ(owners.size(), kind == NodeKind::ElementInterior ? 1u : kind == NodeKind::EdgeInterior ? 2u : 4u);
        const std::set<int> support = nodes_of(toy.mesh, owners);
        for (int q = 0; q < toy.mesh.n(); ++q)
            if (v[q] != 0.0) EXPECT_TRUE(support.count(q)) << "node " << node << " leaks to " << q;
        ++checked;
    }
    EXPECT_EQ(checked, toy.mesh.n() - toy.aux.total);
}

TEST(RawKernelVector, UnitEnergyHat) {
    Toy toy(2, 4, constant_field(8, 1.0));
    const Matrix a = toy.dense_a();
    for (int node = 0; node < toy.mesh.n(); ++node) {
        if (is_dual(toy, node)) continue;
        Vector hat = Vector::Zero(toy.mesh.n());
        hat[node] = raw_kernel_vector(toy.context(), node)[node];
        EXPECT_NEAR(hat.dot(a * hat), 1.0, 1e-14);
    }
}

TEST(KernelBasis, BlockCountsAndDimension) {
    const Toy t(4, 8, four_channels(32, 1e4), 2);
    EXPECT_EQ(t.k.ell, t.mesh.n() - t.aux.total);
    EXPECT_EQ(t.k.element_count, t.mesh.m());
    EXPECT_EQ(t.k.edge_count, static_cast<int>(t.mesh.edges().size()));
    EXPECT_EQ(t.k.blocks.size(), t.mesh.m() + t.mesh.edges().size() + t.mesh.vertices().size());
    Eigen::Index next = 0;
    for (int e = 0; e < t.mesh.m(); ++e) {
        const KernelBlock& b = t.k.element_block(e);
        EXPECT_EQ(b.kind, EntityKind::Element);
        EXPECT_EQ(b.cols(), static_cast<Eigen::Index>(t.mesh.element_interior_nodes(e).size()) - t.aux.elements[e].basis.count);
    }
    for (std::size_t e = 0; e < t.mesh.edges().size(); ++e) EXPECT_EQ(t.k.edge_block(static_cast<int>(e)).cols(), 7);
    for (std::size_t v = 0; v < t.mesh.vertices().size(); ++v) EXPECT_EQ(t.k.vertex_block(static_cast<int>(v)).cols(), 1);
    for (const KernelBlock& b : t.k.blocks) {
        EXPECT_EQ(b.first_column, next);
        next += b.cols();
        EXPECT_TRUE(std::is_sorted(b.support.begin(), b.support.end()));
        EXPECT_EQ(static_cast<Eigen::Index>(b.support.size()), b.columns.rows());
    }
    EXPECT_EQ(next, t.k.ell);
}

TEST(KernelBasis, ToyGramAndKernelMembership) {
    for (const CoefficientField& kappa : {constant_field(8, 1.0), random_field(8, 1e6, 31)}) {
        const Toy toy(2, 4, kappa, 5);
        EXPECT_EQ(toy.k.ell, 49 - toy.aux.total);
        const Matrix k = toy.k.dense();
        const Matrix gram = k.transpose() * toy.dense_a() * k;
        EXPECT_LT((gram.diagonal().array() - 1.0).abs().maxCoeff(), 1e-8);
        EXPECT_LT((toy.pi_matrix() * k).cwiseAbs().maxCoeff(), 1e-8);
        // every block is A-orthonormal on its own
        for (const KernelBlock& b : toy.k.blocks) {
            const Matrix g = gram.block(b.first_column, b.first_column, b.cols(), b.cols());
            EXPECT_LT((g - Matrix::Identity(b.cols(), b.cols())).cwiseAbs().maxCoeff(), 1e-8);
        }
        // the only vertex column is orthogonal to everything on a 2x2 coarse mesh
        const KernelBlock& v = toy.k.vertex_block(0);
        Vector row = gram.row(v.first_column);
        row[v.first_column] = 0.0;
        EXPECT_LT(row.cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(KernelBasis, SupportContainment) {
    const Toy toy(3, 6, random_field(18, 1e3, 17), 8);
    const Matrix k = toy.k.dense();
    for (const KernelBlock& b : toy.k.blocks) {
        const std::set<int> allowed = nodes_of(toy.mesh, b.coarse_support);
        for (int q : b.support) EXPECT_TRUE(allowed.count(q));
        std::vector<bool> inside(toy.mesh.n(), false);
        for (int q : b.support) inside[q] = true;
        for (Eigen::Index c = 0; c < b.cols(); ++c)
            for (int q = 0; q < toy.mesh.n(); ++q)
                if (!inside[q]) EXPECT_EQ(k(q, b.first_column + c), 0.0);
        const std::size_t expected = b.kind == EntityKind::Element ? 1 : b.kind == EntityKind::Edge ? 2 : 4;
        EXPECT_EQ(b.coarse_support.size(), expected);
    }
}

TEST(KernelBasis, SpansTheNullSpaceOfPiAux) {
    const Toy toy(3, 4, random_field(12, 1e5, 2), 6);
    const Matrix k = toy.k.dense();
    const Matrix p = toy.pi_matrix();
    Eigen::JacobiSVD<Matrix> svd_p(p);
    const double tol_p = 1e-8 * svd_p.singularValues()[0];
    const Eigen::Index rank_p = (svd_p.singularValues().array() > tol_p).count();
    EXPECT_EQ(rank_p, toy.aux.total);
    Eigen::JacobiSVD<Matrix> svd_k(k);
    const double tol_k = 1e-8 * svd_k.singularValues()[0];
    EXPECT_EQ((svd_k.singularValues().array() > tol_k).count(), toy.mesh.n() - rank_p);
    EXPECT_LT((p * k).cwiseAbs().maxCoeff(), 1e-8 * p.cwiseAbs().maxCoeff());
}

TEST(KernelBasis, WeightedL2EstimateOnRandomCombinations) {
    const Toy toy(4, 8, four_channels(32, 1e6), 4);
    const SparseOperator mk = assemble_mass(toy.mesh, toy.kappa);
    for (int trial = 0; trial < 100; ++trial) {
        const Vector c = random_vector(toy.k.ell, 300 + trial);
        const Vector w = toy.k.apply(Matrix(c)).col(0);
        const double l2k = std::sqrt(mk.quadratic(w));
        const double energy = std::sqrt(toy.a.quadratic(w));
        EXPECT_LE(l2k, c_star() * toy.mesh.H() * energy * (1.0 + 1e-8));
    }
}

TEST(KernelBasis, ApplyMatchesDense) {
    const Toy toy(3, 4, random_field(12, 1e2, 14), 1);
    const Matrix k = toy.k.dense();
    const Matrix x = random_matrix(toy.k.ell, 3, 9);
    const Matrix w = random_matrix(toy.mesh.n(), 2, 10);
    EXPECT_LT((toy.k.apply(x) - k * x).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((toy.k.apply_transpose(w) - k.transpose() * w).cwiseAbs().maxCoeff(), 1e-12);
    const ComposedKtak op(toy.k, toy.a);
    EXPECT_EQ(op.dim(), toy.k.ell);
    Matrix y;
    op.apply(x, y);
    const Matrix dense = k.transpose() * toy.dense_a() * k;
    EXPECT_LT((y - dense * x).cwiseAbs().maxCoeff(), 1e-10 * dense.cwiseAbs().maxCoeff());
    const auto owned = composed_ktak(toy.k, toy.a);
    EXPECT_LT((owned->apply(Vector(x.col(0))) - dense * x.col(0)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(StructureReport, MatchesDenseProduct) {
    const Toy toy(4, 6, random_field(24, 1e4, 44), 2);
    const StructureReport r = verify_ktak_structure(toy.k, toy.a);
    EXPECT_LE(r.max_diag_deviation, 1e-8);
    EXPECT_LE(r.max_block_orthogonality, 1e-8);
    EXPECT_LE(r.max_orthogonalized_pairs, 1e-8);
    EXPECT_LE(r.max_disjoint, 1e-8);
    EXPECT_GE(r.max_asymmetry, 0.0);
    EXPECT_LE(r.max_asymmetry, 1e-12);
    // the largest off-diagonal entry of the dense product is one of the reported classes
    const Matrix k = toy.k.dense();
    Matrix b = k.transpose() * toy.dense_a() * k - Matrix::Identity(toy.k.ell, toy.k.ell);
    double reported = std::max({r.max_block_orthogonality, r.max_orthogonalized_pairs, r.max_disjoint});
    long long nonzero = 0;
    for (const auto& [name, c] : r.classes) {
        reported = std::max(reported, c.max_abs);
        nonzero += c.count;
    }
    b.diagonal().setZero();
    EXPECT_NEAR(reported, b.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(2 * nonzero, (b.array().abs() > 1e-8).count());  // the report counts unordered pairs
    // element blocks never see each other
    for (int e = 0; e < toy.mesh.m(); ++e)
        for (int f = e + 1; f < toy.mesh.m(); ++f) {
            const KernelBlock& x = toy.k.element_block(e);
            const KernelBlock& y = toy.k.element_block(f);
            EXPECT_EQ(b.block(x.first_column, y.first_column, x.cols(), y.cols()).cwiseAbs().maxCoeff(), 0.0);
        }
}

TEST(KernelDump, RoundTrip) {
    const Toy toy(3, 4, random_field(12, 1e3, 3), 2);
    const KernelDumpHeader header{3, 4, 2, 0xabcdefULL};
    const auto path = scratch("k.bin");
    write_kernel_basis(path, toy.k, header);
    KernelDumpHeader back;
    const BlockKernelBasis k = read_kernel_basis(path, &back);
    EXPECT_EQ(back.coarse_divisions, 3);
    EXPECT_EQ(back.refine_ratio, 4);
    EXPECT_EQ(back.dual_seed, 2u);
    EXPECT_EQ(back.config_hash, 0xabcdefULL);
    EXPECT_EQ(k.ell, toy.k.ell);
    EXPECT_EQ(k.blocks.size(), toy.k.blocks.size());
    EXPECT_EQ((k.dense() - toy.k.dense()).cwiseAbs().maxCoeff(), 0.0);
    for (std::size_t i = 0; i < k.blocks.size(); ++i) {
        EXPECT_EQ(k.blocks[i].kind, toy.k.blocks[i].kind);
        EXPECT_EQ(k.blocks[i].origins, toy.k.blocks[i].origins);
        EXPECT_EQ(k.blocks[i].coarse_support, toy.k.blocks[i].coarse_support);
    }
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
    }
    EXPECT_THROW(read_kernel_basis(path), InvalidArgument);
    EXPECT_THROW(read_kernel_basis(scratch("missing.bin")), InvalidArgument);
}

TEST(KernelBasis, ThreadCountDoesNotChangeTheBasis) {
    const int before = thread_count();
    set_thread_count(1);
    const Toy one(4, 6, random_field(24, 1e5, 8), 3);
    set_thread_count(3);
    const Toy three(4, 6, random_field(24, 1e5, 8), 3);
    set_thread_count(before);
    EXPECT_EQ((one.k.dense() - three.k.dense()).cwiseAbs().maxCoeff(), 0.0);
}
