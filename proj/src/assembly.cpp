#include "slod/assembly.hpp"

#include "slod/error.hpp"

#include <cmath>
#include <unordered_map>

namespace slod {

Matrix SparseOperator::apply(const Matrix& x) const {
    SLOD_REQUIRE(x.rows() == dim(), "operator/vector size mismatch");
    Matrix y(x.rows(), x.cols());
    y.noalias() = m_ * x;
    return y;
}

SparseMatrix SparseOperator::restrict_to(const std::vector<int>& support) const {
    std::unordered_map<int, int> local;
    local.reserve(support.size() * 2);
    for (std::size_t i = 0; i < support.size(); ++i) local.emplace(support[i], static_cast<int>(i));
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(support.size() * 9);
    for (std::size_t i = 0; i < support.size(); ++i) {
        for (SparseMatrix::InnerIterator it(m_, support[i]); it; ++it) {
            const auto found = local.find(static_cast<int>(it.col()));
            if (found != local.end()) triplets.emplace_back(static_cast<int>(i), found->second, it.value());
        }
    }
    SparseMatrix out(static_cast<Eigen::Index>(support.size()), static_cast<Eigen::Index>(support.size()));
    out.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

ElementMatrices q1_element_matrices(double h, double kappa_e) {
    SLOD_REQUIRE(h > 0.0, "element size must be positive");
    SLOD_REQUIRE(kappa_e > 0.0, "element coefficient must be positive");
    ElementMatrices em;
    em.stiffness << 4, -1, -2, -1,
                   -1, 4, -1, -2,
                   -2, -1, 4, -1,
                   -1, -2, -1, 4;
    em.stiffness *= kappa_e / 6.0;
    em.mass << 4, 2, 1, 2,
               2, 4, 2, 1,
               1, 2, 4, 2,
               2, 1, 2, 4;
    em.mass *= kappa_e * h * h / 36.0;
    return em;
}

namespace {

enum class Which { Stiffness, Mass };

SparseOperator assemble_global(const MeshHierarchy& mesh, const CoefficientField& kappa, Which which) {
    const int nf = mesh.fine_divisions();
    SLOD_REQUIRE(kappa.fine_divisions == nf, "coefficient field does not match the mesh");
    const double h = mesh.h();

    // Fixed 9-point pattern: every row lists its in-domain neighbours in
    // increasing column order, so entries can be addressed directly.
    const int n = mesh.n();
    SparseMatrix a(n, n);
    a.reserve(Eigen::VectorXi::Constant(n, 9));
    for (int p = 0; p < n; ++p) {
        const GridPoint g = mesh.node_point(p);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int q = mesh.node_id(g.x + dx, g.y + dy);
                if (q >= 0) a.insert(p, q) = 0.0;
            }
    }
    a.makeCompressed();

    for (int ey = 0; ey < nf; ++ey) {
        for (int ex = 0; ex < nf; ++ex) {
            const ElementMatrices em = q1_element_matrices(h, kappa.at(ex, ey));
            const ElementMatrix& local = which == Which::Stiffness ? em.stiffness : em.mass;
            const auto nodes = mesh.fine_element_nodes(ex, ey);
            for (int i = 0; i < 4; ++i) {
                if (nodes[i] < 0) continue;
                for (int j = 0; j < 4; ++j) {
                    if (nodes[j] < 0) continue;
                    a.coeffRef(nodes[i], nodes[j]) += local(i, j);
                }
            }
        }
    }
    return SparseOperator(std::move(a));
}

} // namespace

SparseOperator assemble_stiffness(const MeshHierarchy& mesh, const CoefficientField& kappa) {
    return assemble_global(mesh, kappa, Which::Stiffness);
}

SparseOperator assemble_mass(const MeshHierarchy& mesh, const CoefficientField& weight) {
    return assemble_global(mesh, weight, Which::Mass);
}

Vector assemble_load(const MeshHierarchy& mesh, const SourceField& f) {
    const int nf = mesh.fine_divisions();
    SLOD_REQUIRE(f.fine_divisions == nf, "source field does not match the mesh");
    const double quarter = mesh.h() * mesh.h() / 4.0;
    Vector load = Vector::Zero(mesh.n());
    for (int ey = 0; ey < nf; ++ey)
        for (int ex = 0; ex < nf; ++ex) {
            const double fe = f.values[static_cast<std::size_t>(ey) * nf + ex];
            if (fe == 0.0) continue;
            for (int p : mesh.fine_element_nodes(ex, ey))
                if (p >= 0) load[p] += fe * quarter;
        }
    return load;
}

LocalForms assemble_local_forms(const MeshHierarchy& mesh, const CoefficientField& kappa, int element) {
    SLOD_REQUIRE(element >= 0 && element < mesh.m(), "coarse element id out of range");
    SLOD_REQUIRE(kappa.fine_divisions == mesh.fine_divisions(), "coefficient field does not match the mesh");
    LocalForms lf;
    lf.element = element;
    lf.nodes = mesh.element_nodes(element);
    const auto ni = static_cast<Eigen::Index>(lf.nodes.size());
    lf.stiffness = Matrix::Zero(ni, ni);
    lf.weighted_mass = Matrix::Zero(ni, ni);
    lf.mass = Matrix::Zero(ni, ni);

    const int r = mesh.refine_ratio();
    const GridPoint o = mesh.coarse_element_origin(element);
    // Local numbering of the (r+1)^2 grid points, -1 for boundary points.
    std::vector<int> local((r + 1) * (r + 1), -1);
    {
        int next = 0;
        for (int y = 0; y <= r; ++y)
            for (int x = 0; x <= r; ++x)
                if (mesh.node_id(o.x + x, o.y + y) >= 0) local[y * (r + 1) + x] = next++;
    }
    const double inv_h2 = 1.0 / (mesh.H() * mesh.H());
    const ElementMatrices unit = q1_element_matrices(mesh.h(), 1.0);
    for (int y = 0; y < r; ++y) {
        for (int x = 0; x < r; ++x) {
            const double k = kappa.at(o.x + x, o.y + y);
            const std::array<int, 4> c = {local[y * (r + 1) + x], local[y * (r + 1) + x + 1],
                                          local[(y + 1) * (r + 1) + x + 1], local[(y + 1) * (r + 1) + x]};
            for (int i = 0; i < 4; ++i) {
                if (c[i] < 0) continue;
                for (int j = 0; j < 4; ++j) {
                    if (c[j] < 0) continue;
                    lf.stiffness(c[i], c[j]) += k * unit.stiffness(i, j);
                    lf.weighted_mass(c[i], c[j]) += inv_h2 * k * unit.mass(i, j);
                    lf.mass(c[i], c[j]) += unit.mass(i, j);
                }
            }
        }
    }
    return lf;
}

NormOperators build_norm_operators(const MeshHierarchy& mesh, const CoefficientField& kappa) {
    const CoefficientField one = constant_field(mesh.fine_divisions(), 1.0);
    return {assemble_stiffness(mesh, kappa), assemble_mass(mesh, one), assemble_mass(mesh, kappa),
            assemble_stiffness(mesh, one)};
}

Norms norms(const NormOperators& ops, const Vector& v) {
    SLOD_REQUIRE(v.size() == ops.stiffness.dim(), "vector size does not match the operators");
    auto root = [](double s) { return std::sqrt(std::max(s, 0.0)); };
    return {root(ops.stiffness.quadratic(v)), root(ops.mass.quadratic(v)), root(ops.weighted_mass.quadratic(v)),
            root(ops.laplace.quadratic(v))};
}

} // namespace slod
