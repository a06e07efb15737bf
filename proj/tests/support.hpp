#pragma once

// Shared fixtures and independent oracles for the unit tests.

#include "slod/assembly.hpp"
#include "slod/aux_space.hpp"
#include "slod/coefficient.hpp"
#include "slod/dual_space.hpp"
#include "slod/kernel_basis.hpp"
#include "slod/mesh.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <random>

namespace slod::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(gen);
    return m;
}

inline Vector random_vector(Eigen::Index n, std::uint64_t seed) { return random_matrix(n, 1, seed).col(0); }

inline Matrix random_spd(Eigen::Index n, std::uint64_t seed, double shift = 0.5) {
    const Matrix b = random_matrix(n, n, seed);
    return b * b.transpose() + shift * Matrix::Identity(n, n);
}

/// Piecewise-constant coefficient with independent values in [1, beta].
inline CoefficientField random_field(int fine, double beta, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(fine) * fine);
    for (auto& x : v) x = std::exp(u(gen) * std::log(beta));
    return make_field(fine, std::move(v));
}

/// Q1 element matrices by 3x3 Gauss quadrature of the bilinear shape
/// functions (corners SW, SE, NE, NW), independent of the closed forms.
inline std::pair<Eigen::Matrix4d, Eigen::Matrix4d> quadrature_element(double h, double kappa) {
    const double g[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    const double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    const int cx[4] = {-1, 1, 1, -1};
    const int cy[4] = {-1, -1, 1, 1};
    Eigen::Matrix4d k = Eigen::Matrix4d::Zero(), m = Eigen::Matrix4d::Zero();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            const double xi = g[a], eta = g[b], wt = w[a] * w[b];
            std::array<double, 4> n{}, dx{}, dy{};
            for (int c = 0; c < 4; ++c) {
                n[c] = 0.25 * (1 + cx[c] * xi) * (1 + cy[c] * eta);
                // d/dx = (2/h) d/dxi
                dx[c] = 0.25 * cx[c] * (1 + cy[c] * eta) * 2.0 / h;
                dy[c] = 0.25 * cy[c] * (1 + cx[c] * xi) * 2.0 / h;
            }
            const double jac = h * h / 4.0;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    k(i, j) += wt * jac * kappa * (dx[i] * dx[j] + dy[i] * dy[j]);
                    m(i, j) += wt * jac * n[i] * n[j];
                }
        }
    return {k, m};
}

/// Dense global matrix assembled element by element from the quadrature
/// oracle, with its own node numbering over the (N-1)^2 interior grid.
inline Matrix oracle_global(int fine, const CoefficientField& kappa, bool mass, const CoefficientField* weight = nullptr) {
    const int n = (fine - 1) * (fine - 1);
    const double h = 1.0 / fine;
    Matrix out = Matrix::Zero(n, n);
    auto id = [fine](int x, int y) { return (x <= 0 || y <= 0 || x >= fine || y >= fine) ? -1 : (y - 1) * (fine - 1) + (x - 1); };
    for (int ey = 0; ey < fine; ++ey)
        for (int ex = 0; ex < fine; ++ex) {
            const double kap = kappa.at(ex, ey);
            const auto [ke, me] = quadrature_element(h, mass ? 1.0 : kap);
            const double scale = mass ? (weight ? weight->at(ex, ey) : 1.0) : 1.0;
            const int nodes[4] = {id(ex, ey), id(ex + 1, ey), id(ex + 1, ey + 1), id(ex, ey + 1)};
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    if (nodes[a] >= 0 && nodes[b] >= 0) out(nodes[a], nodes[b]) += mass ? scale * me(a, b) : ke(a, b);
        }
    return out;
}

/// Cyclic Jacobi eigenvalue iteration for a small symmetric matrix; returns
/// ascending eigenvalues and the matching eigenvectors.
inline std::pair<Vector, Matrix> jacobi_eigen(Matrix a) {
    const Eigen::Index n = a.rows();
    Matrix v = Matrix::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
    Vector lam(n);
    Matrix vec(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        lam[i] = a(order[i], order[i]);
        vec.col(i) = v.col(order[i]);
    }
    return {lam, vec};
}

/// Everything up to the kernel basis for a toy problem.
struct Toy {
    MeshHierarchy mesh;
    NodeClassification classes;
    CoefficientField kappa;
    SparseOperator a;
    AuxSpace aux;
    DualNodeSet dual;
    DualFunctions functions;
    BlockKernelBasis k;

    Toy(int coarse, int ratio, CoefficientField field, std::uint64_t seed = 1)
        : mesh(coarse, ratio), classes(classify_nodes(mesh)), kappa(std::move(field)),
          a(assemble_stiffness(mesh, kappa)), aux(build_aux_space(mesh, classes, kappa)),
          dual(select_dual_nodes(mesh, aux, a, seed)), functions(build_dual_functions(dual, a)) {
        const KernelContext ctx{mesh, classes, aux, dual, functions, a};
        k = substructure_orthonormalize(ctx);
    }

    KernelContext context() const { return {mesh, classes, aux, dual, functions, a}; }

    /// L x n matrix P with (P v) = all Pi_aux coefficients, built from the
    /// projector rows.
    Matrix pi_matrix() const {
        Matrix p = Matrix::Zero(aux.total, mesh.n());
        int row = 0;
        for (const AuxElement& e : aux.elements)
            for (int j = 0; j < e.basis.count; ++j, ++row)
                for (std::size_t l = 0; l < e.nodes.size(); ++l) p(row, e.nodes[l]) = e.projector(static_cast<Eigen::Index>(l), j);
        return p;
    }

    Matrix dense_a() const { return Matrix(a.matrix()); }
};

} // namespace slod::test
