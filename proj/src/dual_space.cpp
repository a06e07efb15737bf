#include "slod/dual_space.hpp"

#include "slod/dense.hpp"
#include "slod/error.hpp"
#include "slod/parallel.hpp"
#include "slod/rng.hpp"

#include <Eigen/LU>

#include <cmath>
#include <cstdlib>

namespace slod {

int max_separated_nodes(int refine_ratio) {
    const int side = (refine_ratio - 1 + 1) / 2;  // ceil((r - 1) / 2)
    return side * side;
}

bool nodes_separated(const MeshHierarchy& mesh, const std::vector<int>& nodes) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t j = i + 1; j < nodes.size(); ++j) {
            const GridPoint a = mesh.node_point(nodes[i]);
            const GridPoint b = mesh.node_point(nodes[j]);
            if (std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)) < 2) return false;
        }
    return true;
}

namespace {

DualElement select_for_element(const MeshHierarchy& mesh, const AuxElement& ae, const Vector& diag,
                               std::uint64_t seed, const DualSelectionOptions& options) {
    DualElement de;
    de.element = ae.basis.element;
    const int count = ae.basis.count;
    if (count == 0) {
        de.hat_scale = Vector(0);
        de.s = Matrix(0, 0);
        return de;
    }
    const int capacity = max_separated_nodes(mesh.refine_ratio());
    if (count > capacity)
        throw NumericalError("element " + std::to_string(de.element) + " needs " + std::to_string(count) +
                             " separated dual nodes but at most " + std::to_string(capacity) +
                             " fit; increase the refinement ratio");

    const std::vector<int>& candidates = mesh.element_interior_nodes(de.element);
    for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
        KeyedRng rng{seed, static_cast<std::uint64_t>(de.element), static_cast<std::uint64_t>(attempt)};
        std::vector<int> order = candidates;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        std::vector<int> chosen;
        std::vector<GridPoint> points;
        for (int p : order) {
            const GridPoint g = mesh.node_point(p);
            bool ok = true;
            for (const GridPoint& c : points)
                if (std::max(std::abs(c.x - g.x), std::abs(c.y - g.y)) < 2) {
                    ok = false;
                    break;
                }
            if (!ok) continue;
            chosen.push_back(p);
            points.push_back(g);
            if (static_cast<int>(chosen.size()) == count) break;
        }
        if (static_cast<int>(chosen.size()) < count) continue;

        Vector scale(count);
        Matrix s(count, count);
        for (int j = 0; j < count; ++j) {
            scale[j] = 1.0 / std::sqrt(diag[chosen[j]]);
            s.row(j) = scale[j] * ae.projector.row(ae.local_index(chosen[j]));
        }
        const double smax = two_norm(s);
        const double smin = min_singular(s);
        const double cond = smax > 0.0 ? smin / smax : 0.0;
        if (cond < options.min_conditioning) continue;

        de.nodes = std::move(chosen);
        de.hat_scale = scale;
        de.s = s;
        de.conditioning = cond;
        de.attempts = attempt + 1;
        return de;
    }
    throw NumericalError("no admissible dual nodes for element " + std::to_string(de.element) + " after " +
                         std::to_string(options.max_attempts) + " attempts (S_i stays ill-conditioned)");
}

} // namespace

DualNodeSet select_dual_nodes(const MeshHierarchy& mesh, const AuxSpace& aux, const SparseOperator& a,
                              std::uint64_t seed, const DualSelectionOptions& options) {
    SLOD_REQUIRE(static_cast<int>(aux.elements.size()) == mesh.m(), "aux space does not match the mesh");
    DualNodeSet set;
    set.elements.resize(mesh.m());
    const Vector diag = a.diagonal();
    ParallelErrors errors;
#pragma omp parallel for schedule(dynamic)
    for (int e = 0; e < mesh.m(); ++e)
        errors.run([&] { set.elements[e] = select_for_element(mesh, aux.elements[e], diag, seed, options); });
    errors.rethrow();

    set.offsets.resize(mesh.m() + 1, 0);
    for (int e = 0; e < mesh.m(); ++e)
        set.offsets[e + 1] = set.offsets[e] + static_cast<int>(set.elements[e].nodes.size());
    set.total = set.offsets.back();
    return set;
}

DualFunctions build_dual_functions(const DualNodeSet& dual, const SparseOperator& a) {
    DualFunctions df;
    df.elements.resize(dual.elements.size());
    for (std::size_t e = 0; e < dual.elements.size(); ++e) {
        const DualElement& de = dual.elements[e];
        DualFunctionBlock& b = df.elements[e];
        const auto count = static_cast<Eigen::Index>(de.nodes.size());
        if (count == 0) {
            b.tau = b.hat_gram = b.gram = Matrix(0, 0);
            continue;
        }
        Eigen::FullPivLU<Matrix> lu(de.s);
        if (!lu.isInvertible()) throw NumericalError("S_i is singular on element " + std::to_string(e));
        b.tau = lu.inverse();
        b.hat_gram.resize(count, count);
        for (Eigen::Index j = 0; j < count; ++j)
            for (Eigen::Index l = 0; l < count; ++l)
                b.hat_gram(j, l) = de.hat_scale[j] * de.hat_scale[l] * a.entry(de.nodes[j], de.nodes[l]);
        b.gram = b.tau * b.hat_gram * b.tau.transpose();
        b.m = two_norm(b.gram);
        df.m = std::max(df.m, b.m);
    }
    return df;
}

Vector dual_expansion(const std::vector<Vector>& coeffs, const DualNodeSet& dual, const DualFunctions& functions,
                      Eigen::Index n) {
    Vector out = Vector::Zero(n);
    for (std::size_t e = 0; e < dual.elements.size(); ++e) {
        const DualElement& de = dual.elements[e];
        if (de.nodes.empty()) continue;
        const Vector at_nodes = functions.elements[e].tau.transpose() * coeffs[e];
        for (std::size_t l = 0; l < de.nodes.size(); ++l)
            out[de.nodes[l]] += de.hat_scale[static_cast<Eigen::Index>(l)] * at_nodes[static_cast<Eigen::Index>(l)];
    }
    return out;
}

Vector project_onto_dual(const Vector& v, const DualNodeSet& dual, const DualFunctions& functions,
                         const AuxSpace& aux) {
    return dual_expansion(pi_aux_coeffs(aux, v), dual, functions, v.size());
}

Vector dual_hat_vector(const DualNodeSet& dual, int flat, Eigen::Index n) {
    SLOD_REQUIRE(flat >= 0 && flat < dual.total, "dual index out of range");
    const auto it = std::upper_bound(dual.offsets.begin(), dual.offsets.end(), flat);
    const auto e = static_cast<std::size_t>(it - dual.offsets.begin() - 1);
    const int j = flat - dual.offsets[e];
    Vector v = Vector::Zero(n);
    v[dual.elements[e].nodes[j]] = dual.elements[e].hat_scale[j];
    return v;
}

} // namespace slod
