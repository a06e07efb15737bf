#pragma once

#include "slod/assembly.hpp"
#include "slod/aux_space.hpp"
#include "slod/mesh.hpp"

#include <cstdint>
#include <vector>

namespace slod {

/// Dual nodes of one coarse element.
struct DualElement {
    int element = -1;
    std::vector<int> nodes;  ///< global ids, strictly interior to the element
    Vector hat_scale;        ///< 1/sqrt(A_pp): normalizes a_i(phi_hat, phi_hat) = 1
    Matrix s;                ///< S_i(j, k) = s_i(phi_hat_j, psi_k)
    double conditioning = 1.0;  ///< sigma_min / sigma_max of S_i (1 for empty sets)
    int attempts = 0;
};

struct DualNodeSet {
    std::vector<DualElement> elements;
    int total = 0;
    /// First flat index of each element's dual nodes (flat order: element, then j).
    std::vector<int> offsets;
};

struct DualSelectionOptions {
    int max_attempts = 100;
    double min_conditioning = 1e-8;
};

/// Random separated dual nodes: no fine element carries two dual nodes, and
/// each S_i passes the conditioning check. The random stream for an element
/// depends only on (seed, element, attempt).
DualNodeSet select_dual_nodes(const MeshHierarchy& mesh, const AuxSpace& aux, const SparseOperator& a,
                              std::uint64_t seed, const DualSelectionOptions& options = {});

/// Largest number of pairwise separated nodes among an element's interior nodes.
int max_separated_nodes(int refine_ratio);

/// True when no fine element has two of the given nodes as vertices.
bool nodes_separated(const MeshHierarchy& mesh, const std::vector<int>& nodes);

/// Dual functions phi_tilde_j = sum_l tau_jl phi_hat_l with tau = S_i^{-1}.
struct DualFunctionBlock {
    Matrix tau;
    Matrix hat_gram;  ///< a(phi_hat_j, phi_hat_l)
    Matrix gram;      ///< a(phi_tilde_j, phi_tilde_l)
    double m = 0.0;   ///< M_i = ||gram||_2
};

struct DualFunctions {
    std::vector<DualFunctionBlock> elements;
    double m = 0.0;  ///< M = max_i M_i
};

DualFunctions build_dual_functions(const DualNodeSet& dual, const SparseOperator& a);

/// sum_i sum_j s_i(v, psi_j^(i)) phi_tilde_j^(i).
Vector project_onto_dual(const Vector& v, const DualNodeSet& dual, const DualFunctions& functions,
                         const AuxSpace& aux);

/// Same expansion from precomputed Pi_aux coefficients.
Vector dual_expansion(const std::vector<Vector>& coeffs, const DualNodeSet& dual, const DualFunctions& functions,
                      Eigen::Index n);

/// Normalized hat vector of the flat dual index.
Vector dual_hat_vector(const DualNodeSet& dual, int flat, Eigen::Index n);

} // namespace slod
