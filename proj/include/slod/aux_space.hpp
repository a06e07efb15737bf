#pragma once

#include "slod/assembly.hpp"
#include "slod/mesh.hpp"

#include <vector>

namespace slod {

/// Low-energy eigenmodes of one coarse element's local problem
/// a_i(psi, w) = lambda s_i(psi, w).
struct LocalEigenBasis {
    int element = -1;
    Vector eigenvalues;       ///< full spectrum, ascending
    int count = 0;            ///< L_i
    int rule_count = 0;       ///< smallest count allowed by the threshold rule (count >= rule_count)
    Matrix modes;             ///< n_i x L_i, s_i-orthonormal
    double mu_hat = 0.0;      ///< analytic lower bound of the first nonzero kappa = 1 eigenvalue
    double threshold() const { return 0.5 * mu_hat; }
    /// lambda_{L_i + 1}, or +inf when every mode was selected.
    double next_eigenvalue() const;
};

double mu_lower_bound(BoundaryClass boundary_class);

/// Computes the spectrum of the local pencil and keeps the modes with
/// lambda <= mu_hat / 2, but at least `min_modes` of them (the rule only
/// asks for L_i large enough). Eigenvalues within zero_tol * ||A_i|| of zero
/// are snapped to zero.
LocalEigenBasis build_local_basis(const LocalForms& forms, BoundaryClass boundary_class, int min_modes = 0,
                                  double eig_tol = 1e-9, double zero_tol = 1e-10);

/// Per-element auxiliary spaces plus the data needed to apply Pi_aux.
struct AuxElement {
    LocalEigenBasis basis;
    std::vector<int> nodes;  ///< V_h(K_i), ascending global ids
    Matrix projector;        ///< S_i * Psi: c = projector^T v_local gives s_i(v, psi_j)

    /// Local position of a global node in `nodes`, or -1.
    int local_index(int node) const;
};

struct AuxSpace {
    std::vector<AuxElement> elements;
    int total = 0;  ///< L = sum of L_i
    double c_star = 0.0;
};

struct AuxOptions {
    /// Lower bound on L_i. One mode per element reproduces the published
    /// dimension counts; 0 gives the smallest spaces the rule allows.
    int min_modes = 1;
};

AuxSpace build_aux_space(const MeshHierarchy& mesh, const NodeClassification& classes,
                         const CoefficientField& kappa, const AuxOptions& options = {});

/// c_j^(i) = s_i(v|K_i, psi_j^(i)) for every element and selected mode.
std::vector<Vector> pi_aux_coeffs(const AuxSpace& aux, const Vector& v);

/// Expansion sum_j c_j psi_j of Pi_aux v on one element (local vector).
Vector pi_aux_local(const AuxSpace& aux, int element, const Vector& coeffs);

/// C* = (2 max_i 1/mu_hat_i)^{1/2} with the smallest bound pi^2/4, i.e. 2^{3/2}/pi.
double c_star();

/// First nonzero eigenvalue of the kappa = 1 local problem on an element of
/// the given class (diagnostic check of the analytic lower bounds).
double first_nonzero_laplace_eigenvalue(const MeshHierarchy& mesh, int element);

} // namespace slod
