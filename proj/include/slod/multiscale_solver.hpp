#pragma once

#include "slod/assembly.hpp"
#include "slod/corrector.hpp"

namespace slod {

enum class FineSolver { Direct, Cg };

struct SolveResult {
    Vector coefficients;  ///< over V_h (fine solve) or over the multiscale basis
    Vector fine;          ///< fine-grid vector
    Vector rhs;
    double seconds = 0.0;
    int iterations = 0;   ///< CG steps (0 for direct solves)
};

/// Reference solution u_h. Direct: sparse Cholesky. Cg: relative residual 1e-12,
/// throws NumericalError when the cap is reached.
SolveResult solve_fine(const SparseOperator& a, const Vector& load, FineSolver solver = FineSolver::Direct);

/// G(j, k) = a(b_j, b_k).
Matrix galerkin_matrix(const Eigen::SparseMatrix<double>& basis, const SparseOperator& a);

/// Galerkin solution in the span of the basis. Throws NumericalError when G is
/// not positive definite.
SolveResult solve_galerkin(const MultiscaleSpace& space, const SparseOperator& a, const Vector& load);
SolveResult solve_galerkin(const Eigen::SparseMatrix<double>& basis, const SparseOperator& a, const Vector& load);

struct ErrorReport {
    double energy_abs = 0.0;
    double energy_rel = 0.0;
    double l2_abs = 0.0;
    double l2_rel = 0.0;
    double l2k_abs = 0.0;
    double l2k_rel = 0.0;
    double energy_estimate = 0.0;
    double l2_estimate = 0.0;
    double ideal_estimate = 0.0;
    bool estimate_satisfied = false;     ///< energy_abs <= energy_estimate
    bool l2_estimate_satisfied = false;  ///< l2_abs <= l2_estimate
};

ErrorReport compute_errors(const Vector& u_h, const Vector& u_ms, const NormOperators& ops, const Certificate& cert);

} // namespace slod
