#pragma once

#include "slod/assembly.hpp"
#include "slod/dual_space.hpp"
#include "slod/kernel_basis.hpp"
#include "slod/krylov.hpp"
#include "slod/mesh.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace slod {

/// Smallest k >= 1 with 2 q^k sqrt(L) sqrt(M) sqrt(beta) <= H^2.
/// Throws InvalidArgument unless 0 < q < 1 and the other inputs are positive.
int choose_k(double q, double l, double m, double beta, double h_coarse);
/// Same rule fed with sqrt(L) and sqrt(M) directly (as tabulated).
int choose_k_from_roots(double q, double sqrt_l, double sqrt_m, double beta, double h_coarse);

struct CorrectorPlan {
    ConditionEstimate estimate;  ///< condition number and q of K^T A K
    int l = 0;
    double m = 0.0;
    double beta = 1.0;
    double h_coarse = 0.0;
    int k = 1;
};

/// Estimates the condition number once and picks k. A positive
/// `k_override` replaces the computed k (the estimate is still recorded).
CorrectorPlan make_corrector_plan(const LinearOperator& ktak, int l, double m, double beta, double h_coarse,
                                  std::uint64_t cond_seed, int k_override = 0);

/// C_{h,k} v = K x after `iterations` CG steps on K^T A K x = K^T A v.
Vector corrector_solve(const LinearOperator& ktak, const BlockKernelBasis& k, const SparseOperator& a,
                       const Vector& v, int iterations, CgReport* report = nullptr);

/// C_h v, CG on K^T A K to a relative residual of 1e-14. Throws
/// NumericalError when the iteration cap (10 * ell) is hit first.
Vector ideal_corrector(const LinearOperator& ktak, const BlockKernelBasis& k, const SparseOperator& a,
                       const Vector& v, CgReport* report = nullptr);

/// Computable error certificate of one (H, beta) configuration.
struct Certificate {
    double h_coarse = 0.0;
    double h_fine = 0.0;
    double beta = 1.0;
    int l = 0;
    double sqrt_m = 0.0;
    double kappa_cond = 1.0;
    double q = 0.0;
    int k = 0;
    double c_star = 0.0;
    double f_norm_stated = 0.5;  ///< value used to reproduce the published tables
    double f_norm_true = 0.0;    ///< exact L2 norm of the source, 0 when unknown
    double energy_estimate = 0.0;      ///< (C*+1) H ||f||, stated norm
    double l2_estimate = 0.0;          ///< energy_estimate^2
    double l2_estimate_literal = 0.0;  ///< [(C*+1) H]^2 ||f||
    double ideal_estimate = 0.0;       ///< C* H ||f||
    double energy_estimate_true = 0.0; ///< (C*+1) H ||f|| with the true norm
    long long dropped_entries = 0;
    double dropped_max = 0.0;  ///< largest dropped |entry| relative to its column max
    bool ideal = false;        ///< exact correctors were used
};

/// `f_norm_stated` drives the estimates; `f_norm_true` is reported alongside.
Certificate make_certificate(const CorrectorPlan& plan, double h_fine, double f_norm_stated = 0.5,
                             double f_norm_true = 0.0);
/// key=value lines, fixed order.
std::string to_key_value(const Certificate& c);

struct MultiscaleOptions {
    bool ideal = false;          ///< CG to 1e-14 instead of k steps
    bool orthonormalize = true;  ///< final per-element MGS in the energy inner product
    double drop_tol = 1e-14;     ///< relative to each column's max entry
    int chunk_columns = 64;      ///< dual functions solved together
};

/// Localized multiscale basis, one column per dual node, columns grouped by element.
struct MultiscaleSpace {
    Eigen::SparseMatrix<double> basis;  ///< n x L
    std::vector<int> owner;             ///< coarse element of each column
    std::vector<int> cg_iterations;     ///< per dual node
    std::vector<double> cg_residuals;   ///< final relative residual per dual node
    Certificate certificate;

    Eigen::Index dim() const { return basis.cols(); }
};

MultiscaleSpace build_multiscale_space(const MeshHierarchy& mesh, const DualNodeSet& dual,
                                       const BlockKernelBasis& k, const SparseOperator& a,
                                       const CorrectorPlan& plan, const MultiscaleOptions& options = {});

} // namespace slod
