#include "slod/multiscale_solver.hpp"

#include "slod/dense.hpp"
#include "slod/error.hpp"
#include "slod/krylov.hpp"

#include <Eigen/SparseCholesky>

#include <chrono>

namespace slod {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

} // namespace

SolveResult solve_fine(const SparseOperator& a, const Vector& load, FineSolver solver) {
    SLOD_REQUIRE(load.size() == a.dim(), "solve_fine: load size mismatch");
    const auto t0 = std::chrono::steady_clock::now();
    SolveResult out;
    out.rhs = load;
    if (solver == FineSolver::Direct) {
        const Eigen::SparseMatrix<double> col_major = a.matrix();
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(col_major);
        if (llt.info() != Eigen::Success) throw NumericalError("solve_fine: stiffness matrix is not positive definite");
        out.coefficients = llt.solve(load);
    } else {
        CgOptions options;
        options.mode = CgMode::Tolerance;
        options.tol = 1e-12;
        options.record_ritz = false;
        CgResult res = cg(SparseLinearOperator(a), load, options, true);
        out.coefficients = std::move(res.x);
        out.iterations = res.report.iterations;
    }
    out.fine = out.coefficients;
    out.seconds = seconds_since(t0);
    return out;
}

Matrix galerkin_matrix(const Eigen::SparseMatrix<double>& basis, const SparseOperator& a) {
    SLOD_REQUIRE(basis.rows() == a.dim(), "galerkin_matrix: basis size mismatch");
    const Eigen::Index cols = basis.cols();
    const double density = basis.rows() * cols > 0
                               ? static_cast<double>(basis.nonZeros()) / static_cast<double>(basis.rows() * cols)
                               : 0.0;
    Matrix g(cols, cols);
    // Corrected bases are nearly dense at moderate k; dense chunks keep the
    // product in GEMM.
    const Eigen::Index chunk = 256;
    if (density > 0.2) {
        for (Eigen::Index c0 = 0; c0 < cols; c0 += chunk) {
            const Eigen::Index c = std::min(chunk, cols - c0);
            const Matrix ab = a.matrix() * Matrix(basis.middleCols(c0, c));
            for (Eigen::Index r0 = 0; r0 <= c0; r0 += chunk) {
                const Eigen::Index r = std::min(chunk, cols - r0);
                const Matrix br = basis.middleCols(r0, r);
                g.block(r0, c0, r, c).noalias() = br.transpose() * ab;
            }
        }
    } else {
        const Eigen::SparseMatrix<double> ab = a.matrix() * basis;
        for (Eigen::Index c0 = 0; c0 < cols; c0 += chunk) {
            const Eigen::Index c = std::min(chunk, cols - c0);
            const Matrix abc = ab.middleCols(c0, c);
            g.block(0, c0, c0 + c, c).noalias() = basis.leftCols(c0 + c).transpose() * abc;
        }
    }
    // Upper block triangle computed; mirror it.
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = j + 1; i < cols; ++i) g(i, j) = g(j, i);
    return g;
}

SolveResult solve_galerkin(const Eigen::SparseMatrix<double>& basis, const SparseOperator& a, const Vector& load) {
    SLOD_REQUIRE(load.size() == a.dim() && basis.rows() == a.dim(), "solve_galerkin: size mismatch");
    const auto t0 = std::chrono::steady_clock::now();
    SolveResult out;
    const Matrix g = galerkin_matrix(basis, a);
    out.rhs = basis.transpose() * load;
    try {
        out.coefficients = dense_spd_solve(g, out.rhs);
    } catch (const NumericalError& err) {
        throw NumericalError(std::string("solve_galerkin: Galerkin matrix not positive definite (") + err.what() + ")");
    }
    out.fine = basis * out.coefficients;
    out.seconds = seconds_since(t0);
    return out;
}

SolveResult solve_galerkin(const MultiscaleSpace& space, const SparseOperator& a, const Vector& load) {
    return solve_galerkin(space.basis, a, load);
}

ErrorReport compute_errors(const Vector& u_h, const Vector& u_ms, const NormOperators& ops, const Certificate& cert) {
    SLOD_REQUIRE(u_h.size() == u_ms.size(), "compute_errors: vectors on different grids");
    const Norms ref = norms(ops, u_h);
    const Norms err = norms(ops, u_h - u_ms);
    ErrorReport r;
    r.energy_abs = err.energy;
    r.energy_rel = safe_ratio(err.energy, ref.energy);
    r.l2_abs = err.l2;
    r.l2_rel = safe_ratio(err.l2, ref.l2);
    r.l2k_abs = err.l2_kappa;
    r.l2k_rel = safe_ratio(err.l2_kappa, ref.l2_kappa);
    r.energy_estimate = cert.energy_estimate;
    r.l2_estimate = cert.l2_estimate;
    r.ideal_estimate = cert.ideal_estimate;
    r.estimate_satisfied = r.energy_abs <= r.energy_estimate;
    r.l2_estimate_satisfied = r.l2_abs <= r.l2_estimate;
    return r;
}

} // namespace slod
