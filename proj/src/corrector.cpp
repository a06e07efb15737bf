#include "slod/corrector.hpp"

#include "slod/aux_space.hpp"
#include "slod/dense.hpp"
#include "slod/error.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace slod {

int choose_k_from_roots(double q, double sqrt_l, double sqrt_m, double beta, double h_coarse) {
    SLOD_REQUIRE(q < 1.0, "choose_k: q >= 1, the condition estimate failed");
    SLOD_REQUIRE(q > 0.0, "choose_k: q must be positive");
    SLOD_REQUIRE(sqrt_l > 0.0 && sqrt_m > 0.0 && beta > 0.0 && h_coarse > 0.0, "choose_k: inputs must be positive");
    const double scale = 2.0 * sqrt_l * sqrt_m * std::sqrt(beta);
    const double target = h_coarse * h_coarse;
    for (int k = 1; k <= 1000000; ++k)
        if (scale * std::pow(q, k) <= target) return k;
    throw NumericalError("choose_k: no k below 1e6 satisfies the bound");
}

int choose_k(double q, double l, double m, double beta, double h_coarse) {
    SLOD_REQUIRE(l > 0.0 && m > 0.0, "choose_k: L and M must be positive");
    return choose_k_from_roots(q, std::sqrt(l), std::sqrt(m), beta, h_coarse);
}

CorrectorPlan make_corrector_plan(const LinearOperator& ktak, int l, double m, double beta, double h_coarse,
                                  std::uint64_t cond_seed, int k_override) {
    CorrectorPlan plan;
    plan.l = l;
    plan.m = m;
    plan.beta = beta;
    plan.h_coarse = h_coarse;
    plan.estimate = estimate_condition(ktak, cond_seed);
    if (k_override > 0) plan.k = k_override;
    else if (plan.estimate.q <= 0.0) plan.k = 1;  // K^T A K = I: one step is exact
    else plan.k = choose_k(plan.estimate.q, l, m, beta, h_coarse);
    return plan;
}

Vector corrector_solve(const LinearOperator& ktak, const BlockKernelBasis& k, const SparseOperator& a,
                       const Vector& v, int iterations, CgReport* report) {
    SLOD_REQUIRE(iterations >= 1, "corrector_solve: at least one iteration");
    const Vector rhs = k.apply_transpose(a.apply(v));
    CgOptions options;
    options.mode = CgMode::FixedIterations;
    options.iterations = iterations;
    options.record_ritz = false;
    CgResult res = cg(ktak, rhs, options);
    if (report) *report = std::move(res.report);
    return k.apply(res.x);
}

Vector ideal_corrector(const LinearOperator& ktak, const BlockKernelBasis& k, const SparseOperator& a,
                       const Vector& v, CgReport* report) {
    const Vector rhs = k.apply_transpose(a.apply(v));
    CgOptions options;
    options.mode = CgMode::Tolerance;
    options.tol = 1e-14;
    options.max_iterations = static_cast<int>(10 * std::max<Eigen::Index>(ktak.dim(), 1));
    options.record_ritz = false;
    CgResult res = cg(ktak, rhs, options, true);
    if (report) *report = std::move(res.report);
    return k.apply(res.x);
}

Certificate make_certificate(const CorrectorPlan& plan, double h_fine, double f_norm_stated, double f_norm_true) {
    Certificate c;
    c.h_coarse = plan.h_coarse;
    c.h_fine = h_fine;
    c.beta = plan.beta;
    c.l = plan.l;
    c.sqrt_m = std::sqrt(plan.m);
    c.kappa_cond = plan.estimate.condition;
    c.q = plan.estimate.q;
    c.k = plan.k;
    c.c_star = c_star();
    c.f_norm_stated = f_norm_stated;
    c.f_norm_true = f_norm_true;
    const double factor = (c.c_star + 1.0) * c.h_coarse;
    c.energy_estimate = factor * c.f_norm_stated;
    c.l2_estimate = c.energy_estimate * c.energy_estimate;
    c.l2_estimate_literal = factor * factor * c.f_norm_stated;
    c.ideal_estimate = c.c_star * c.h_coarse * c.f_norm_stated;
    c.energy_estimate_true = factor * f_norm_true;
    return c;
}

std::string to_key_value(const Certificate& c) {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "H=" << c.h_coarse << '\n'
        << "h=" << c.h_fine << '\n'
        << "beta=" << c.beta << '\n'
        << "L=" << c.l << '\n'
        << "sqrt_M=" << c.sqrt_m << '\n'
        << "kappa_cond=" << c.kappa_cond << '\n'
        << "q=" << c.q << '\n'
        << "k=" << c.k << '\n'
        << "C_star=" << c.c_star << '\n'
        << "f_norm_stated=" << c.f_norm_stated << '\n'
        << "f_norm_true=" << c.f_norm_true << '\n'
        << "energy_estimate=" << c.energy_estimate << '\n'
        << "l2_estimate=" << c.l2_estimate << '\n'
        << "l2_estimate_literal=" << c.l2_estimate_literal << '\n'
        << "ideal_estimate=" << c.ideal_estimate << '\n'
        << "energy_estimate_true_norm=" << c.energy_estimate_true << '\n'
        << "ideal_correctors=" << (c.ideal ? 1 : 0) << '\n'
        << "dropped_entries=" << c.dropped_entries << '\n'
        << "dropped_max_relative=" << c.dropped_max << '\n';
    return out.str();
}

MultiscaleSpace build_multiscale_space(const MeshHierarchy& mesh, const DualNodeSet& dual,
                                       const BlockKernelBasis& k, const SparseOperator& a,
                                       const CorrectorPlan& plan, const MultiscaleOptions& options) {
    SLOD_REQUIRE(k.n == a.dim() && a.dim() == mesh.n(), "build_multiscale_space: dimension mismatch");
    SLOD_REQUIRE(options.chunk_columns > 0, "build_multiscale_space: chunk size must be positive");
    const Eigen::Index n = mesh.n();
    const int total = dual.total;
    ComposedKtak ktak(k, a);
    const InnerProductOperator energy = [&a](const Matrix& v) -> Matrix { return a.matrix() * v; };
    const int iterations =
        options.ideal ? static_cast<int>(10 * std::max<Eigen::Index>(k.ell, 1)) : plan.k;
    const double early_exit = 1e-14;

    MultiscaleSpace space;
    space.owner.resize(static_cast<std::size_t>(total));
    space.cg_iterations.resize(static_cast<std::size_t>(total));
    space.cg_residuals.resize(static_cast<std::size_t>(total));
    space.certificate = make_certificate(plan, mesh.h());
    space.certificate.ideal = options.ideal;

    std::vector<Eigen::Triplet<double>> triplets;
    long long dropped = 0;
    double dropped_max = 0.0;

    const int elements = static_cast<int>(dual.elements.size());
    int e_begin = 0;
    while (e_begin < elements) {
        // Whole elements per chunk so the final MGS sees all of an element's columns.
        int e_end = e_begin;
        int cols = 0;
        while (e_end < elements && (cols == 0 || cols + static_cast<int>(dual.elements[e_end].nodes.size()) <=
                                                      options.chunk_columns)) {
            cols += static_cast<int>(dual.elements[e_end].nodes.size());
            ++e_end;
        }
        const int first = dual.offsets[e_begin];
        if (cols == 0) {
            e_begin = e_end;
            continue;
        }
        Matrix hats = Matrix::Zero(n, cols);
        for (int c = 0; c < cols; ++c) hats.col(c) = dual_hat_vector(dual, first + c, n);
        const Matrix rhs = k.apply_transpose(a.matrix() * hats);
        const BatchCgResult solved = cg_fixed_batch(ktak, rhs, iterations, early_exit);
        for (int c = 0; c < cols; ++c) {
            space.cg_iterations[first + c] = solved.iterations[c];
            space.cg_residuals[first + c] = solved.final_residual[c];
            if (options.ideal && solved.final_residual[c] > early_exit)
                throw NumericalError("ideal corrector: CG iteration cap reached for dual node " +
                                     std::to_string(first + c));
        }
        Matrix basis = hats - k.apply(solved.x);

        for (int e = e_begin; e < e_end; ++e) {
            const int li = static_cast<int>(dual.elements[e].nodes.size());
            const int local = dual.offsets[e] - first;
            for (int j = 0; j < li; ++j) space.owner[dual.offsets[e] + j] = e;
            if (li == 0 || !options.orthonormalize) continue;
            Matrix block = basis.middleCols(local, li);
            try {
                mgs_orthonormalize(block, energy);
            } catch (const NumericalError& err) {
                throw NumericalError("multiscale basis of element " + std::to_string(e) + ": " + err.what());
            }
            basis.middleCols(local, li) = block;
        }

        for (int c = 0; c < cols; ++c) {
            const double cmax = basis.col(c).cwiseAbs().maxCoeff();
            const double cut = options.drop_tol * cmax;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double v = basis(i, c);
                if (v == 0.0) continue;
                if (std::abs(v) < cut) {
                    ++dropped;
                    dropped_max = std::max(dropped_max, std::abs(v) / cmax);
                    continue;
                }
                triplets.emplace_back(static_cast<int>(i), first + c, v);
            }
        }
        e_begin = e_end;
    }

    space.basis.resize(n, total);
    space.basis.setFromTriplets(triplets.begin(), triplets.end());
    space.certificate.dropped_entries = dropped;
    space.certificate.dropped_max = dropped_max;
    return space;
}

} // namespace slod
