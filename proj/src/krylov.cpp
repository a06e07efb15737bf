#include "slod/krylov.hpp"

#include "slod/error.hpp"
#include "slod/parallel.hpp"
#include "slod/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <deque>

namespace slod {

std::pair<double, double> ritz_extremes(const std::vector<double>& alphas, const std::vector<double>& betas) {
    const auto k = static_cast<Eigen::Index>(alphas.size());
    if (k == 0) return {1.0, 1.0};
    Vector diag(k);
    Vector sub(std::max<Eigen::Index>(k - 1, 0));
    for (Eigen::Index j = 0; j < k; ++j) {
        diag[j] = 1.0 / alphas[j];
        if (j > 0) diag[j] += betas[j - 1] / alphas[j - 1];
        if (j + 1 < k) sub[j] = std::sqrt(betas[j]) / alphas[j];
    }
    if (k == 1) return {diag[0], diag[0]};
    Eigen::SelfAdjointEigenSolver<Matrix> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    return {es.eigenvalues()[0], es.eigenvalues()[k - 1]};
}

double contraction_factor(double condition) {
    const double s = std::sqrt(std::max(condition, 1.0));
    return (s - 1.0) / (s + 1.0);
}

namespace {

void fill_ritz(CgReport& rep) {
    if (rep.alphas.empty()) return;
    const auto [lo, hi] = ritz_extremes(rep.alphas, rep.betas);
    rep.theta_min = lo;
    rep.theta_max = hi;
    rep.condition = lo > 0.0 ? std::max(hi / lo, 1.0) : std::numeric_limits<double>::infinity();
    rep.q = contraction_factor(rep.condition);
}

} // namespace

CgResult cg(const LinearOperator& op, const Vector& b, const CgOptions& options, bool throw_on_cap) {
    SLOD_REQUIRE(b.size() == op.dim(), "cg: right-hand side size mismatch");
    SLOD_REQUIRE(b.allFinite(), "cg: right-hand side is not finite");
    SLOD_REQUIRE(options.mode == CgMode::Tolerance || options.iterations >= 0,
                 "cg: negative iteration count");
    CgResult res;
    res.x = Vector::Zero(b.size());
    CgReport& rep = res.report;
    const double bnorm = b.norm();
    rep.residual_history.push_back(bnorm > 0.0 ? 1.0 : 0.0);
    if (bnorm == 0.0) {
        rep.converged = true;
        return res;
    }
    const bool fixed = options.mode == CgMode::FixedIterations;
    const int cap = fixed ? options.iterations
                          : (options.max_iterations > 0 ? options.max_iterations
                                                        : static_cast<int>(10 * op.dim()));
    const double stop_tol = fixed ? options.early_exit : options.tol;

    Vector r = b;
    Vector p = r;
    Vector q(b.size());
    double rr = r.squaredNorm();
    Matrix pm(b.size(), 1);
    Matrix qm;
    while (rep.iterations < cap) {
        pm.col(0) = p;
        op.apply(pm, qm);
        q = qm.col(0);
        const double pap = p.dot(q);
        if (!(pap > 0.0))
            throw NumericalError("cg: breakdown (p^T A p = " + std::to_string(pap) +
                                 "), operator is not positive definite");
        const double alpha = rr / pap;
        res.x += alpha * p;
        r -= alpha * q;
        const double rr_new = r.squaredNorm();
        const double beta = rr_new / rr;
        rr = rr_new;
        ++rep.iterations;
        rep.alphas.push_back(alpha);
        rep.betas.push_back(beta);
        const double relres = std::sqrt(rr) / bnorm;
        rep.residual_history.push_back(relres);
        if (relres < stop_tol || rr == 0.0) {
            rep.converged = true;
            break;
        }
        if (options.monitor && options.monitor(rep)) break;
        p = r + beta * p;
    }
    if (options.record_ritz) fill_ritz(rep);
    if (!fixed && !rep.converged && throw_on_cap)
        throw NumericalError("cg: iteration cap " + std::to_string(cap) + " reached at relative residual " +
                             std::to_string(rep.residual_history.back()));
    return res;
}

ConditionEstimate estimate_condition(const LinearOperator& op, std::uint64_t seed) {
    KeyedRng rng{seed, 0x636f6e64ULL};
    Vector b(op.dim());
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        // Box-Muller; only the cosine branch is used so each entry costs two draws.
        const double u1 = 1.0 - rng.uniform();
        const double u2 = rng.uniform();
        b[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    b.normalize();

    std::deque<double> window;
    CgOptions opt;
    opt.mode = CgMode::Tolerance;
    opt.tol = 1e-14;
    opt.monitor = [&window](const CgReport& rep) {
        if (rep.alphas.size() < 2) return false;
        const auto [lo, hi] = ritz_extremes(rep.alphas, rep.betas);
        window.push_back(hi / lo);
        if (window.size() > 11) window.pop_front();
        if (window.size() < 11) return false;
        const double last = window.back();
        for (double v : window)
            if (std::abs(v - last) > 1e-3 * last) return false;
        return true;
    };
    CgResult res = cg(op, b, opt);
    return {res.report.condition, res.report.q, std::move(res.report)};
}

namespace {

void batch_chunk(const LinearOperator& op, const Matrix& b, Eigen::Index first, Eigen::Index count, int iterations,
                 double early_exit, BatchCgResult& out) {
    const Eigen::Index n = b.rows();
    Matrix x = Matrix::Zero(n, count);
    Matrix r = b.middleCols(first, count);
    Matrix p = r;
    Matrix q;
    Vector rr(count);
    Vector bnorm(count);
    std::vector<bool> active(static_cast<std::size_t>(count));
    std::vector<int> its(static_cast<std::size_t>(count), 0);
    std::vector<double> relres(static_cast<std::size_t>(count), 0.0);
    int n_active = 0;
    for (Eigen::Index c = 0; c < count; ++c) {
        rr[c] = r.col(c).squaredNorm();
        bnorm[c] = std::sqrt(rr[c]);
        active[c] = bnorm[c] > 0.0 && iterations > 0;
        relres[c] = bnorm[c] > 0.0 ? 1.0 : 0.0;
        n_active += active[c];
    }
    for (int it = 0; it < iterations && n_active > 0; ++it) {
        op.apply(p, q);
        for (Eigen::Index c = 0; c < count; ++c) {
            if (!active[c]) continue;
            const double pap = p.col(c).dot(q.col(c));
            if (!(pap > 0.0)) throw NumericalError("cg: breakdown in batched solve, operator is not positive definite");
            const double alpha = rr[c] / pap;
            x.col(c) += alpha * p.col(c);
            r.col(c) -= alpha * q.col(c);
            const double rr_new = r.col(c).squaredNorm();
            const double beta = rr_new / rr[c];
            rr[c] = rr_new;
            ++its[c];
            relres[c] = std::sqrt(rr_new) / bnorm[c];
            if (relres[c] < early_exit || rr_new == 0.0) {
                active[c] = false;
                --n_active;
                continue;
            }
            p.col(c) = r.col(c) + beta * p.col(c);
        }
    }
    out.x.middleCols(first, count) = x;
    for (Eigen::Index c = 0; c < count; ++c) {
        out.iterations[first + c] = its[c];
        out.final_residual[first + c] = relres[c];
    }
}

} // namespace

BatchCgResult cg_fixed_batch(const LinearOperator& op, const Matrix& b, int iterations, double early_exit,
                             int chunk) {
    SLOD_REQUIRE(b.rows() == op.dim(), "cg_fixed_batch: right-hand side size mismatch");
    SLOD_REQUIRE(chunk > 0, "cg_fixed_batch: chunk must be positive");
    BatchCgResult out;
    out.x = Matrix::Zero(b.rows(), b.cols());
    out.iterations.assign(static_cast<std::size_t>(b.cols()), 0);
    out.final_residual.assign(static_cast<std::size_t>(b.cols()), 0.0);
    const Eigen::Index chunks = (b.cols() + chunk - 1) / chunk;
    ParallelErrors errors;
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index c = 0; c < chunks; ++c) {
        errors.run([&] {
            const Eigen::Index first = c * chunk;
            const Eigen::Index count = std::min<Eigen::Index>(chunk, b.cols() - first);
            batch_chunk(op, b, first, count, iterations, early_exit, out);
        });
    }
    errors.rethrow();
    return out;
}

} // namespace slod
