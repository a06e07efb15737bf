#include "slod/dense.hpp"

#include "slod/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>

namespace slod {

namespace {

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

} // namespace

EigenDecomposition sym_generalized_eig(const Matrix& a, const Matrix& s, double tol) {
    SLOD_REQUIRE(a.rows() == a.cols() && s.rows() == s.cols() && a.rows() == s.rows(),
                 "eigenproblem matrices must be square and of equal size");
    EigenDecomposition out;
    if (a.rows() == 0) return out;

    const double a_scale = std::max(max_abs(a), 1e-300);
    const double s_scale = std::max(max_abs(s), 1e-300);
    if (max_abs(a - a.transpose()) > 1e-12 * a_scale || max_abs(s - s.transpose()) > 1e-12 * s_scale)
        throw InvalidArgument("sym_generalized_eig: input is not symmetric");

    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) throw NumericalError("sym_generalized_eig: S is not positive definite");

    // C = L^{-1} A L^{-T}, symmetric.
    Matrix c = llt.matrixL().solve(a);
    c = llt.matrixL().solve(c.transpose()).transpose();
    c = 0.5 * (c + c.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(c);
    if (es.info() != Eigen::Success) throw NumericalError("sym_generalized_eig: eigensolver did not converge");

    out.eigenvalues = es.eigenvalues();
    out.eigenvectors = llt.matrixL().transpose().solve(es.eigenvectors());

    // Backward error per pair: ||A psi - lambda S psi|| / ((||A|| + |lambda| ||S||) ||psi||).
    const double a_norm = a.operatorNorm();
    const double s_norm = s.operatorNorm();
    const Matrix residual = a * out.eigenvectors - s * out.eigenvectors * out.eigenvalues.asDiagonal();
    for (Eigen::Index j = 0; j < residual.cols(); ++j) {
        const double scale =
            (a_norm + std::abs(out.eigenvalues[j]) * s_norm) * out.eigenvectors.col(j).norm();
        out.max_residual = std::max(out.max_residual, residual.col(j).norm() / std::max(scale, 1e-300));
    }
    if (out.max_residual > tol)
        throw NumericalError("sym_generalized_eig: residual " + std::to_string(out.max_residual) +
                             " exceeds tolerance");
    if (std::abs(out.eigenvalues[0]) <= tol * a_norm) out.eigenvalues[0] = std::max(out.eigenvalues[0], 0.0);
    return out;
}

namespace {

void mgs_pass(Matrix& v, Matrix& av, Matrix& r, const Vector& initial_norms, double breakdown) {
    const Eigen::Index q = v.cols();
    r = Matrix::Zero(q, q);
    for (Eigen::Index i = 0; i < q; ++i) {
        const double rii2 = v.col(i).dot(av.col(i));
        const double rii = std::sqrt(std::max(rii2, 0.0));
        if (!(rii > breakdown * initial_norms[i]))
            throw NumericalError("mgs_orthonormalize: breakdown at column " + std::to_string(i) +
                                 " (vectors numerically dependent)");
        r(i, i) = rii;
        v.col(i) /= rii;
        av.col(i) /= rii;
        for (Eigen::Index j = i + 1; j < q; ++j) {
            const double rij = v.col(i).dot(av.col(j));
            r(i, j) = rij;
            v.col(j) -= rij * v.col(i);
            av.col(j) -= rij * av.col(i);
        }
    }
}

double orthogonality_defect(const Matrix& v, const Matrix& av) {
    if (v.cols() == 0) return 0.0;
    const Matrix g = v.transpose() * av;
    return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

} // namespace

MgsResult mgs_orthonormalize(Matrix& vectors, const InnerProductOperator& apply_a, double ortho_tol,
                             double breakdown) {
    MgsResult res;
    const Eigen::Index q = vectors.cols();
    if (q == 0) {
        res.r = Matrix(0, 0);
        return res;
    }
    Matrix av = apply_a(vectors);
    Vector initial(q);
    for (Eigen::Index i = 0; i < q; ++i) initial[i] = std::sqrt(std::max(vectors.col(i).dot(av.col(i)), 0.0));

    mgs_pass(vectors, av, res.r, initial, breakdown);
    av = apply_a(vectors);
    res.orthogonality = orthogonality_defect(vectors, av);
    if (res.orthogonality > ortho_tol) {
        Matrix r2;
        mgs_pass(vectors, av, r2, Vector::Ones(q), breakdown);
        res.r = r2 * res.r;
        res.passes = 2;
        av = apply_a(vectors);
        res.orthogonality = orthogonality_defect(vectors, av);
    }
    return res;
}

Matrix project_out(const Matrix& v, const Matrix& basis, const InnerProductOperator& apply_a) {
    if (basis.cols() == 0 || v.cols() == 0) return v;
    SLOD_REQUIRE(basis.rows() == v.rows(), "project_out: size mismatch");
    const Matrix ab = apply_a(basis);
    Matrix out = v;
    for (int pass = 0; pass < 2; ++pass) out -= basis * (ab.transpose() * out);
    return out;
}

Vector dense_spd_solve(const Matrix& m, const Vector& b) {
    SLOD_REQUIRE(m.rows() == m.cols() && m.rows() == b.rows(), "dense_spd_solve: size mismatch");
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) throw NumericalError("dense_spd_solve: matrix is not positive definite");
    return llt.solve(b);
}

Matrix dense_spd_solve(const Matrix& m, const Matrix& b) {
    SLOD_REQUIRE(m.rows() == m.cols() && m.rows() == b.rows(), "dense_spd_solve: size mismatch");
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) throw NumericalError("dense_spd_solve: matrix is not positive definite");
    return llt.solve(b);
}

double two_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    const Matrix mtm = m.transpose() * m;
    // Start from the row sums of |M^T M| plus a ramp so the start vector is
    // never orthogonal to the dominant singular vector by construction.
    Vector x = mtm.cwiseAbs().rowwise().sum();
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += 1.0 + 1e-3 * static_cast<double>(i);
    x.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 10000; ++it) {
        Vector y = mtm * x;
        const double next = x.dot(y);
        const double ny = y.norm();
        if (ny == 0.0) return 0.0;
        x = y / ny;
        if (std::abs(next - lambda) <= 1e-10 * std::abs(next) && it > 2) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

double min_singular(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues().minCoeff();
}

} // namespace slod
