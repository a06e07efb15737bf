#pragma once

#include <Eigen/Dense>

#include <functional>

namespace slod {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Full spectrum of a symmetric-definite pencil, eigenvalues ascending.
struct EigenDecomposition {
    Vector eigenvalues;
    Matrix eigenvectors;  ///< columns, S-orthonormal
    double max_residual = 0.0;  ///< largest normwise backward error over the pairs
};

/// Solves A psi = lambda S psi for symmetric PSD A and symmetric PD S by
/// reduction to standard form through the Cholesky factor of S.
///
/// Throws InvalidArgument for non-symmetric input and NumericalError when
/// S is not positive definite or the residual exceeds tol * ||A||.
EigenDecomposition sym_generalized_eig(const Matrix& a, const Matrix& s, double tol = 1e-9);

/// Applies the SPD operator defining the inner product to a block of vectors.
using InnerProductOperator = std::function<Matrix(const Matrix&)>;

struct MgsResult {
    Matrix r;                   ///< upper triangular, positive diagonal, V_in = V_out * R
    int passes = 1;             ///< 2 when re-orthogonalization was needed
    double orthogonality = 0.0; ///< max |<v_i, v_j>_A - delta_ij| after the last pass
};

/// Modified Gram-Schmidt in the inner product <x, y> = x^T A y. The columns
/// of `vectors` are overwritten with an A-orthonormal set with the same span.
/// A second pass runs when the first leaves an orthogonality defect above
/// `ortho_tol`. Throws NumericalError when r_ii drops below `breakdown` times
/// the column's initial A-norm.
MgsResult mgs_orthonormalize(Matrix& vectors, const InnerProductOperator& apply_a, double ortho_tol = 1e-8,
                             double breakdown = 1e-12);

/// Removes the A-components along an A-orthonormal basis:
/// v - sum_b <v, b>_A b, applied twice so the result stays orthogonal to
/// working precision. Works column-wise on a block of vectors.
Matrix project_out(const Matrix& v, const Matrix& basis, const InnerProductOperator& apply_a);

Vector dense_spd_solve(const Matrix& m, const Vector& b);
Matrix dense_spd_solve(const Matrix& m, const Matrix& b);

/// Largest singular value by power iteration on M^T M (relative tol 1e-10).
double two_norm(const Matrix& m);
double min_singular(const Matrix& m);

} // namespace slod
