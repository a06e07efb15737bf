#pragma once

#include "slod/assembly.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace slod {

class BlockKernelBasis;

/// Symmetric operator applied to blocks of column vectors. Implementations
/// must be safe to call concurrently.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual Eigen::Index dim() const = 0;
    virtual void apply(const Matrix& x, Matrix& y) const = 0;

    Vector apply(const Vector& x) const {
        Matrix y;
        apply(Matrix(x), y);
        return y.col(0);
    }
};

class SparseLinearOperator final : public LinearOperator {
public:
    explicit SparseLinearOperator(const SparseOperator& a) : a_(a) {}
    Eigen::Index dim() const override { return a_.dim(); }
    void apply(const Matrix& x, Matrix& y) const override { y.noalias() = a_.matrix() * x; }

private:
    const SparseOperator& a_;
};

class DenseLinearOperator final : public LinearOperator {
public:
    explicit DenseLinearOperator(Matrix m) : m_(std::move(m)) {}
    Eigen::Index dim() const override { return m_.rows(); }
    void apply(const Matrix& x, Matrix& y) const override { y.noalias() = m_ * x; }

private:
    Matrix m_;
};

/// y = K^T (A (K x)) without forming the product.
class ComposedKtak final : public LinearOperator {
public:
    ComposedKtak(const BlockKernelBasis& k, const SparseOperator& a);
    Eigen::Index dim() const override;
    void apply(const Matrix& x, Matrix& y) const override;

private:
    const BlockKernelBasis& k_;
    const SparseOperator& a_;
};

std::unique_ptr<LinearOperator> composed_ktak(const BlockKernelBasis& k, const SparseOperator& a);

enum class CgMode { FixedIterations, Tolerance };

struct CgReport {
    int iterations = 0;
    std::vector<double> residual_history;  ///< ||r_j||_2 / ||b||_2, starting with j = 0
    std::vector<double> alphas;
    std::vector<double> betas;
    double theta_min = 1.0;  ///< extreme Ritz values of the Lanczos tridiagonal
    double theta_max = 1.0;
    double condition = 1.0;
    double q = 0.0;
    bool converged = false;  ///< stopped on the residual test
};

struct CgOptions {
    CgMode mode = CgMode::Tolerance;
    int iterations = 0;           ///< step count in FixedIterations mode
    double tol = 1e-14;           ///< relative residual target (Tolerance mode)
    double early_exit = 1e-14;    ///< FixedIterations still stops below this
    int max_iterations = -1;      ///< Tolerance-mode cap; default 10 * dim
    bool record_ritz = true;
    /// Called after every step; returning true stops the iteration.
    std::function<bool(const CgReport&)> monitor;
};

struct CgResult {
    Vector x;
    CgReport report;
};

/// Conjugate gradients from a zero initial guess. Throws NumericalError on
/// breakdown (p^T A p <= 0) and, in Tolerance mode, when the cap is reached
/// without convergence and `throw_on_cap` is set.
CgResult cg(const LinearOperator& op, const Vector& b, const CgOptions& options, bool throw_on_cap = false);

/// Extreme eigenvalues of the Lanczos tridiagonal built from CG step sizes.
std::pair<double, double> ritz_extremes(const std::vector<double>& alphas, const std::vector<double>& betas);

/// q = (sqrt(K) - 1) / (sqrt(K) + 1).
double contraction_factor(double condition);

struct ConditionEstimate {
    double condition = 1.0;
    double q = 0.0;
    CgReport report;
};

/// Runs CG on a seeded random unit right-hand side and reads the condition
/// number from the Ritz values; stops once the estimate changes by less than
/// 1e-3 (relative) over 10 consecutive steps.
ConditionEstimate estimate_condition(const LinearOperator& op, std::uint64_t seed);

/// Independent CG runs for every column of `b`, each for exactly
/// `iterations` steps unless its relative residual drops below
/// `early_exit`. Columns are processed in fixed-size chunks, so the output
/// does not depend on the thread count.
struct BatchCgResult {
    Matrix x;
    std::vector<int> iterations;
    std::vector<double> final_residual;
};
BatchCgResult cg_fixed_batch(const LinearOperator& op, const Matrix& b, int iterations, double early_exit = 1e-14,
                             int chunk = 16);

} // namespace slod
