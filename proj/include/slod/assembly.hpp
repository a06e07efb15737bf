#pragma once

#include "slod/coefficient.hpp"
#include "slod/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <vector>

namespace slod {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Symmetric sparse operator over the interior fine nodes (compressed rows).
class SparseOperator {
public:
    SparseOperator() = default;
    explicit SparseOperator(SparseMatrix m) : m_(std::move(m)) {}

    Eigen::Index dim() const { return m_.rows(); }
    const SparseMatrix& matrix() const { return m_; }

    Vector apply(const Vector& x) const { return m_ * x; }
    /// Multi-vector product, columns independent.
    Matrix apply(const Matrix& x) const;

    double quadratic(const Vector& x) const { return x.dot(m_ * x); }
    double entry(int i, int j) const { return m_.coeff(i, j); }
    Vector diagonal() const { return m_.diagonal(); }

    /// Rows/columns restricted to `support` (local numbering follows the list).
    SparseMatrix restrict_to(const std::vector<int>& support) const;

private:
    SparseMatrix m_;
};

using ElementMatrix = Eigen::Matrix4d;

/// Closed-form Q1 element matrices on a square of side h, corners ordered
/// SW, SE, NE, NW.
struct ElementMatrices {
    ElementMatrix stiffness;
    ElementMatrix mass;
};
ElementMatrices q1_element_matrices(double h, double kappa_e);

SparseOperator assemble_stiffness(const MeshHierarchy& mesh, const CoefficientField& kappa);
/// Mass matrix weighted by a per-element factor (pass a constant 1 field for
/// the plain L2 mass).
SparseOperator assemble_mass(const MeshHierarchy& mesh, const CoefficientField& weight);
Vector assemble_load(const MeshHierarchy& mesh, const SourceField& f);

/// Local forms of one coarse element over V_h(K_i).
struct LocalForms {
    int element = -1;
    std::vector<int> nodes;  ///< global ids of V_h(K_i), row-major in the element
    Matrix stiffness;        ///< a_i
    Matrix weighted_mass;    ///< s_i, includes the H^-2 factor
    Matrix mass;             ///< unweighted L2 mass (diagnostics)
};

LocalForms assemble_local_forms(const MeshHierarchy& mesh, const CoefficientField& kappa, int element);

/// Operators needed to evaluate the norms used throughout: energy, L2,
/// L2(kappa) and the H1 seminorm.
struct NormOperators {
    SparseOperator stiffness;
    SparseOperator mass;
    SparseOperator weighted_mass;
    SparseOperator laplace;
};

NormOperators build_norm_operators(const MeshHierarchy& mesh, const CoefficientField& kappa);

struct Norms {
    double energy = 0.0;
    double l2 = 0.0;
    double l2_kappa = 0.0;
    double h1_semi = 0.0;
};

Norms norms(const NormOperators& ops, const Vector& v);

} // namespace slod
