#include "slod/aux_space.hpp"

#include "slod/dense.hpp"
#include "slod/error.hpp"
#include "slod/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace slod {

double LocalEigenBasis::next_eigenvalue() const {
    return count < eigenvalues.size() ? eigenvalues[count] : std::numeric_limits<double>::infinity();
}

double mu_lower_bound(BoundaryClass boundary_class) {
    constexpr double pi2 = std::numbers::pi * std::numbers::pi;
    switch (boundary_class) {
    case BoundaryClass::Interior: return pi2;
    case BoundaryClass::OneEdgeOnBoundary: return pi2 / 4.0;
    case BoundaryClass::TwoEdgesOnBoundary: return pi2 / 2.0;
    }
    return pi2;
}

LocalEigenBasis build_local_basis(const LocalForms& forms, BoundaryClass boundary_class, int min_modes,
                                  double eig_tol, double zero_tol) {
    SLOD_REQUIRE(min_modes >= 0, "min_modes must be non-negative");
    LocalEigenBasis lb;
    lb.element = forms.element;
    lb.mu_hat = mu_lower_bound(boundary_class);
    EigenDecomposition ed = sym_generalized_eig(forms.stiffness, forms.weighted_mass, eig_tol);
    const double a_norm = forms.stiffness.cwiseAbs().rowwise().sum().maxCoeff();
    for (Eigen::Index j = 0; j < ed.eigenvalues.size(); ++j)
        if (std::abs(ed.eigenvalues[j]) <= zero_tol * a_norm) ed.eigenvalues[j] = 0.0;
    lb.eigenvalues = ed.eigenvalues;
    const double threshold = lb.threshold();
    while (lb.count < lb.eigenvalues.size() && lb.eigenvalues[lb.count] <= threshold) ++lb.count;
    lb.rule_count = lb.count;
    lb.count = std::max<int>(lb.count, std::min<int>(min_modes, static_cast<int>(lb.eigenvalues.size())));
    lb.modes = ed.eigenvectors.leftCols(lb.count);
    return lb;
}

int AuxElement::local_index(int node) const {
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), node);
    return it != nodes.end() && *it == node ? static_cast<int>(it - nodes.begin()) : -1;
}

AuxSpace build_aux_space(const MeshHierarchy& mesh, const NodeClassification& classes,
                         const CoefficientField& kappa, const AuxOptions& options) {
    AuxSpace aux;
    aux.elements.resize(mesh.m());
    ParallelErrors errors;
#pragma omp parallel for schedule(dynamic)
    for (int e = 0; e < mesh.m(); ++e) {
        errors.run([&] {
            const LocalForms forms = assemble_local_forms(mesh, kappa, e);
            AuxElement& ae = aux.elements[e];
            ae.basis = build_local_basis(forms, classes.element_class[e], options.min_modes);
            ae.nodes = forms.nodes;
            ae.projector = forms.weighted_mass * ae.basis.modes;
        });
    }
    errors.rethrow();
    for (const AuxElement& ae : aux.elements) aux.total += ae.basis.count;
    aux.c_star = c_star();
    return aux;
}

std::vector<Vector> pi_aux_coeffs(const AuxSpace& aux, const Vector& v) {
    std::vector<Vector> out(aux.elements.size());
    for (std::size_t e = 0; e < aux.elements.size(); ++e) {
        const AuxElement& ae = aux.elements[e];
        Vector local(static_cast<Eigen::Index>(ae.nodes.size()));
        for (std::size_t i = 0; i < ae.nodes.size(); ++i) local[static_cast<Eigen::Index>(i)] = v[ae.nodes[i]];
        out[e] = ae.projector.transpose() * local;
    }
    return out;
}

Vector pi_aux_local(const AuxSpace& aux, int element, const Vector& coeffs) {
    return aux.elements[element].basis.modes * coeffs;
}

double c_star() { return 2.0 * std::numbers::sqrt2 / std::numbers::pi; }

double first_nonzero_laplace_eigenvalue(const MeshHierarchy& mesh, int element) {
    const LocalForms forms = assemble_local_forms(mesh, constant_field(mesh, 1.0), element);
    const EigenDecomposition ed = sym_generalized_eig(forms.stiffness, forms.weighted_mass);
    const double a_norm = forms.stiffness.cwiseAbs().rowwise().sum().maxCoeff();
    for (Eigen::Index j = 0; j < ed.eigenvalues.size(); ++j)
        if (ed.eigenvalues[j] > 1e-10 * a_norm) return ed.eigenvalues[j];
    throw NumericalError("no nonzero eigenvalue on element " + std::to_string(element));
}

} // namespace slod
