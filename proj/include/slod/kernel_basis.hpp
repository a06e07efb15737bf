#pragma once

#include "slod/assembly.hpp"
#include "slod/aux_space.hpp"
#include "slod/dual_space.hpp"
#include "slod/mesh.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace slod {

enum class EntityKind : std::int32_t { Element = 0, Edge = 1, Vertex = 2 };

const char* to_string(EntityKind kind);

/// One dense column block of K, attached to a coarse entity.
struct KernelBlock {
    EntityKind kind = EntityKind::Element;
    int entity = -1;
    std::vector<int> support;        ///< ascending global node ids
    std::vector<int> coarse_support; ///< coarse elements the columns live on
    std::vector<int> origins;        ///< node p whose phi_p - phi_tilde_p seeded each column
    Matrix columns;                  ///< support.size() x origins.size()
    Eigen::Index first_column = 0;

    Eigen::Index cols() const { return columns.cols(); }
};

/// Basis of Ker Pi_aux stored as element, edge and vertex blocks (the
/// columns of K). Blocks are ordered: all elements, all edges, all vertices.
class BlockKernelBasis {
public:
    Eigen::Index n = 0;
    Eigen::Index ell = 0;
    int element_count = 0;
    int edge_count = 0;
    std::vector<KernelBlock> blocks;

    const KernelBlock& element_block(int e) const { return blocks[e]; }
    const KernelBlock& edge_block(int e) const { return blocks[element_count + e]; }
    const KernelBlock& vertex_block(int v) const { return blocks[element_count + edge_count + v]; }

    /// K x for a block of coefficient vectors (ell x b) -> n x b.
    Matrix apply(const Matrix& x) const;
    /// K^T w for w (n x b) -> ell x b.
    Matrix apply_transpose(const Matrix& w) const;
    /// Dense K (toy meshes only).
    Matrix dense() const;
    void assign_column_offsets();
};

/// Context shared by the kernel-basis builders.
struct KernelContext {
    const MeshHierarchy& mesh;
    const NodeClassification& classes;
    const AuxSpace& aux;
    const DualNodeSet& dual;
    const DualFunctions& functions;
    const SparseOperator& a;
};

/// Coarse elements whose closure contains fine node p.
std::vector<int> elements_containing(const MeshHierarchy& mesh, const NodeClassification& classes, int p);

/// phi_p - phi_tilde_p with ||phi_p||_a = 1. Throws for dual nodes.
Vector raw_kernel_vector(const KernelContext& ctx, int p);

struct KernelBuildStats {
    int element_reorthogonalized = 0;
    int edge_reorthogonalized = 0;
    int vertex_reorthogonalized = 0;
    double worst_orthogonality = 0.0;
};

/// Substructured A-orthonormalization: per-element MGS, then per-edge
/// projection against the two adjacent element blocks followed by MGS, then
/// per-vertex projection against the four element and four edge blocks
/// followed by normalization.
BlockKernelBasis substructure_orthonormalize(const KernelContext& ctx, KernelBuildStats* stats = nullptr);

struct EntryClass {
    long long count = 0;   ///< entries above the zero tolerance
    double max_abs = 0.0;
};

/// Observed structure of K^T A K = I + B.
struct StructureReport {
    double max_diag_deviation = 0.0;        ///< max |diag - 1|
    double max_block_orthogonality = 0.0;   ///< off-diagonal entries inside one block
    double max_orthogonalized_pairs = 0.0;  ///< pairs made orthogonal by the construction
    double max_disjoint = 0.0;              ///< pairs whose coarse supports share no element
    double max_asymmetry = -1.0;            ///< max |B - B^T|, computed on small problems only
    std::map<std::string, EntryClass> classes;  ///< remaining pairs by category
};

StructureReport verify_ktak_structure(const BlockKernelBasis& k, const SparseOperator& a, double zero_tol = 1e-8);

/// Little-endian binary dump of the blocks with a versioned header.
struct KernelDumpHeader {
    std::int64_t coarse_divisions = 0;
    std::int64_t refine_ratio = 0;
    std::uint64_t dual_seed = 0;
    std::uint64_t config_hash = 0;
};

void write_kernel_basis(const std::filesystem::path& path, const BlockKernelBasis& k, const KernelDumpHeader& header);
BlockKernelBasis read_kernel_basis(const std::filesystem::path& path, KernelDumpHeader* header = nullptr);

} // namespace slod
