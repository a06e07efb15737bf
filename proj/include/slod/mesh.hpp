#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace slod {

/// Fine-grid node coordinates, 0..fine_divisions in each direction.
struct GridPoint {
    int x = 0;
    int y = 0;
};

/// An interior edge of the coarse mesh together with the fine nodes
/// strictly inside it.
struct CoarseEdge {
    bool vertical = false;            ///< true: edge lies on x = const
    std::array<int, 2> elements{};    ///< lower/left element first
    std::vector<int> nodes;           ///< interior fine nodes, ordered along the edge
};

/// An interior vertex of the coarse mesh.
struct CoarseVertex {
    int node = -1;                    ///< global fine node id
    std::array<int, 4> elements{};    ///< SW, SE, NE, NW
    std::array<int, 4> edges{};       ///< S, E, N, W (edges touching the vertex)
};

/// Nested uniform coarse/fine quadrilateral meshes of the unit square.
///
/// Only interior fine nodes carry degrees of freedom; ids are row-major
/// over the tensor grid (x fastest). Coarse element and fine element ids
/// are row-major as well.
class MeshHierarchy {
public:
    MeshHierarchy(int coarse_divisions, int refine_ratio);

    int coarse_divisions() const { return coarse_divisions_; }
    int refine_ratio() const { return refine_ratio_; }
    int fine_divisions() const { return coarse_divisions_ * refine_ratio_; }
    double H() const { return 1.0 / coarse_divisions_; }
    double h() const { return 1.0 / fine_divisions(); }

    /// Number of coarse elements.
    int m() const { return coarse_divisions_ * coarse_divisions_; }
    /// Number of interior fine nodes, dim V_h.
    int n() const { return (fine_divisions() - 1) * (fine_divisions() - 1); }
    int fine_element_count() const { return fine_divisions() * fine_divisions(); }

    /// Global id of grid point (x, y), or -1 when it lies on the boundary.
    int node_id(int x, int y) const;
    GridPoint node_point(int id) const;

    int fine_element_id(int ex, int ey) const { return ey * fine_divisions() + ex; }
    /// Corner node ids of a fine element in SW, SE, NE, NW order (-1 on the boundary).
    std::array<int, 4> fine_element_nodes(int ex, int ey) const;

    GridPoint coarse_element_origin(int element) const;

    /// V_h(K_i): fine nodes of the closed coarse element that are not on the
    /// domain boundary, row-major within the element.
    const std::vector<int>& element_nodes(int element) const { return element_nodes_[element]; }
    /// Fine nodes strictly inside the coarse element, row-major.
    const std::vector<int>& element_interior_nodes(int element) const {
        return element_interior_[element];
    }
    /// Fine element ids contained in the coarse element.
    std::vector<int> element_fine_elements(int element) const;

    const std::vector<CoarseEdge>& edges() const { return edges_; }
    const std::vector<CoarseVertex>& vertices() const { return vertices_; }
    /// Edges of a coarse element that are interior edges (S, E, N, W order, -1 when on the boundary).
    std::array<int, 4> element_edges(int element) const;

private:
    int coarse_divisions_;
    int refine_ratio_;
    std::vector<std::vector<int>> element_nodes_;
    std::vector<std::vector<int>> element_interior_;
    std::vector<CoarseEdge> edges_;
    std::vector<CoarseVertex> vertices_;
};

MeshHierarchy build_hierarchy(int coarse_divisions, int refine_ratio);

enum class NodeKind : std::uint8_t { ElementInterior, EdgeInterior, CoarseVertex };

enum class BoundaryClass : std::uint8_t { Interior, OneEdgeOnBoundary, TwoEdgesOnBoundary };

struct NodeLabel {
    NodeKind kind = NodeKind::ElementInterior;
    int entity = -1;  ///< owning coarse element, edge, or vertex id
};

/// Partition of interior fine nodes by the coarse entity that owns them.
struct NodeClassification {
    std::vector<NodeLabel> labels;             ///< one per interior fine node
    std::vector<BoundaryClass> element_class;  ///< one per coarse element
    int element_interior_count = 0;
    int edge_interior_count = 0;
    int vertex_count = 0;
};

NodeClassification classify_nodes(const MeshHierarchy& mesh);

const char* to_string(BoundaryClass c);

} // namespace slod
