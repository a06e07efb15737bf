#include "slod/mesh.hpp"

#include "slod/error.hpp"

#include <string>

namespace slod {

MeshHierarchy::MeshHierarchy(int coarse_divisions, int refine_ratio)
    : coarse_divisions_(coarse_divisions), refine_ratio_(refine_ratio) {
    SLOD_REQUIRE(coarse_divisions >= 2,
                 "coarse_divisions must be >= 2 (got " + std::to_string(coarse_divisions) + ")");
    SLOD_REQUIRE(refine_ratio >= 2,
                 "refine_ratio must be >= 2 (got " + std::to_string(refine_ratio) + ")");

    const int nc = coarse_divisions_;
    const int r = refine_ratio_;

    element_nodes_.resize(m());
    element_interior_.resize(m());
    for (int e = 0; e < m(); ++e) {
        const GridPoint o = coarse_element_origin(e);
        for (int y = o.y; y <= o.y + r; ++y) {
            for (int x = o.x; x <= o.x + r; ++x) {
                const int id = node_id(x, y);
                if (id < 0) continue;
                element_nodes_[e].push_back(id);
                if (x > o.x && x < o.x + r && y > o.y && y < o.y + r)
                    element_interior_[e].push_back(id);
            }
        }
    }

    // Vertical edges first (x = const), then horizontal ones.
    for (int cy = 0; cy < nc; ++cy) {
        for (int cx = 0; cx + 1 < nc; ++cx) {
            CoarseEdge edge;
            edge.vertical = true;
            edge.elements = {cy * nc + cx, cy * nc + cx + 1};
            const int x = (cx + 1) * r;
            for (int y = cy * r + 1; y < (cy + 1) * r; ++y) edge.nodes.push_back(node_id(x, y));
            edges_.push_back(std::move(edge));
        }
    }
    for (int cy = 0; cy + 1 < nc; ++cy) {
        for (int cx = 0; cx < nc; ++cx) {
            CoarseEdge edge;
            edge.vertical = false;
            edge.elements = {cy * nc + cx, (cy + 1) * nc + cx};
            const int y = (cy + 1) * r;
            for (int x = cx * r + 1; x < (cx + 1) * r; ++x) edge.nodes.push_back(node_id(x, y));
            edges_.push_back(std::move(edge));
        }
    }

    const int horizontal_base = nc * (nc - 1);
    for (int vy = 1; vy < nc; ++vy) {
        for (int vx = 1; vx < nc; ++vx) {
            CoarseVertex v;
            v.node = node_id(vx * r, vy * r);
            v.elements = {(vy - 1) * nc + vx - 1, (vy - 1) * nc + vx, vy * nc + vx, vy * nc + vx - 1};
            v.edges = {(vy - 1) * (nc - 1) + vx - 1, horizontal_base + (vy - 1) * nc + vx,
                       vy * (nc - 1) + vx - 1, horizontal_base + (vy - 1) * nc + vx - 1};
            vertices_.push_back(v);
        }
    }
}

int MeshHierarchy::node_id(int x, int y) const {
    const int nf = fine_divisions();
    if (x <= 0 || y <= 0 || x >= nf || y >= nf) return -1;
    return (y - 1) * (nf - 1) + (x - 1);
}

GridPoint MeshHierarchy::node_point(int id) const {
    const int w = fine_divisions() - 1;
    return {id % w + 1, id / w + 1};
}

std::array<int, 4> MeshHierarchy::fine_element_nodes(int ex, int ey) const {
    return {node_id(ex, ey), node_id(ex + 1, ey), node_id(ex + 1, ey + 1), node_id(ex, ey + 1)};
}

GridPoint MeshHierarchy::coarse_element_origin(int element) const {
    return {(element % coarse_divisions_) * refine_ratio_, (element / coarse_divisions_) * refine_ratio_};
}

std::vector<int> MeshHierarchy::element_fine_elements(int element) const {
    const GridPoint o = coarse_element_origin(element);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(refine_ratio_) * refine_ratio_);
    for (int ey = o.y; ey < o.y + refine_ratio_; ++ey)
        for (int ex = o.x; ex < o.x + refine_ratio_; ++ex) out.push_back(fine_element_id(ex, ey));
    return out;
}

std::array<int, 4> MeshHierarchy::element_edges(int element) const {
    const int nc = coarse_divisions_;
    const int cx = element % nc;
    const int cy = element / nc;
    const int horizontal_base = nc * (nc - 1);
    return {cy > 0 ? horizontal_base + (cy - 1) * nc + cx : -1,
            cx + 1 < nc ? cy * (nc - 1) + cx : -1,
            cy + 1 < nc ? horizontal_base + cy * nc + cx : -1,
            cx > 0 ? cy * (nc - 1) + cx - 1 : -1};
}

MeshHierarchy build_hierarchy(int coarse_divisions, int refine_ratio) {
    return MeshHierarchy(coarse_divisions, refine_ratio);
}

NodeClassification classify_nodes(const MeshHierarchy& mesh) {
    NodeClassification c;
    c.labels.resize(mesh.n());
    for (int e = 0; e < mesh.m(); ++e) {
        for (int p : mesh.element_interior_nodes(e)) c.labels[p] = {NodeKind::ElementInterior, e};
        c.element_interior_count += static_cast<int>(mesh.element_interior_nodes(e).size());
    }
    for (int id = 0; id < static_cast<int>(mesh.edges().size()); ++id) {
        for (int p : mesh.edges()[id].nodes) c.labels[p] = {NodeKind::EdgeInterior, id};
        c.edge_interior_count += static_cast<int>(mesh.edges()[id].nodes.size());
    }
    for (int id = 0; id < static_cast<int>(mesh.vertices().size()); ++id) {
        c.labels[mesh.vertices()[id].node] = {NodeKind::CoarseVertex, id};
        ++c.vertex_count;
    }

    const int nc = mesh.coarse_divisions();
    c.element_class.resize(mesh.m());
    for (int e = 0; e < mesh.m(); ++e) {
        const int cx = e % nc;
        const int cy = e / nc;
        const int on_boundary = (cx == 0) + (cx == nc - 1) + (cy == 0) + (cy == nc - 1);
        c.element_class[e] = on_boundary == 0   ? BoundaryClass::Interior
                             : on_boundary == 1 ? BoundaryClass::OneEdgeOnBoundary
                                                : BoundaryClass::TwoEdgesOnBoundary;
    }
    return c;
}

const char* to_string(BoundaryClass c) {
    switch (c) {
    case BoundaryClass::Interior: return "interior";
    case BoundaryClass::OneEdgeOnBoundary: return "one_edge";
    case BoundaryClass::TwoEdgesOnBoundary: return "two_edges";
    }
    return "?";
}

} // namespace slod
