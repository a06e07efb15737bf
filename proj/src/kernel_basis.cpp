#include "slod/kernel_basis.hpp"

#include "slod/dense.hpp"
#include "slod/error.hpp"
#include "slod/krylov.hpp"
#include "slod/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <array>
#include <set>

namespace slod {

const char* to_string(EntityKind kind) {
    switch (kind) {
    case EntityKind::Element: return "element";
    case EntityKind::Edge: return "edge";
    case EntityKind::Vertex: return "vertex";
    }
    return "?";
}

Matrix BlockKernelBasis::apply(const Matrix& x) const {
    SLOD_REQUIRE(x.rows() == ell, "K apply: coefficient size mismatch");
    Matrix z = Matrix::Zero(n, x.cols());
    for (const KernelBlock& b : blocks) {
        if (b.cols() == 0) continue;
        const Matrix part = b.columns * x.middleRows(b.first_column, b.cols());
        for (std::size_t i = 0; i < b.support.size(); ++i) z.row(b.support[i]) += part.row(static_cast<Eigen::Index>(i));
    }
    return z;
}

Matrix BlockKernelBasis::apply_transpose(const Matrix& w) const {
    SLOD_REQUIRE(w.rows() == n, "K^T apply: vector size mismatch");
    Matrix y(ell, w.cols());
    for (const KernelBlock& b : blocks) {
        if (b.cols() == 0) continue;
        y.middleRows(b.first_column, b.cols()).noalias() = b.columns.transpose() * w(b.support, Eigen::all);
    }
    return y;
}

Matrix BlockKernelBasis::dense() const {
    Matrix k = Matrix::Zero(n, ell);
    for (const KernelBlock& b : blocks)
        for (std::size_t i = 0; i < b.support.size(); ++i)
            k.block(b.support[i], b.first_column, 1, b.cols()) = b.columns.row(static_cast<Eigen::Index>(i));
    return k;
}

void BlockKernelBasis::assign_column_offsets() {
    Eigen::Index next = 0;
    for (KernelBlock& b : blocks) {
        b.first_column = next;
        next += b.cols();
    }
    ell = next;
}

std::vector<int> elements_containing(const MeshHierarchy& mesh, const NodeClassification& classes, int p) {
    const NodeLabel& label = classes.labels[p];
    switch (label.kind) {
    case NodeKind::ElementInterior: return {label.entity};
    case NodeKind::EdgeInterior: {
        const auto& e = mesh.edges()[label.entity].elements;
        return {e[0], e[1]};
    }
    case NodeKind::CoarseVertex: {
        const auto& e = mesh.vertices()[label.entity].elements;
        return {e.begin(), e.end()};
    }
    }
    return {};
}

namespace {

bool is_dual_node(const KernelContext& ctx, int p) {
    for (int e : elements_containing(ctx.mesh, ctx.classes, p)) {
        const auto& nodes = ctx.dual.elements[e].nodes;
        if (std::find(nodes.begin(), nodes.end(), p) != nodes.end()) return true;
    }
    return false;
}

int local_of(const std::vector<int>& support, int node) {
    const auto it = std::lower_bound(support.begin(), support.end(), node);
    if (it == support.end() || *it != node) throw NumericalError("node outside the declared block support");
    return static_cast<int>(it - support.begin());
}

/// Writes phi_p - phi_tilde_p into `col`, expressed over `support`.
void fill_raw_column(const KernelContext& ctx, int p, const std::vector<int>& support, Eigen::Ref<Vector> col) {
    col.setZero();
    const double scale = 1.0 / std::sqrt(ctx.a.entry(p, p));
    col[local_of(support, p)] = scale;
    for (int e : elements_containing(ctx.mesh, ctx.classes, p)) {
        const DualElement& de = ctx.dual.elements[e];
        if (de.nodes.empty()) continue;
        const AuxElement& ae = ctx.aux.elements[e];
        const Vector c = scale * ae.projector.row(ae.local_index(p)).transpose();
        const Vector at_nodes = ctx.functions.elements[e].tau.transpose() * c;
        for (std::size_t l = 0; l < de.nodes.size(); ++l)
            col[local_of(support, de.nodes[l])] -=
                de.hat_scale[static_cast<Eigen::Index>(l)] * at_nodes[static_cast<Eigen::Index>(l)];
    }
}

std::vector<int> sorted_union(std::initializer_list<const std::vector<int>*> parts, std::vector<int> extra = {}) {
    std::vector<int> out = std::move(extra);
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Embeds a block's columns into another (larger) support.
Matrix embed(const KernelBlock& b, const std::vector<int>& support) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(support.size()), b.cols());
    for (std::size_t i = 0; i < b.support.size(); ++i)
        out.row(local_of(support, b.support[i])) = b.columns.row(static_cast<Eigen::Index>(i));
    return out;
}

InnerProductOperator local_inner(const SparseMatrix& a_local) {
    return [&a_local](const Matrix& v) -> Matrix { return a_local * v; };
}

std::string entity_name(EntityKind kind, int id) { return std::string(to_string(kind)) + " " + std::to_string(id); }

void orthonormalize_block(KernelBlock& b, const SparseMatrix& a_local, int& reorth, double& worst) {
    try {
        const MgsResult r = mgs_orthonormalize(b.columns, local_inner(a_local));
        if (r.passes > 1) ++reorth;
        worst = std::max(worst, r.orthogonality);
    } catch (const NumericalError& err) {
        throw NumericalError("kernel basis: " + entity_name(b.kind, b.entity) + ": " + err.what());
    }
}

} // namespace

Vector raw_kernel_vector(const KernelContext& ctx, int p) {
    SLOD_REQUIRE(p >= 0 && p < ctx.mesh.n(), "node id out of range");
    if (is_dual_node(ctx, p)) throw InvalidArgument("raw_kernel_vector: node " + std::to_string(p) + " is a dual node");
    std::vector<int> all(static_cast<std::size_t>(ctx.mesh.n()));
    for (int i = 0; i < ctx.mesh.n(); ++i) all[i] = i;
    Vector v(ctx.mesh.n());
    fill_raw_column(ctx, p, all, v);
    return v;
}

BlockKernelBasis substructure_orthonormalize(const KernelContext& ctx, KernelBuildStats* stats) {
    const MeshHierarchy& mesh = ctx.mesh;
    BlockKernelBasis k;
    k.n = mesh.n();
    k.element_count = mesh.m();
    k.edge_count = static_cast<int>(mesh.edges().size());
    k.blocks.resize(mesh.m() + mesh.edges().size() + mesh.vertices().size());

    std::vector<int> reorth(3, 0);
    std::vector<double> worst(3, 0.0);
    ParallelErrors errors;

    auto dual_of = [&](int e, int p) {
        const auto& nodes = ctx.dual.elements[e].nodes;
        return std::find(nodes.begin(), nodes.end(), p) != nodes.end();
    };

    // Stage 1: element interiors.
#pragma omp parallel for schedule(dynamic)
    for (int e = 0; e < mesh.m(); ++e) {
        errors.run([&] {
            KernelBlock& b = k.blocks[e];
            b.kind = EntityKind::Element;
            b.entity = e;
            b.support = mesh.element_interior_nodes(e);
            b.coarse_support = {e};
            for (int p : b.support)
                if (!dual_of(e, p)) b.origins.push_back(p);
            b.columns.resize(static_cast<Eigen::Index>(b.support.size()), static_cast<Eigen::Index>(b.origins.size()));
            for (std::size_t c = 0; c < b.origins.size(); ++c)
                fill_raw_column(ctx, b.origins[c], b.support, b.columns.col(static_cast<Eigen::Index>(c)));
            const SparseMatrix a_local = ctx.a.restrict_to(b.support);
            int r = 0;
            double w = 0.0;
            orthonormalize_block(b, a_local, r, w);
#pragma omp critical(slod_kernel_stats)
            {
                reorth[0] += r;
                worst[0] = std::max(worst[0], w);
            }
        });
    }
    errors.rethrow();

    // Stage 2: coarse edges.
    const int edge_base = mesh.m();
#pragma omp parallel for schedule(dynamic)
    for (int id = 0; id < k.edge_count; ++id) {
        errors.run([&] {
            const CoarseEdge& edge = mesh.edges()[id];
            KernelBlock& b = k.blocks[edge_base + id];
            b.kind = EntityKind::Edge;
            b.entity = id;
            const KernelBlock& ka = k.blocks[edge.elements[0]];
            const KernelBlock& kb = k.blocks[edge.elements[1]];
            b.support = sorted_union({&ka.support, &kb.support, &edge.nodes});
            // Dual nodes of the neighbours are interior to them, hence already in the support.
            b.coarse_support = {std::min(edge.elements[0], edge.elements[1]),
                                std::max(edge.elements[0], edge.elements[1])};
            b.origins = edge.nodes;
            Matrix raw(static_cast<Eigen::Index>(b.support.size()), static_cast<Eigen::Index>(b.origins.size()));
            for (std::size_t c = 0; c < b.origins.size(); ++c)
                fill_raw_column(ctx, b.origins[c], b.support, raw.col(static_cast<Eigen::Index>(c)));
            const SparseMatrix a_local = ctx.a.restrict_to(b.support);
            Matrix neighbours(static_cast<Eigen::Index>(b.support.size()), ka.cols() + kb.cols());
            neighbours << embed(ka, b.support), embed(kb, b.support);
            b.columns = project_out(raw, neighbours, local_inner(a_local));
            int r = 0;
            double w = 0.0;
            orthonormalize_block(b, a_local, r, w);
#pragma omp critical(slod_kernel_stats)
            {
                reorth[1] += r;
                worst[1] = std::max(worst[1], w);
            }
        });
    }
    errors.rethrow();

    // Stage 3: interior coarse vertices.
    const int vertex_base = edge_base + k.edge_count;
#pragma omp parallel for schedule(dynamic)
    for (int id = 0; id < static_cast<int>(mesh.vertices().size()); ++id) {
        errors.run([&] {
            const CoarseVertex& vertex = mesh.vertices()[id];
            KernelBlock& b = k.blocks[vertex_base + id];
            b.kind = EntityKind::Vertex;
            b.entity = id;
            std::array<const KernelBlock*, 4> elems{};
            std::array<const KernelBlock*, 4> edges{};
            for (int i = 0; i < 4; ++i) {
                elems[i] = &k.blocks[vertex.elements[i]];
                edges[i] = &k.blocks[edge_base + vertex.edges[i]];
            }
            b.support = sorted_union({&elems[0]->support, &elems[1]->support, &elems[2]->support,
                                      &elems[3]->support, &edges[0]->support, &edges[1]->support,
                                      &edges[2]->support, &edges[3]->support},
                                     {vertex.node});
            b.coarse_support = {vertex.elements.begin(), vertex.elements.end()};
            std::sort(b.coarse_support.begin(), b.coarse_support.end());
            b.origins = {vertex.node};
            Matrix raw(static_cast<Eigen::Index>(b.support.size()), 1);
            fill_raw_column(ctx, vertex.node, b.support, raw.col(0));
            const SparseMatrix a_local = ctx.a.restrict_to(b.support);
            const InnerProductOperator inner = local_inner(a_local);

            Eigen::Index elem_cols = 0;
            Eigen::Index edge_cols = 0;
            for (int i = 0; i < 4; ++i) {
                elem_cols += elems[i]->cols();
                edge_cols += edges[i]->cols();
            }
            Matrix basis(static_cast<Eigen::Index>(b.support.size()), elem_cols + edge_cols);
            Eigen::Index at = 0;
            for (int i = 0; i < 4; ++i) {
                basis.middleCols(at, elems[i]->cols()) = embed(*elems[i], b.support);
                at += elems[i]->cols();
            }
            // Edge blocks of different edges meet inside a shared element and are
            // not mutually orthogonal; orthonormalize their span before projecting.
            Matrix edge_span(static_cast<Eigen::Index>(b.support.size()), edge_cols);
            Eigen::Index eat = 0;
            for (int i = 0; i < 4; ++i) {
                edge_span.middleCols(eat, edges[i]->cols()) = embed(*edges[i], b.support);
                eat += edges[i]->cols();
            }
            mgs_orthonormalize(edge_span, inner);
            basis.rightCols(edge_cols) = edge_span;
            b.columns = project_out(raw, basis, inner);
            int r = 0;
            double w = 0.0;
            orthonormalize_block(b, a_local, r, w);
#pragma omp critical(slod_kernel_stats)
            {
                reorth[2] += r;
                worst[2] = std::max(worst[2], w);
            }
        });
    }
    errors.rethrow();

    k.assign_column_offsets();
    if (stats) {
        stats->element_reorthogonalized = reorth[0];
        stats->edge_reorthogonalized = reorth[1];
        stats->vertex_reorthogonalized = reorth[2];
        stats->worst_orthogonality = std::max({worst[0], worst[1], worst[2]});
    }
    return k;
}

namespace {

std::string pair_category(const KernelBlock& x, const KernelBlock& y, bool& orthogonalized, bool& disjoint,
                          const MeshHierarchy* mesh_or_null) {
    (void)mesh_or_null;
    std::vector<int> shared;
    std::set_intersection(x.coarse_support.begin(), x.coarse_support.end(), y.coarse_support.begin(),
                          y.coarse_support.end(), std::back_inserter(shared));
    orthogonalized = false;
    disjoint = shared.empty();
    if (disjoint) return "disjoint";
    const KernelBlock& lo = x.kind <= y.kind ? x : y;
    const KernelBlock& hi = x.kind <= y.kind ? y : x;
    const bool lo_inside_hi = std::includes(hi.coarse_support.begin(), hi.coarse_support.end(),
                                            lo.coarse_support.begin(), lo.coarse_support.end());
    if (lo.kind == EntityKind::Element && hi.kind != EntityKind::Element) {
        orthogonalized = true;
        return "element-" + std::string(to_string(hi.kind));
    }
    if (lo.kind == EntityKind::Edge && hi.kind == EntityKind::Edge) return "edge-edge (shared element)";
    if (lo.kind == EntityKind::Edge && hi.kind == EntityKind::Vertex) {
        if (lo_inside_hi) {
            // Touching edge iff both of its elements surround the vertex.
            orthogonalized = true;
            return "edge-vertex (touching)";
        }
        return "edge-vertex (non-touching)";
    }
    if (lo.kind == EntityKind::Vertex && hi.kind == EntityKind::Vertex)
        return shared.size() >= 2 ? "vertex-vertex (adjacent)" : "vertex-vertex (diagonal)";
    return "other";
}

} // namespace

StructureReport verify_ktak_structure(const BlockKernelBasis& k, const SparseOperator& a, double zero_tol) {
    StructureReport rep;
    // Node -> blocks whose support contains it.
    std::vector<std::vector<int>> owners(static_cast<std::size_t>(k.n));
    for (std::size_t bi = 0; bi < k.blocks.size(); ++bi)
        for (int p : k.blocks[bi].support) owners[p].push_back(static_cast<int>(bi));

    for (std::size_t xi = 0; xi < k.blocks.size(); ++xi) {
        const KernelBlock& x = k.blocks[xi];
        if (x.cols() == 0) continue;
        Matrix embedded = Matrix::Zero(k.n, x.cols());
        embedded(x.support, Eigen::all) = x.columns;
        const Matrix z = a.matrix() * embedded;

        std::set<int> candidates;
        for (int p : x.support)
            for (SparseMatrix::InnerIterator it(a.matrix(), p); it; ++it)
                for (int owner : owners[it.col()]) candidates.insert(owner);

        for (int yi : candidates) {
            const KernelBlock& y = k.blocks[yi];
            if (y.cols() == 0) continue;
            const Matrix g = y.columns.transpose() * z(y.support, Eigen::all);
            if (static_cast<std::size_t>(yi) == xi) {
                for (Eigen::Index i = 0; i < g.rows(); ++i)
                    for (Eigen::Index j = 0; j < g.cols(); ++j) {
                        if (i == j) rep.max_diag_deviation = std::max(rep.max_diag_deviation, std::abs(g(i, j) - 1.0));
                        else rep.max_block_orthogonality = std::max(rep.max_block_orthogonality, std::abs(g(i, j)));
                    }
                continue;
            }
            // Each unordered pair once.
            if (static_cast<std::size_t>(yi) < xi) continue;
            bool orthogonalized = false;
            bool disjoint = false;
            const std::string category = pair_category(x, y, orthogonalized, disjoint, nullptr);
            const double mx = g.cwiseAbs().maxCoeff();
            if (disjoint) {
                rep.max_disjoint = std::max(rep.max_disjoint, mx);
                continue;
            }
            if (orthogonalized) {
                rep.max_orthogonalized_pairs = std::max(rep.max_orthogonalized_pairs, mx);
                continue;
            }
            EntryClass& cls = rep.classes[category];
            cls.count += (g.array().abs() > zero_tol).count();
            cls.max_abs = std::max(cls.max_abs, mx);
        }
    }

    if (k.ell <= 3000) {
        const Matrix kd = k.dense();
        const Matrix ktak = kd.transpose() * (a.matrix() * kd);
        rep.max_asymmetry = (ktak - ktak.transpose()).cwiseAbs().maxCoeff();
    }
    return rep;
}

namespace {

static_assert(std::endian::native == std::endian::little, "kernel dumps assume a little-endian host");

constexpr char kKernelMagic[8] = {'S', 'L', 'O', 'D', 'K', 'B', 'I', 'N'};
constexpr std::int32_t kKernelVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw InvalidArgument("truncated kernel basis file");
    return v;
}

void put_ints(std::ostream& out, const std::vector<int>& v) {
    put<std::int64_t>(out, static_cast<std::int64_t>(v.size()));
    for (int x : v) put<std::int32_t>(out, x);
}

std::vector<int> get_ints(std::istream& in) {
    const auto count = get<std::int64_t>(in);
    if (count < 0) throw InvalidArgument("corrupt kernel basis file");
    std::vector<int> v(static_cast<std::size_t>(count));
    for (auto& x : v) x = get<std::int32_t>(in);
    return v;
}

} // namespace

void write_kernel_basis(const std::filesystem::path& path, const BlockKernelBasis& k, const KernelDumpHeader& header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out.write(kKernelMagic, sizeof(kKernelMagic));
    put(out, kKernelVersion);
    put(out, header.coarse_divisions);
    put(out, header.refine_ratio);
    put(out, header.dual_seed);
    put(out, header.config_hash);
    put<std::int64_t>(out, k.n);
    put<std::int64_t>(out, k.ell);
    put<std::int32_t>(out, k.element_count);
    put<std::int32_t>(out, k.edge_count);
    put<std::int64_t>(out, static_cast<std::int64_t>(k.blocks.size()));
    for (const KernelBlock& b : k.blocks) {
        put<std::int32_t>(out, static_cast<std::int32_t>(b.kind));
        put<std::int32_t>(out, b.entity);
        put_ints(out, b.support);
        put_ints(out, b.coarse_support);
        put_ints(out, b.origins);
        out.write(reinterpret_cast<const char*>(b.columns.data()),
                  static_cast<std::streamsize>(sizeof(double) * b.columns.size()));
    }
    if (!out) throw InvalidArgument("failed writing " + path.string());
}

BlockKernelBasis read_kernel_basis(const std::filesystem::path& path, KernelDumpHeader* header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + 8, kKernelMagic)) throw InvalidArgument("not a kernel basis file");
    if (get<std::int32_t>(in) != kKernelVersion) throw InvalidArgument("unsupported kernel basis version");
    KernelDumpHeader h;
    h.coarse_divisions = get<std::int64_t>(in);
    h.refine_ratio = get<std::int64_t>(in);
    h.dual_seed = get<std::uint64_t>(in);
    h.config_hash = get<std::uint64_t>(in);
    if (header) *header = h;
    BlockKernelBasis k;
    k.n = get<std::int64_t>(in);
    const auto ell = get<std::int64_t>(in);
    k.element_count = get<std::int32_t>(in);
    k.edge_count = get<std::int32_t>(in);
    const auto count = get<std::int64_t>(in);
    k.blocks.resize(static_cast<std::size_t>(count));
    for (KernelBlock& b : k.blocks) {
        b.kind = static_cast<EntityKind>(get<std::int32_t>(in));
        b.entity = get<std::int32_t>(in);
        b.support = get_ints(in);
        b.coarse_support = get_ints(in);
        b.origins = get_ints(in);
        b.columns.resize(static_cast<Eigen::Index>(b.support.size()), static_cast<Eigen::Index>(b.origins.size()));
        in.read(reinterpret_cast<char*>(b.columns.data()),
                static_cast<std::streamsize>(sizeof(double) * b.columns.size()));
        if (!in) throw InvalidArgument("truncated kernel basis file");
    }
    k.assign_column_offsets();
    if (k.ell != ell) throw InvalidArgument("kernel basis column count mismatch");
    return k;
}

} // namespace slod

namespace slod {

ComposedKtak::ComposedKtak(const BlockKernelBasis& k, const SparseOperator& a) : k_(k), a_(a) {
    SLOD_REQUIRE(k.n == a.dim(), "K and A dimensions differ");
}

Eigen::Index ComposedKtak::dim() const { return k_.ell; }

void ComposedKtak::apply(const Matrix& x, Matrix& y) const {
    const Matrix z = k_.apply(x);
    const Matrix w = a_.matrix() * z;
    y = k_.apply_transpose(w);
}

std::unique_ptr<LinearOperator> composed_ktak(const BlockKernelBasis& k, const SparseOperator& a) {
    return std::make_unique<ComposedKtak>(k, a);
}

} // namespace slod
