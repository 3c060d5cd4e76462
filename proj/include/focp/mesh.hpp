#ifndef FOCP_MESH_HPP
#define FOCP_MESH_HPP

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "focp/geometry.hpp"

namespace focp {

enum class DomainKind { UnitDisk, Square };

// UnitDisk: polygonal approximation of B(0,1) with n_boundary segments.
// Square: (-1,1)^2 split into n_per_side x n_per_side cells.
struct DomainSpec {
    DomainKind kind = DomainKind::Square;
    int n_boundary = 16;
    int n_per_side = 4;

    static DomainSpec unit_disk(int n_boundary) {
        DomainSpec d;
        d.kind = DomainKind::UnitDisk;
        d.n_boundary = n_boundary;
        return d;
    }
    static DomainSpec square(int n_per_side) {
        DomainSpec d;
        d.kind = DomainKind::Square;
        d.n_per_side = n_per_side;
        return d;
    }
    void validate() const {
        if (kind == DomainKind::UnitDisk && n_boundary < 8)
            throw std::invalid_argument("DomainSpec: n_boundary >= 8 required");
        if (kind == DomainKind::Square && n_per_side < 2)
            throw std::invalid_argument("DomainSpec: n_per_side >= 2 required");
    }
};

struct Vertex2 {
    double x = 0.0;
    double y = 0.0;
    bool on_boundary = false;
    Vec2 pos() const { return {x, y}; }
};

// Triangle element with newest-vertex bisection genealogy. The refinement
// edge is the edge opposite vertex_ids[peak].
struct Element {
    std::array<int, 3> vertex_ids{};
    int peak = 0;
    int generation = 0;
    int root = -1;             // index of the generation-0 ancestor in the initial mesh
    double parent_area = 0.0;  // area of the direct parent; 0 for roots
};

class TriMesh {
public:
    std::vector<Vertex2> vertices;
    std::vector<Element> elements;
    DomainSpec domain;

    Tri tri(int k) const {
        const auto& e = elements[k];
        return Tri{{vertices[e.vertex_ids[0]].pos(), vertices[e.vertex_ids[1]].pos(),
                    vertices[e.vertex_ids[2]].pos()}};
    }
    int n_elements() const { return static_cast<int>(elements.size()); }
    int n_vertices() const { return static_cast<int>(vertices.size()); }

    // Interior vertices carry the P1 degrees of freedom.
    // dof_of[v] is -1 for boundary vertices.
    const std::vector<int>& dof_index() const {
        build_dofs();
        return dof_of_;
    }
    const std::vector<int>& interior_vertices() const {
        build_dofs();
        return interior_;
    }
    int n_dofs() const {
        build_dofs();
        return static_cast<int>(interior_.size());
    }

    // elements incident to each vertex, in element-id order
    const std::vector<std::vector<int>>& vertex_stars() const {
        if (stars_.empty()) {
            stars_.assign(vertices.size(), {});
            for (int k = 0; k < n_elements(); ++k)
                for (int v : elements[k].vertex_ids) stars_[v].push_back(k);
        }
        return stars_;
    }

private:
    mutable std::vector<int> dof_of_;
    mutable std::vector<int> interior_;
    mutable std::vector<std::vector<int>> stars_;

    void build_dofs() const {
        if (!dof_of_.empty()) return;
        dof_of_.assign(vertices.size(), -1);
        for (std::size_t v = 0; v < vertices.size(); ++v) {
            if (!vertices[v].on_boundary) {
                dof_of_[v] = static_cast<int>(interior_.size());
                interior_.push_back(static_cast<int>(v));
            }
        }
    }
};

namespace detail {

struct EdgeKey {
    int a, b;
    EdgeKey(int u, int v) : a(std::min(u, v)), b(std::max(u, v)) {}
    bool operator==(const EdgeKey& o) const { return a == o.a && b == o.b; }
};
struct EdgeKeyHash {
    std::size_t operator()(const EdgeKey& e) const {
        return std::hash<std::int64_t>()((static_cast<std::int64_t>(e.a) << 32) | e.b);
    }
};

template <class T>
using EdgeMap = std::unordered_map<EdgeKey, T, EdgeKeyHash>;

// refinement edge (the one opposite the peak), as local vertex indices
inline std::pair<int, int> refinement_edge_local(const Element& e) {
    switch (e.peak) {
        case 0: return {1, 2};
        case 1: return {2, 0};
        default: return {0, 1};
    }
}

inline int longest_edge_peak(const Tri& t) {
    // peak opposite the longest edge; ties broken by lowest opposite-vertex index
    double best = -1.0;
    int peak = 0;
    for (int i = 0; i < 3; ++i) {
        const double len = (t.v[(i + 2) % 3] - t.v[(i + 1) % 3]).norm2();
        if (len > best + 1e-14 * std::max(best, 1.0)) {
            best = len;
            peak = i;
        }
    }
    return peak;
}

}  // namespace detail

inline TriMesh make_initial_mesh(const DomainSpec& domain) {
    domain.validate();
    TriMesh m;
    m.domain = domain;

    if (domain.kind == DomainKind::Square) {
        const int n = domain.n_per_side;
        for (int iy = 0; iy <= n; ++iy)
            for (int ix = 0; ix <= n; ++ix) {
                Vertex2 v;
                v.x = -1.0 + 2.0 * ix / n;
                v.y = -1.0 + 2.0 * iy / n;
                v.on_boundary = (ix == 0 || ix == n || iy == 0 || iy == n);
                m.vertices.push_back(v);
            }
        const auto id = [n](int ix, int iy) { return iy * (n + 1) + ix; };
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                m.elements.push_back(Element{{id(ix, iy), id(ix + 1, iy), id(ix + 1, iy + 1)}});
                m.elements.push_back(Element{{id(ix, iy), id(ix + 1, iy + 1), id(ix, iy + 1)}});
            }
    } else {
        const int n = domain.n_boundary;
        m.vertices.push_back(Vertex2{0.0, 0.0, false});
        for (int i = 0; i < n; ++i) {
            const double a = 2.0 * M_PI * i / n;
            m.vertices.push_back(Vertex2{std::cos(a), std::sin(a), true});
        }
        for (int i = 0; i < n; ++i)
            m.elements.push_back(Element{{0, 1 + i, 1 + (i + 1) % n}});
    }

    for (int k = 0; k < m.n_elements(); ++k) {
        auto& e = m.elements[k];
        e.peak = detail::longest_edge_peak(m.tri(k));
        e.generation = 0;
        e.root = k;
        e.parent_area = 0.0;
        if (m.tri(k).signed_area() <= 0.0)
            throw std::logic_error("make_initial_mesh: negative orientation");
    }
    return m;
}

// Bisects every marked element at least once and restores conformity by
// bisecting any element that acquires a hanging node. New midpoints on disk
// boundary edges are projected radially to the unit circle.
inline TriMesh bisect_marked(const TriMesh& mesh, const std::set<int>& marked) {
    for (int k : marked)
        if (k < 0 || k >= mesh.n_elements())
            throw std::out_of_range("bisect_marked: marked id out of range");
    if (marked.empty()) return mesh;

    TriMesh out;
    out.domain = mesh.domain;
    out.vertices = mesh.vertices;

    struct Work {
        Element e;
        bool alive = true;
    };
    std::vector<Work> work;
    work.reserve(mesh.elements.size() * 2);
    for (const auto& e : mesh.elements) work.push_back({e, true});

    detail::EdgeMap<std::vector<int>> edge_elems;  // edge -> alive work ids
    const auto add_edges = [&](int wi) {
        const auto& vid = work[wi].e.vertex_ids;
        for (int i = 0; i < 3; ++i)
            edge_elems[detail::EdgeKey(vid[i], vid[(i + 1) % 3])].push_back(wi);
    };
    const auto remove_edges = [&](int wi) {
        const auto& vid = work[wi].e.vertex_ids;
        for (int i = 0; i < 3; ++i) {
            auto& lst = edge_elems[detail::EdgeKey(vid[i], vid[(i + 1) % 3])];
            lst.erase(std::remove(lst.begin(), lst.end(), wi), lst.end());
        }
    };
    for (int wi = 0; wi < static_cast<int>(work.size()); ++wi) add_edges(wi);

    detail::EdgeMap<int> midpoint;  // split edge -> midpoint vertex id
    std::deque<int> queue(marked.begin(), marked.end());

    const auto has_hanging = [&](int wi) {
        const auto& vid = work[wi].e.vertex_ids;
        for (int i = 0; i < 3; ++i)
            if (midpoint.count(detail::EdgeKey(vid[i], vid[(i + 1) % 3]))) return true;
        return false;
    };

    std::size_t guard = 0;
    const std::size_t guard_max = 64 * (mesh.elements.size() + marked.size() + 16) + (1u << 20);
    while (!queue.empty()) {
        if (++guard > guard_max) throw std::logic_error("bisect_marked: closure did not terminate");
        const int wi = queue.front();
        queue.pop_front();
        if (!work[wi].alive) continue;

        const Element e = work[wi].e;
        const auto [la, lb] = detail::refinement_edge_local(e);
        const int va = e.vertex_ids[la];
        const int vb = e.vertex_ids[lb];
        const int vp = e.vertex_ids[e.peak];
        const detail::EdgeKey ek(va, vb);

        int vm;
        auto mit = midpoint.find(ek);
        if (mit != midpoint.end()) {
            vm = mit->second;
        } else {
            Vertex2 nv;
            nv.x = 0.5 * (out.vertices[va].x + out.vertices[vb].x);
            nv.y = 0.5 * (out.vertices[va].y + out.vertices[vb].y);
            const bool boundary_edge = edge_elems[ek].size() == 1;
            if (boundary_edge) {
                nv.on_boundary = true;
                if (mesh.domain.kind == DomainKind::UnitDisk) {
                    const double r = std::sqrt(nv.x * nv.x + nv.y * nv.y);
                    nv.x /= r;
                    nv.y /= r;
                }
            }
            vm = out.n_vertices();
            out.vertices.push_back(nv);
            midpoint.emplace(ek, vm);
            // neighbors across the split edge now have a hanging node
            for (int other : edge_elems[ek])
                if (other != wi && work[other].alive) queue.push_back(other);
        }

        const double parent_area = Tri{{out.vertices[vp].pos(), out.vertices[va].pos(),
                                        out.vertices[vb].pos()}}
                                       .area();
        work[wi].alive = false;
        remove_edges(wi);

        Element c1, c2;
        c1.vertex_ids = {vp, va, vm};
        c1.peak = 2;
        c2.vertex_ids = {vp, vm, vb};
        c2.peak = 1;
        for (Element* c : {&c1, &c2}) {
            c->generation = e.generation + 1;
            c->root = e.root;
            c->parent_area = parent_area;
        }
        for (const Element& c : {c1, c2}) {
            const int ci = static_cast<int>(work.size());
            work.push_back({c, true});
            add_edges(ci);
            if (has_hanging(ci)) queue.push_back(ci);
        }
    }

    for (const auto& w : work)
        if (w.alive) out.elements.push_back(w.e);
    return out;
}

inline TriMesh bisect_marked(const TriMesh& mesh, const std::vector<int>& marked) {
    return bisect_marked(mesh, std::set<int>(marked.begin(), marked.end()));
}

// h_K = |K|^{1/2}
inline double element_size(const TriMesh& mesh, int k) {
    const double a = mesh.tri(k).area();
    if (!(a > 0.0)) throw std::logic_error("element_size: degenerate element");
    return std::sqrt(a);
}

// Distance from an interior point of K to the mesh skeleton. Since x lies in
// K and the boundary of K belongs to the skeleton, this is dist(x, dK).
inline double skeleton_distance(const TriMesh& mesh, int k, const Vec2& x) {
    const Tri t = mesh.tri(k);
    if (!t.contains(x, 1e-10)) throw std::invalid_argument("skeleton_distance: x outside element");
    return dist_point_tri_boundary(x, t);
}

inline std::set<int> element_patch(const TriMesh& mesh, int k, int order) {
    if (order < 0) throw std::invalid_argument("element_patch: order >= 0 required");
    std::set<int> patch{k};
    const auto& stars = mesh.vertex_stars();
    for (int step = 0; step < order; ++step) {
        std::set<int> next = patch;
        for (int e : patch)
            for (int v : mesh.elements[e].vertex_ids)
                for (int nb : stars[v]) next.insert(nb);
        patch.swap(next);
    }
    return patch;
}

// Returns the element whose closed triangle contains x; ties on shared
// edges/vertices resolve to the lowest element id.
inline int locate(const TriMesh& mesh, const Vec2& x) {
    for (int k = 0; k < mesh.n_elements(); ++k)
        if (mesh.tri(k).contains(x, 1e-12)) return k;
    throw std::invalid_argument("locate: point outside domain");
}

inline double min_angle(const TriMesh& mesh) {
    double best = std::numeric_limits<double>::max();
    for (int k = 0; k < mesh.n_elements(); ++k) {
        const auto a = tri_angles(mesh.tri(k));
        best = std::min({best, a[0], a[1], a[2]});
    }
    return best;
}

// Conformity audit: every edge belongs to one element (boundary, both
// endpoints flagged) or exactly two (interior).
inline bool conformity_check(const TriMesh& mesh, std::string* why = nullptr) {
    detail::EdgeMap<int> count;
    for (const auto& e : mesh.elements)
        for (int i = 0; i < 3; ++i)
            count[detail::EdgeKey(e.vertex_ids[i], e.vertex_ids[(i + 1) % 3])]++;
    for (const auto& [edge, c] : count) {
        if (c == 1) {
            if (!mesh.vertices[edge.a].on_boundary || !mesh.vertices[edge.b].on_boundary) {
                if (why) *why = "single-use edge with non-boundary endpoint";
                return false;
            }
        } else if (c != 2) {
            if (why) *why = "edge multiplicity " + std::to_string(c);
            return false;
        }
    }
    // hanging-node audit: no vertex may lie strictly inside another element's edge
    for (const auto& [edge, c] : count) {
        (void)c;
        const Vec2 a = mesh.vertices[edge.a].pos();
        const Vec2 b = mesh.vertices[edge.b].pos();
        const Vec2 mid = 0.5 * (a + b);
        for (const auto& v : mesh.vertices) {
            if ((v.pos() - mid).norm() < 1e-13 * (b - a).norm()) {
                if (why) *why = "hanging node on an edge";
                return false;
            }
        }
    }
    for (int k = 0; k < mesh.n_elements(); ++k)
        if (mesh.tri(k).signed_area() <= 0.0) {
            if (why) *why = "non-positive element orientation";
            return false;
        }
    return true;
}

inline nlohmann::json mesh_to_json(const TriMesh& mesh) {
    nlohmann::json j;
    j["vertices"] = nlohmann::json::array();
    for (const auto& v : mesh.vertices) j["vertices"].push_back({v.x, v.y});
    j["elements"] = nlohmann::json::array();
    for (const auto& e : mesh.elements)
        j["elements"].push_back({e.vertex_ids[0], e.vertex_ids[1], e.vertex_ids[2]});
    j["boundary"] = nlohmann::json::array();
    for (int v = 0; v < mesh.n_vertices(); ++v)
        if (mesh.vertices[v].on_boundary) j["boundary"].push_back(v);
    return j;
}

}  // namespace focp

#endif
