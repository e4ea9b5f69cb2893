#include "tetrec/tet_grid.hpp"

#include "tetrec/errors.hpp"
#include "tetrec/mesh_query.hpp"
#include "tetrec/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

namespace tetrec {

namespace {

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    return (b - a).cross(c - a).dot(d - a) / 6.0;
}

/// Reorders the last two indices if needed so the signed volume is positive.
std::array<int, 4> orient_positive(const std::vector<Vec3>& verts, std::array<int, 4> t) {
    if (signed_volume(verts[t[0]], verts[t[1]], verts[t[2]], verts[t[3]]) < 0.0)
        std::swap(t[2], t[3]);
    return t;
}

uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<uint64_t>(a) << 32) | static_cast<uint32_t>(b);
}

constexpr std::array<std::array<int, 2>, 6> kTetEdges = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

} // namespace

double TetGrid::tet_volume(int t) const {
    const auto& q = tets[t];
    return signed_volume(vertices[q[0]], vertices[q[1]], vertices[q[2]], vertices[q[3]]);
}

double TetGrid::total_volume() const {
    double v = 0.0;
    for (int t = 0; t < tet_count(); ++t) v += tet_volume(t);
    return v;
}

void TetGrid::validate() const {
    for (int t = 0; t < tet_count(); ++t) {
        const auto& q = tets[t];
        for (int k = 0; k < 4; ++k)
            if (q[k] < 0 || q[k] >= vertex_count())
                throw TopologyError("tet " + std::to_string(t) + " index out of range");
        if (tet_volume(t) <= 0.0)
            throw TopologyError("tet " + std::to_string(t) + " is not positively oriented");
    }
    if (!surface_mask.empty() && surface_mask.size() != tets.size())
        throw LengthMismatch("surface_mask size != tet count");
}

namespace {

/// Emits the BCC lattice over [lo, hi] with spacing h. Corner vertices first
/// (lexicographic), then cell centers.
struct BccLattice {
    Vec3 lo;
    double h;
    int nx, ny, nz; // cells
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 4>> tets;

    int corner_id(int i, int j, int k) const {
        return (i * (ny + 1) + j) * (nz + 1) + k;
    }
    int center_id(int i, int j, int k) const {
        return (nx + 1) * (ny + 1) * (nz + 1) + (i * ny + j) * nz + k;
    }

    void build() {
        vertices.reserve(static_cast<size_t>(nx + 1) * (ny + 1) * (nz + 1) +
                         static_cast<size_t>(nx) * ny * nz);
        for (int i = 0; i <= nx; ++i)
            for (int j = 0; j <= ny; ++j)
                for (int k = 0; k <= nz; ++k)
                    vertices.push_back(lo + h * Vec3(i, j, k));
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j)
                for (int k = 0; k < nz; ++k)
                    vertices.push_back(lo + h * Vec3(i + 0.5, j + 0.5, k + 0.5));

        // Four tets around every center-to-center edge, one edge per interior
        // lattice face. Cycle of the shared face corners is fixed per axis.
        auto emit_face_tets = [&](int c1, int c2, const std::array<int, 4>& quad) {
            for (int e = 0; e < 4; ++e) {
                std::array<int, 4> t = {c1, c2, quad[e], quad[(e + 1) % 4]};
                tets.push_back(orient_positive(vertices, t));
            }
        };
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j)
                for (int k = 0; k < nz; ++k) {
                    const int c = center_id(i, j, k);
                    if (i + 1 < nx)
                        emit_face_tets(c, center_id(i + 1, j, k),
                                       {corner_id(i + 1, j, k), corner_id(i + 1, j + 1, k),
                                        corner_id(i + 1, j + 1, k + 1), corner_id(i + 1, j, k + 1)});
                    if (j + 1 < ny)
                        emit_face_tets(c, center_id(i, j + 1, k),
                                       {corner_id(i, j + 1, k), corner_id(i + 1, j + 1, k),
                                        corner_id(i + 1, j + 1, k + 1), corner_id(i, j + 1, k + 1)});
                    if (k + 1 < nz)
                        emit_face_tets(c, center_id(i, j, k + 1),
                                       {corner_id(i, j, k + 1), corner_id(i + 1, j, k + 1),
                                        corner_id(i + 1, j + 1, k + 1), corner_id(i, j + 1, k + 1)});
                }
    }
};

TetGrid compact_grid(const std::vector<Vec3>& vertices,
                     const std::vector<std::array<int, 4>>& tets) {
    TetGrid out;
    std::vector<int> remap(vertices.size(), -1);
    out.tets.reserve(tets.size());
    for (const auto& t : tets) {
        std::array<int, 4> mapped;
        for (int k = 0; k < 4; ++k) {
            if (remap[t[k]] < 0) {
                remap[t[k]] = static_cast<int>(out.vertices.size());
                out.vertices.push_back(vertices[t[k]]);
            }
            mapped[k] = remap[t[k]];
        }
        out.tets.push_back(mapped);
    }
    out.surface_mask.assign(out.tets.size(), 0);
    return out;
}

} // namespace

TetGrid build_box_grid(const Vec3& lo, const Vec3& hi, int resolution) {
    if (resolution < 1) throw PreconditionError("resolution must be >= 1");
    BccLattice lattice;
    lattice.h = 1.0 / resolution;
    lattice.lo = lo;
    lattice.nx = std::max(1, static_cast<int>(std::ceil((hi.x() - lo.x()) / lattice.h - 1e-12)));
    lattice.ny = std::max(1, static_cast<int>(std::ceil((hi.y() - lo.y()) / lattice.h - 1e-12)));
    lattice.nz = std::max(1, static_cast<int>(std::ceil((hi.z() - lo.z()) / lattice.h - 1e-12)));
    lattice.build();
    TetGrid grid = compact_grid(lattice.vertices, lattice.tets);
    grid.level = 0;
    return grid;
}

TetGrid build_shell_grid(const TriMesh& shell, int resolution) {
    if (resolution < 8) throw PreconditionError("resolution must be >= 8");
    if (shell.faces.empty()) throw EmptyMesh("shell mesh is empty");

    BccLattice lattice;
    lattice.h = 1.0 / resolution;
    const Vec3 pad = Vec3::Constant(2.0 * lattice.h);
    const Vec3 lo = shell.bbox_min() - pad;
    const Vec3 hi = shell.bbox_max() + pad;
    lattice.lo = lo;
    lattice.nx = static_cast<int>(std::ceil((hi.x() - lo.x()) / lattice.h));
    lattice.ny = static_cast<int>(std::ceil((hi.y() - lo.y()) / lattice.h));
    lattice.nz = static_cast<int>(std::ceil((hi.z() - lo.z()) / lattice.h));
    lattice.build();

    // Keep tets with at least one vertex strictly inside the shell.
    const auto sdf = signed_distance(shell, lattice.vertices);
    std::vector<std::array<int, 4>> kept;
    kept.reserve(lattice.tets.size() / 4);
    for (const auto& t : lattice.tets) {
        bool inside = false;
        for (int k = 0; k < 4 && !inside; ++k)
            inside = sdf.samples[t[k]].distance < 0.0;
        if (inside) kept.push_back(t);
    }
    if (kept.empty()) throw EmptyShell("no lattice tet intersects the shell interior");

    TetGrid grid = compact_grid(lattice.vertices, kept);
    grid.level = 0;
    return grid;
}

TetGrid mark_surface_tets(const TetGrid& grid, const std::vector<double>& sdf_values) {
    if (sdf_values.size() != grid.vertices.size())
        throw LengthMismatch("sdf_values size (" + std::to_string(sdf_values.size()) +
                             ") != vertex count (" + std::to_string(grid.vertices.size()) + ")");
    TetGrid out = grid;
    out.surface_mask.assign(grid.tets.size(), 0);
    for (size_t t = 0; t < grid.tets.size(); ++t) {
        const auto& q = grid.tets[t];
        int positives = 0;
        for (int k = 0; k < 4; ++k)
            if (sdf_values[q[k]] > 0.0) ++positives;
        out.surface_mask[t] = (positives != 0 && positives != 4) ? 1 : 0;
    }
    return out;
}

double max_edge_length(const TetGrid& grid) {
    double best = 0.0;
    for (const auto& t : grid.tets)
        for (const auto& e : kTetEdges)
            best = std::max(best, (grid.vertices[t[e[0]]] - grid.vertices[t[e[1]]]).norm());
    return best;
}

namespace {

/// Face split helper: triangulates face (p,q,r) given the midpoint vertex of
/// each split edge (-1 when unsplit). The two-split quad diagonal is the
/// lexicographically smallest (min id, max id) pair so adjacent tets agree.
std::vector<std::array<int, 3>> split_face(int p, int q, int r, int m_pq, int m_qr, int m_rp) {
    const int n_split = (m_pq >= 0) + (m_qr >= 0) + (m_rp >= 0);
    if (n_split == 0) return {{p, q, r}};
    if (n_split == 3)
        return {{p, m_pq, m_rp}, {m_pq, q, m_qr}, {m_rp, m_qr, r}, {m_pq, m_qr, m_rp}};
    if (n_split == 1) {
        if (m_pq >= 0) return {{p, m_pq, r}, {m_pq, q, r}};
        if (m_qr >= 0) return {{q, m_qr, p}, {m_qr, r, p}};
        return {{r, m_rp, q}, {m_rp, p, q}};
    }
    // Two split edges sharing a vertex: corner triangle + quad with a
    // convention-picked diagonal.
    auto two_case = [](int a, int b, int c, int m_ab, int m_bc) {
        std::vector<std::array<int, 3>> out;
        out.push_back({m_ab, b, m_bc});
        // quad (a, m_ab, m_bc, c): diagonals (a, m_bc) vs (m_ab, c)
        const auto diag_a = std::minmax(a, m_bc);
        const auto diag_b = std::minmax(m_ab, c);
        if (diag_a < diag_b) {
            out.push_back({a, m_ab, m_bc});
            out.push_back({a, m_bc, c});
        } else {
            out.push_back({a, m_ab, c});
            out.push_back({m_ab, m_bc, c});
        }
        return out;
    };
    if (m_pq >= 0 && m_qr >= 0) return two_case(p, q, r, m_pq, m_qr);
    if (m_qr >= 0 && m_rp >= 0) return two_case(q, r, p, m_qr, m_rp);
    return two_case(r, p, q, m_rp, m_pq);
}

} // namespace

TetGrid subdivide_surface(const TetGrid& grid) {
    if (grid.surface_mask.size() != grid.tets.size())
        throw PreconditionError("surface_mask not computed");

    const size_t n_tets = grid.tets.size();
    std::vector<uint8_t> red(n_tets, 0);
    for (size_t t = 0; t < n_tets; ++t) red[t] = grid.surface_mask[t];

    bool any_marked = false;
    for (auto m : red) any_marked |= (m != 0);
    if (!any_marked) {
        TetGrid out = grid;
        out.level = grid.level + 1;
        return out;
    }

    // Split-edge closure: red tets split all six edges; tets whose split
    // pattern has no green template are promoted to red until stable.
    std::unordered_map<uint64_t, int> split_edges; // key -> midpoint id (assigned later)
    auto add_tet_edges = [&](size_t t) {
        for (const auto& e : kTetEdges)
            split_edges.emplace(edge_key(grid.tets[t][e[0]], grid.tets[t][e[1]]), -1);
    };
    for (size_t t = 0; t < n_tets; ++t)
        if (red[t]) add_tet_edges(t);

    auto tet_split_pattern = [&](size_t t, std::array<int, 6>& local) {
        int count = 0;
        for (int e = 0; e < 6; ++e) {
            const auto key =
                edge_key(grid.tets[t][kTetEdges[e][0]], grid.tets[t][kTetEdges[e][1]]);
            local[e] = split_edges.count(key) ? 1 : 0;
            count += local[e];
        }
        return count;
    };

    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t t = 0; t < n_tets; ++t) {
            if (red[t]) continue;
            std::array<int, 6> pattern;
            const int count = tet_split_pattern(t, pattern);
            if (count == 0 || count == 1 || count == 2) continue;
            if (count == 3) {
                // A face of the tet iff the three split edges share all four
                // face slots: faces are (0,1,2)=(e01,e02,e12), (0,1,3), (0,2,3), (1,2,3)
                static constexpr std::array<std::array<int, 3>, 4> kFaceEdges = {
                    {{0, 1, 3}, {0, 2, 4}, {1, 2, 5}, {3, 4, 5}}};
                bool on_face = false;
                for (const auto& fe : kFaceEdges)
                    on_face |= (pattern[fe[0]] && pattern[fe[1]] && pattern[fe[2]]);
                if (on_face) continue;
            }
            red[t] = 1;
            add_tet_edges(t);
            changed = true;
        }
    }

    // Assign midpoint ids in sorted edge order (deterministic).
    std::vector<Vec3> vertices = grid.vertices;
    {
        std::vector<uint64_t> keys;
        keys.reserve(split_edges.size());
        for (const auto& [key, _] : split_edges) keys.push_back(key);
        std::sort(keys.begin(), keys.end());
        for (uint64_t key : keys) {
            const int a = static_cast<int>(key >> 32);
            const int b = static_cast<int>(key & 0xffffffffu);
            split_edges[key] = static_cast<int>(vertices.size());
            vertices.push_back(0.5 * (grid.vertices[a] + grid.vertices[b]));
        }
    }
    auto midpoint = [&](int a, int b) -> int {
        const auto it = split_edges.find(edge_key(a, b));
        return it == split_edges.end() ? -1 : it->second;
    };

    TetGrid out;
    out.level = grid.level + 1;
    out.vertices = std::move(vertices);

    auto emit = [&](std::array<int, 4> t, uint8_t mask) {
        out.tets.push_back(orient_positive(out.vertices, t));
        out.surface_mask.push_back(mask);
    };

    for (size_t t = 0; t < n_tets; ++t) {
        const auto [a, b, c, d] = grid.tets[t];
        const uint8_t mask = grid.surface_mask[t];
        const int mab = midpoint(a, b), mac = midpoint(a, c), mad = midpoint(a, d);
        const int mbc = midpoint(b, c), mbd = midpoint(b, d), mcd = midpoint(c, d);
        const int count = (mab >= 0) + (mac >= 0) + (mad >= 0) + (mbc >= 0) + (mbd >= 0) +
                          (mcd >= 0);

        if (red[t]) {
            // 1->8: four corner tets + central octahedron cut by its
            // shortest diagonal (ties by smallest id pair).
            emit({a, mab, mac, mad}, mask);
            emit({mab, b, mbc, mbd}, mask);
            emit({mac, mbc, c, mcd}, mask);
            emit({mad, mbd, mcd, d}, mask);

            struct Diag {
                int u, v;
                double len;
            };
            const std::array<Diag, 3> diags = {
                Diag{mab, mcd, (out.vertices[mab] - out.vertices[mcd]).squaredNorm()},
                Diag{mac, mbd, (out.vertices[mac] - out.vertices[mbd]).squaredNorm()},
                Diag{mad, mbc, (out.vertices[mad] - out.vertices[mbc]).squaredNorm()}};
            int best = 0;
            for (int i = 1; i < 3; ++i) {
                if (diags[i].len < diags[best].len ||
                    (diags[i].len == diags[best].len &&
                     std::minmax(diags[i].u, diags[i].v) <
                         std::minmax(diags[best].u, diags[best].v)))
                    best = i;
            }
            // Equatorial cycle around the chosen diagonal: the remaining four
            // midpoints ordered so consecutive ones share a parent vertex.
            std::array<int, 4> cycle;
            if (best == 0) cycle = {mac, mad, mbd, mbc};
            else if (best == 1) cycle = {mab, mad, mcd, mbc};
            else cycle = {mab, mac, mcd, mbd};
            for (int e = 0; e < 4; ++e)
                emit({diags[best].u, diags[best].v, cycle[e], cycle[(e + 1) % 4]}, mask);
            continue;
        }

        if (count == 0) {
            emit({a, b, c, d}, mask);
            continue;
        }

        if (count == 1) {
            // bisection across the single split edge
            auto one = [&](int u, int v, int m, int w, int x) {
                emit({u, m, w, x}, mask);
                emit({m, v, w, x}, mask);
            };
            if (mab >= 0) one(a, b, mab, c, d);
            else if (mac >= 0) one(a, c, mac, b, d);
            else if (mad >= 0) one(a, d, mad, b, c);
            else if (mbc >= 0) one(b, c, mbc, a, d);
            else if (mbd >= 0) one(b, d, mbd, a, c);
            else one(c, d, mcd, a, b);
            continue;
        }

        if (count == 2) {
            // Either opposite edges (4 children, unique) or two edges on one
            // face (3 children via the shared-face diagonal convention).
            auto opposite = [&](int u, int v, int m1, int w, int x, int m2) {
                emit({u, m1, w, m2}, mask);
                emit({u, m1, m2, x}, mask);
                emit({m1, v, w, m2}, mask);
                emit({m1, v, m2, x}, mask);
            };
            if (mab >= 0 && mcd >= 0) {
                opposite(a, b, mab, c, d, mcd);
                continue;
            }
            if (mac >= 0 && mbd >= 0) {
                opposite(a, c, mac, b, d, mbd);
                continue;
            }
            if (mad >= 0 && mbc >= 0) {
                opposite(a, d, mad, b, c, mbc);
                continue;
            }
            // Same-face pair: identify shared vertex q of split edges
            // (p-q @ m1, q-r @ m2), apex s. Reuse the face triangulation so
            // the diagonal matches the neighbour across face (p,q,r).
            auto same_face = [&](int p, int q, int r, int s, int m1, int m2) {
                const auto tris = split_face(p, q, r, m1, m2, -1);
                for (const auto& tri : tris) emit({tri[0], tri[1], tri[2], s}, mask);
            };
            if (mab >= 0 && mbc >= 0) same_face(a, b, c, d, mab, mbc);
            else if (mab >= 0 && mac >= 0) same_face(b, a, c, d, mab, mac);
            else if (mab >= 0 && mad >= 0) same_face(b, a, d, c, mab, mad);
            else if (mab >= 0 && mbd >= 0) same_face(a, b, d, c, mab, mbd);
            else if (mac >= 0 && mad >= 0) same_face(c, a, d, b, mac, mad);
            else if (mac >= 0 && mbc >= 0) same_face(a, c, b, d, mac, mbc);
            else if (mac >= 0 && mcd >= 0) same_face(a, c, d, b, mac, mcd);
            else if (mad >= 0 && mbd >= 0) same_face(a, d, b, c, mad, mbd);
            else if (mad >= 0 && mcd >= 0) same_face(a, d, c, b, mad, mcd);
            else if (mbc >= 0 && mbd >= 0) same_face(c, b, d, a, mbc, mbd);
            else if (mbc >= 0 && mcd >= 0) same_face(b, c, d, a, mbc, mcd);
            else same_face(b, d, c, a, mbd, mcd); // mbd && mcd
            continue;
        }

        // count == 3 on one face: corner tets + centre tet against the apex.
        auto face3 = [&](int p, int q, int r, int s, int m_pq, int m_qr, int m_rp) {
            const auto tris = split_face(p, q, r, m_pq, m_qr, m_rp);
            for (const auto& tri : tris) emit({tri[0], tri[1], tri[2], s}, mask);
        };
        if (mab >= 0 && mbc >= 0 && mac >= 0) face3(a, b, c, d, mab, mbc, mac);
        else if (mab >= 0 && mbd >= 0 && mad >= 0) face3(a, b, d, c, mab, mbd, mad);
        else if (mac >= 0 && mcd >= 0 && mad >= 0) face3(a, c, d, b, mac, mcd, mad);
        else face3(b, c, d, a, mbc, mcd, mbd);
    }

    return out;
}

namespace {
constexpr uint32_t kGridMagic = 0x44524754u; // "TGRD"
constexpr uint32_t kGridVersion = 1;
} // namespace

void save_grid(const TetGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto w64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    w32(kGridMagic);
    w32(kGridVersion);
    w64(grid.vertices.size());
    w64(grid.tets.size());
    w32(static_cast<uint32_t>(grid.level));
    w32(grid.surface_mask.empty() ? 0u : 1u);
    for (const auto& v : grid.vertices) {
        double xyz[3] = {v.x(), v.y(), v.z()};
        out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    }
    for (const auto& t : grid.tets) {
        uint32_t idx[4] = {static_cast<uint32_t>(t[0]), static_cast<uint32_t>(t[1]),
                           static_cast<uint32_t>(t[2]), static_cast<uint32_t>(t[3])};
        out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
    }
    if (!grid.surface_mask.empty())
        out.write(reinterpret_cast<const char*>(grid.surface_mask.data()),
                  static_cast<std::streamsize>(grid.surface_mask.size()));
    if (!out) throw IoError("short write: " + path);
}

TetGrid load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    auto r32 = [&]() {
        uint32_t v;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto r64 = [&]() {
        uint64_t v;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    if (r32() != kGridMagic) throw ParseError("bad grid magic: " + path);
    if (r32() != kGridVersion) throw ParseError("unsupported grid version: " + path);
    const uint64_t n_verts = r64();
    const uint64_t n_tets = r64();
    TetGrid grid;
    grid.level = static_cast<int>(r32());
    const bool has_mask = r32() != 0;
    if (!in) throw ParseError("truncated grid header: " + path);
    grid.vertices.resize(n_verts);
    for (auto& v : grid.vertices) {
        double xyz[3];
        in.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
        v = Vec3(xyz[0], xyz[1], xyz[2]);
    }
    grid.tets.resize(n_tets);
    for (auto& t : grid.tets) {
        uint32_t idx[4];
        in.read(reinterpret_cast<char*>(idx), sizeof(idx));
        t = {static_cast<int>(idx[0]), static_cast<int>(idx[1]), static_cast<int>(idx[2]),
             static_cast<int>(idx[3])};
    }
    if (has_mask) {
        grid.surface_mask.resize(n_tets);
        in.read(reinterpret_cast<char*>(grid.surface_mask.data()),
                static_cast<std::streamsize>(n_tets));
    } else {
        grid.surface_mask.assign(n_tets, 0);
    }
    if (!in) throw ParseError("truncated grid payload: " + path);
    grid.validate();
    return grid;
}

} // namespace tetrec
