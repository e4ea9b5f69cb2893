#include "tetrec/marching_tet.hpp"

#include "tetrec/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

namespace tetrec {

namespace {

constexpr std::array<std::array<int, 2>, 6> kTetEdges = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

/// Per sign-case surface pattern in local edge indices. Quads are stored in
/// cyclic order, oriented so normals point toward positive SDF; the diagonal
/// is chosen at extraction time.
struct CaseEntry {
    int n_edges = 0;            // 0, 3 (triangle) or 4 (quad, cyclic)
    std::array<int, 4> edges{}; // local edge ids
};

/// Builds the 16-entry table by evaluating the canonical positively-oriented
/// tet and orienting each patch toward the positive-sign centroid. Any
/// positively oriented tet is a positive-determinant affine image of the
/// canonical one, so the orientation carries over.
std::array<CaseEntry, 16> build_case_table() {
    const std::array<Vec3, 4> verts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0),
                                       Vec3(0, 0, 1)};
    std::array<CaseEntry, 16> table{};
    for (int code = 1; code < 15; ++code) {
        std::array<double, 4> s;
        for (int i = 0; i < 4; ++i) s[i] = (code & (1 << i)) ? 1.0 : -1.0;

        std::vector<int> crossing;
        for (int e = 0; e < 6; ++e)
            if (s[kTetEdges[e][0]] * s[kTetEdges[e][1]] < 0.0) crossing.push_back(e);

        auto midpoint = [&](int e) {
            return Vec3(0.5 * (verts[kTetEdges[e][0]] + verts[kTetEdges[e][1]]));
        };
        Vec3 pos_centroid = Vec3::Zero(), neg_centroid = Vec3::Zero();
        int n_pos = 0, n_neg = 0;
        for (int i = 0; i < 4; ++i) {
            if (s[i] > 0) {
                pos_centroid += verts[i];
                ++n_pos;
            } else {
                neg_centroid += verts[i];
                ++n_neg;
            }
        }
        pos_centroid /= n_pos;
        neg_centroid /= n_neg;
        const Vec3 outward = pos_centroid - neg_centroid;

        CaseEntry entry;
        if (crossing.size() == 3) {
            entry.n_edges = 3;
            std::copy(crossing.begin(), crossing.end(), entry.edges.begin());
            const Vec3 n = (midpoint(crossing[1]) - midpoint(crossing[0]))
                               .cross(midpoint(crossing[2]) - midpoint(crossing[0]));
            if (n.dot(outward) < 0.0) std::swap(entry.edges[1], entry.edges[2]);
        } else {
            // Quad: order edges cyclically (consecutive crossing edges share
            // a tet vertex), then orient the cycle.
            std::array<int, 4> cycle{crossing[0], -1, -1, -1};
            std::vector<int> rest(crossing.begin() + 1, crossing.end());
            for (int k = 1; k < 4; ++k) {
                const int prev = cycle[k - 1];
                for (size_t r = 0; r < rest.size(); ++r) {
                    const auto& pe = kTetEdges[prev];
                    const auto& ce = kTetEdges[rest[r]];
                    const bool adjacent = pe[0] == ce[0] || pe[0] == ce[1] || pe[1] == ce[0] ||
                                          pe[1] == ce[1];
                    if (adjacent) {
                        cycle[k] = rest[r];
                        rest.erase(rest.begin() + r);
                        break;
                    }
                }
            }
            const Vec3 n = (midpoint(cycle[1]) - midpoint(cycle[0]))
                               .cross(midpoint(cycle[2]) - midpoint(cycle[0]));
            if (n.dot(outward) < 0.0) std::swap(cycle[1], cycle[3]);
            entry.n_edges = 4;
            entry.edges = cycle;
        }
        table[code] = entry;
    }
    return table;
}

const std::array<CaseEntry, 16>& case_table() {
    static const std::array<CaseEntry, 16> table = build_case_table();
    return table;
}

} // namespace

MtOutput marching_tet(const TetGrid& grid, const std::vector<double>& sdf) {
    if (sdf.size() != grid.vertices.size())
        throw LengthMismatch("sdf size (" + std::to_string(sdf.size()) + ") != vertex count (" +
                             std::to_string(grid.vertices.size()) + ")");

    // Tie-break: exact zeros become strictly positive.
    auto sign_value = [&](int v) {
        const double s = sdf[v];
        return s == 0.0 ? 1e-10 : s;
    };

    MtOutput out;
    out.grid_vertex_count = grid.vertex_count();
    std::unordered_map<uint64_t, int> edge_to_vertex;

    auto crossing_vertex = [&](int ga, int gb) {
        if (ga > gb) std::swap(ga, gb);
        const uint64_t key = (static_cast<uint64_t>(ga) << 32) | static_cast<uint32_t>(gb);
        const auto it = edge_to_vertex.find(key);
        if (it != edge_to_vertex.end()) return it->second;
        const double sa = sign_value(ga);
        const double sb = sign_value(gb);
        const double denom = sa - sb;
        const double t = sa / denom;
        const Vec3& va = grid.vertices[ga];
        const Vec3& vb = grid.vertices[gb];
        const int id = static_cast<int>(out.mesh.vertices.size());
        out.mesh.vertices.push_back(va + t * (vb - va));
        out.provenance.push_back({ga, gb, t});
        const Vec3 dir = vb - va;
        out.d_pos_d_sa.push_back(dir * (-sb / (denom * denom)));
        out.d_pos_d_sb.push_back(dir * (sa / (denom * denom)));
        edge_to_vertex.emplace(key, id);
        return id;
    };

    const auto& table = case_table();
    for (const auto& tet : grid.tets) {
        int code = 0;
        for (int i = 0; i < 4; ++i)
            if (sign_value(tet[i]) > 0.0) code |= 1 << i;
        const CaseEntry& entry = table[code];
        if (entry.n_edges == 0) continue;

        std::array<int, 4> ids{};
        for (int k = 0; k < entry.n_edges; ++k) {
            const auto& e = kTetEdges[entry.edges[k]];
            ids[k] = crossing_vertex(tet[e[0]], tet[e[1]]);
        }
        if (entry.n_edges == 3) {
            out.mesh.faces.push_back({ids[0], ids[1], ids[2]});
        } else {
            // Quad diagonal starts at the corner with the smallest global
            // vertex id, preserving the cyclic orientation.
            int start = 0;
            for (int k = 1; k < 4; ++k)
                if (ids[k] < ids[start]) start = k;
            const int q0 = ids[start];
            const int q1 = ids[(start + 1) % 4];
            const int q2 = ids[(start + 2) % 4];
            const int q3 = ids[(start + 3) % 4];
            out.mesh.faces.push_back({q0, q1, q2});
            out.mesh.faces.push_back({q0, q2, q3});
        }
    }
    return out;
}

std::vector<double> mt_backward(const MtOutput& out, const std::vector<Vec3>& upstream) {
    if (upstream.size() != out.mesh.vertices.size())
        throw LengthMismatch("upstream size != output vertex count");
    std::vector<double> grads(out.grid_vertex_count, 0.0);
    for (size_t i = 0; i < upstream.size(); ++i) {
        const auto& prov = out.provenance[i];
        grads[prov.edge_a] += upstream[i].dot(out.d_pos_d_sa[i]);
        grads[prov.edge_b] += upstream[i].dot(out.d_pos_d_sb[i]);
    }
    return grads;
}

} // namespace tetrec
