#include "tetrec/mesh_ops.hpp"

#include "tetrec/errors.hpp"
#include "tetrec/mesh_query.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <vector>

namespace tetrec {

TriMesh dilate(const TriMesh& mesh, double offset) {
    if (offset < 0.0) throw PreconditionError("dilate offset must be >= 0");
    const auto& normals = mesh.vertex_normals();

    std::vector<bool> referenced(mesh.vertices.size(), false);
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) referenced[f[k]] = true;

    TriMesh out;
    out.vertices.resize(mesh.vertices.size());
    out.faces = mesh.faces;
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (referenced[v] && normals[v].squaredNorm() < 1e-24)
            throw DegenerateNormal("vertex " + std::to_string(v) +
                                   " has a zero-area normal umbrella");
        out.vertices[v] = mesh.vertices[v] + offset * normals[v];
    }
    return out;
}

namespace {

/// Plane quadric accumulated as the symmetric 4x4 form split into parts.
struct Quadric {
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Vec3 b = Vec3::Zero();
    double c = 0.0;

    void add_plane(const Vec3& n, double d, double weight) {
        A += weight * (n * n.transpose());
        b += weight * d * n;
        c += weight * d * d;
    }
    Quadric& operator+=(const Quadric& o) {
        A += o.A;
        b += o.b;
        c += o.c;
        return *this;
    }
    double eval(const Vec3& v) const { return v.dot(A * v) + 2.0 * b.dot(v) + c; }
};

struct EdgeKey {
    int a, b; // a < b
    bool operator<(const EdgeKey& o) const {
        return a != o.a ? a < o.a : b < o.b;
    }
    bool operator==(const EdgeKey& o) const { return a == o.a && b == o.b; }
};

struct QueueEntry {
    double cost;
    EdgeKey key;
    uint64_t stamp; // sum of vertex versions when pushed, for lazy invalidation
    bool operator>(const QueueEntry& o) const {
        if (cost != o.cost) return cost > o.cost;
        return o.key < key; // lowest edge index wins ties
    }
};

} // namespace

TriMesh decimate(const TriMesh& mesh, double reduce_fraction) {
    if (!(reduce_fraction > 0.0 && reduce_fraction < 1.0))
        throw PreconditionError("reduce_fraction must be in (0, 1)");
    mesh.validate();

    // Manifold precondition: no edge with more than two incident faces.
    {
        std::map<EdgeKey, int> edge_faces;
        for (const auto& f : mesh.faces)
            for (int k = 0; k < 3; ++k) {
                int a = f[k], b = f[(k + 1) % 3];
                edge_faces[{std::min(a, b), std::max(a, b)}]++;
            }
        for (const auto& [key, count] : edge_faces)
            if (count > 2)
                throw NonManifoldInput("edge (" + std::to_string(key.a) + "," +
                                       std::to_string(key.b) + ") has " + std::to_string(count) +
                                       " incident faces");
    }

    const int target_faces = static_cast<int>(
        std::ceil((1.0 - reduce_fraction) * static_cast<double>(mesh.face_count())));

    std::vector<Vec3> positions = mesh.vertices;
    std::vector<std::array<int, 3>> faces = mesh.faces;
    std::vector<bool> face_alive(faces.size(), true);
    std::vector<std::set<int>> vertex_faces(positions.size());
    for (size_t f = 0; f < faces.size(); ++f)
        for (int k = 0; k < 3; ++k) vertex_faces[faces[f][k]].insert(static_cast<int>(f));

    // Area-weighted plane quadrics per vertex.
    std::vector<Quadric> quadrics(positions.size());
    for (size_t f = 0; f < faces.size(); ++f) {
        const auto& t = faces[f];
        const Vec3 cr = (positions[t[1]] - positions[t[0]]).cross(positions[t[2]] - positions[t[0]]);
        const double area2 = cr.norm();
        if (area2 == 0.0) continue;
        const Vec3 n = cr / area2;
        const double d = -n.dot(positions[t[0]]);
        for (int k = 0; k < 3; ++k) quadrics[t[k]].add_plane(n, d, 0.5 * area2);
    }

    std::vector<uint64_t> vertex_version(positions.size(), 0);
    std::vector<bool> vertex_alive(positions.size(), true);

    auto optimal_position = [&](const Quadric& q, const Vec3& pa, const Vec3& pb,
                                double* out_cost) -> Vec3 {
        Eigen::FullPivLU<Eigen::Matrix3d> lu(q.A);
        Vec3 best;
        if (lu.isInvertible()) {
            best = lu.solve(-q.b);
        } else {
            best = 0.5 * (pa + pb);
        }
        double best_cost = q.eval(best);
        for (const Vec3& cand : {Vec3(0.5 * (pa + pb)), pa, pb}) {
            const double cost = q.eval(cand);
            if (cost < best_cost) {
                best_cost = cost;
                best = cand;
            }
        }
        if (out_cost) *out_cost = best_cost;
        return best;
    };

    std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<QueueEntry>> queue;

    auto push_edge = [&](int a, int b) {
        if (a == b || !vertex_alive[a] || !vertex_alive[b]) return;
        EdgeKey key{std::min(a, b), std::max(a, b)};
        Quadric q = quadrics[key.a];
        q += quadrics[key.b];
        double cost;
        optimal_position(q, positions[key.a], positions[key.b], &cost);
        queue.push({cost, key, vertex_version[key.a] + vertex_version[key.b]});
    };

    {
        std::set<EdgeKey> seen;
        for (size_t f = 0; f < faces.size(); ++f)
            for (int k = 0; k < 3; ++k) {
                int a = faces[f][k], b = faces[f][(k + 1) % 3];
                EdgeKey key{std::min(a, b), std::max(a, b)};
                if (seen.insert(key).second) push_edge(a, b);
            }
    }

    int alive_faces = static_cast<int>(faces.size());

    auto neighbors_of = [&](int v) {
        std::set<int> out;
        for (int f : vertex_faces[v]) {
            if (!face_alive[f]) continue;
            for (int k = 0; k < 3; ++k)
                if (faces[f][k] != v) out.insert(faces[f][k]);
        }
        return out;
    };

    while (alive_faces > target_faces && !queue.empty()) {
        const QueueEntry entry = queue.top();
        queue.pop();
        const int a = entry.key.a, b = entry.key.b;
        if (!vertex_alive[a] || !vertex_alive[b]) continue;
        if (entry.stamp != vertex_version[a] + vertex_version[b]) continue; // stale

        // The edge may have disappeared since it was pushed.
        std::vector<int> shared_faces;
        for (int f : vertex_faces[a]) {
            if (!face_alive[f]) continue;
            const auto& t = faces[f];
            if (t[0] == b || t[1] == b || t[2] == b) shared_faces.push_back(f);
        }
        if (shared_faces.empty()) continue;

        // Link condition: common neighbors must be exactly the vertices
        // opposite the shared faces, otherwise the collapse pinches the mesh.
        const auto na = neighbors_of(a);
        const auto nb = neighbors_of(b);
        std::set<int> common;
        std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(),
                              std::inserter(common, common.begin()));
        std::set<int> opposite;
        for (int f : shared_faces)
            for (int k = 0; k < 3; ++k)
                if (faces[f][k] != a && faces[f][k] != b) opposite.insert(faces[f][k]);
        if (common != opposite) continue;

        Quadric q = quadrics[a];
        q += quadrics[b];
        const Vec3 new_pos = optimal_position(q, positions[a], positions[b], nullptr);

        // Reject collapses that flip surviving faces.
        bool flips = false;
        for (int v : {a, b}) {
            for (int f : vertex_faces[v]) {
                if (!face_alive[f] || flips) continue;
                const auto& t = faces[f];
                if ((t[0] == a || t[1] == a || t[2] == a) &&
                    (t[0] == b || t[1] == b || t[2] == b))
                    continue; // face disappears
                Vec3 p[3], pn[3];
                for (int k = 0; k < 3; ++k) {
                    p[k] = positions[t[k]];
                    pn[k] = (t[k] == a || t[k] == b) ? new_pos : positions[t[k]];
                }
                const Vec3 n_old = (p[1] - p[0]).cross(p[2] - p[0]);
                const Vec3 n_new = (pn[1] - pn[0]).cross(pn[2] - pn[0]);
                if (n_old.dot(n_new) <= 1e-14 * n_old.norm() * n_old.norm()) flips = true;
            }
        }
        if (flips) continue;

        // Perform the collapse: b merges into a.
        positions[a] = new_pos;
        quadrics[a] = q;
        vertex_alive[b] = false;
        vertex_version[a]++;
        vertex_version[b]++;

        for (int f : shared_faces) {
            face_alive[f] = false;
            --alive_faces;
        }
        for (int f : std::vector<int>(vertex_faces[b].begin(), vertex_faces[b].end())) {
            if (!face_alive[f]) continue;
            auto& t = faces[f];
            for (int k = 0; k < 3; ++k)
                if (t[k] == b) t[k] = a;
            vertex_faces[a].insert(f);
        }
        vertex_faces[b].clear();

        for (int u : neighbors_of(a)) push_edge(a, u);
    }

    // Compact the result, preserving relative vertex order.
    TriMesh out;
    std::vector<int> remap(positions.size(), -1);
    for (size_t f = 0; f < faces.size(); ++f) {
        if (!face_alive[f]) continue;
        for (int k = 0; k < 3; ++k) {
            const int v = faces[f][k];
            if (remap[v] < 0) {
                remap[v] = static_cast<int>(out.vertices.size());
                out.vertices.push_back(positions[v]);
            }
        }
        out.faces.push_back({remap[faces[f][0]], remap[faces[f][1]], remap[faces[f][2]]});
    }
    return out;
}

double approx_hausdorff(const TriMesh& a, const TriMesh& b, int samples_per_face) {
    if (a.faces.empty() || b.faces.empty()) throw EmptyMesh("hausdorff over empty mesh");
    MeshDistanceQuery qa(a);
    MeshDistanceQuery qb(b);
    auto one_sided = [&](const TriMesh& src, const MeshDistanceQuery& query) {
        double worst = 0.0;
        for (size_t f = 0; f < src.faces.size(); ++f) {
            const auto& t = src.faces[f];
            const Vec3 p0 = src.vertices[t[0]], p1 = src.vertices[t[1]], p2 = src.vertices[t[2]];
            for (int s = 0; s < samples_per_face; ++s) {
                // deterministic barycentric pattern: corners, then centroid
                Vec3 p;
                if (s == 0) p = (p0 + p1 + p2) / 3.0;
                else if (s == 1) p = 0.5 * (p0 + p1);
                else p = 0.5 * (p1 + p2);
                worst = std::max(worst, query.unsigned_distance(p));
            }
            worst = std::max({worst, query.unsigned_distance(p0)});
        }
        return worst;
    };
    return std::max(one_sided(a, qb), one_sided(b, qa));
}

} // namespace tetrec
