#include "tetrec/mesh.hpp"

#include "tetrec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace tetrec {

void TriMesh::validate() const {
    const int n = vertex_count();
    for (size_t f = 0; f < faces.size(); ++f) {
        const auto& face = faces[f];
        for (int k = 0; k < 3; ++k) {
            if (face[k] < 0 || face[k] >= n)
                throw TopologyError("face " + std::to_string(f) + " references vertex " +
                                    std::to_string(face[k]) + " of " + std::to_string(n));
        }
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
            throw TopologyError("degenerate face " + std::to_string(f) +
                                " repeats a vertex index");
    }
}

Vec3 TriMesh::face_normal(int f) const {
    const auto& t = faces[f];
    const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    const double len = n.norm();
    return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double TriMesh::face_area(int f) const {
    const auto& t = faces[f];
    return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

double TriMesh::surface_area() const {
    double a = 0.0;
    for (int f = 0; f < face_count(); ++f) a += face_area(f);
    return a;
}

const std::vector<Vec3>& TriMesh::vertex_normals() const {
    if (!vertex_normals_cache) {
        std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
        for (const auto& t : faces) {
            // Cross product is twice the area-weighted face normal.
            const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
            if (n.squaredNorm() == 0.0) continue;
            normals[t[0]] += n;
            normals[t[1]] += n;
            normals[t[2]] += n;
        }
        for (auto& n : normals) {
            const double len = n.norm();
            if (len > 0.0) n /= len;
        }
        vertex_normals_cache = std::move(normals);
    }
    return *vertex_normals_cache;
}

Vec3 TriMesh::bbox_min() const {
    Vec3 m = Vec3::Constant(std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) m = m.cwiseMin(v);
    return m;
}

Vec3 TriMesh::bbox_max() const {
    Vec3 m = Vec3::Constant(-std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) m = m.cwiseMax(v);
    return m;
}

bool TriMesh::is_closed() const {
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : faces) {
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            edge_count[{std::min(a, b), std::max(a, b)}]++;
        }
    }
    for (const auto& [edge, count] : edge_count)
        if (count != 2) return false;
    return !faces.empty();
}

std::vector<std::vector<int>> vertex_adjacency(const TriMesh& mesh) {
    std::vector<std::set<int>> adj(mesh.vertices.size());
    for (const auto& t : mesh.faces) {
        adj[t[0]].insert(t[1]);
        adj[t[0]].insert(t[2]);
        adj[t[1]].insert(t[0]);
        adj[t[1]].insert(t[2]);
        adj[t[2]].insert(t[0]);
        adj[t[2]].insert(t[1]);
    }
    std::vector<std::vector<int>> result(adj.size());
    for (size_t i = 0; i < adj.size(); ++i)
        result[i].assign(adj[i].begin(), adj[i].end());
    return result;
}

double laplacian_energy(const TriMesh& mesh) {
    const auto adj = vertex_adjacency(mesh);
    double energy = 0.0;
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (adj[v].empty()) continue;
        Vec3 mean = Vec3::Zero();
        for (int u : adj[v]) mean += mesh.vertices[u];
        mean /= static_cast<double>(adj[v].size());
        energy += (mesh.vertices[v] - mean).squaredNorm();
    }
    return energy;
}

LaplacianResult laplacian_energy_with_grad(const TriMesh& mesh) {
    const auto adj = vertex_adjacency(mesh);
    LaplacianResult result;
    result.gradient.assign(mesh.vertices.size(), Vec3::Zero());
    std::vector<Vec3> residual(mesh.vertices.size(), Vec3::Zero());
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (adj[v].empty()) continue;
        Vec3 mean = Vec3::Zero();
        for (int u : adj[v]) mean += mesh.vertices[u];
        mean /= static_cast<double>(adj[v].size());
        residual[v] = mesh.vertices[v] - mean;
        result.energy += residual[v].squaredNorm();
    }
    // dE/dv = 2 r_v - Σ_{u : v ∈ N(u)} 2 r_u / |N(u)|
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
        result.gradient[v] += 2.0 * residual[v];
        for (int u : adj[v]) {
            result.gradient[u] -= 2.0 * residual[v] / static_cast<double>(adj[v].size());
        }
    }
    return result;
}

void vertex_normals_backward(const TriMesh& mesh,
                             const std::vector<Vec3>& normal_grads,
                             std::vector<Vec3>& position_grads) {
    if (normal_grads.size() != mesh.vertices.size())
        throw LengthMismatch("normal_grads size does not match vertex count");
    if (position_grads.size() != mesh.vertices.size())
        position_grads.assign(mesh.vertices.size(), Vec3::Zero());

    // Unnormalized accumulators m_v = Σ_f c_f (c_f = cross product of face f).
    std::vector<Vec3> m(mesh.vertices.size(), Vec3::Zero());
    for (const auto& t : mesh.faces) {
        const Vec3 c = (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                           .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
        if (c.squaredNorm() == 0.0) continue;
        for (int k = 0; k < 3; ++k) m[t[k]] += c;
    }

    // Backprop through per-vertex normalization: n = m/|m|.
    std::vector<Vec3> m_grads(mesh.vertices.size(), Vec3::Zero());
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
        const double len = m[v].norm();
        if (len == 0.0) continue;
        const Vec3 n = m[v] / len;
        m_grads[v] = (normal_grads[v] - n * n.dot(normal_grads[v])) / len;
    }

    // Backprop through the cross products into vertex positions.
    // c = (b-a) x (c-a); dc contributes to a, b, c via the cross-product rule.
    for (const auto& t : mesh.faces) {
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& cv = mesh.vertices[t[2]];
        const Vec3 e1 = b - a;
        const Vec3 e2 = cv - a;
        if (e1.cross(e2).squaredNorm() == 0.0) continue;
        const Vec3 g = m_grads[t[0]] + m_grads[t[1]] + m_grads[t[2]];
        // d(e1 x e2)/d e1 applied to g is g x e2... using identity:
        // <g, d(e1 x e2)> = <g, de1 x e2> + <g, e1 x de2>
        //                 = <e2 x g, de1> + <g x e1, de2>
        const Vec3 d_e1 = e2.cross(g);
        const Vec3 d_e2 = g.cross(e1);
        position_grads[t[1]] += d_e1;
        position_grads[t[2]] += d_e2;
        position_grads[t[0]] -= d_e1 + d_e2;
    }
}

int euler_characteristic(const TriMesh& mesh) {
    std::set<std::pair<int, int>> edges;
    std::set<int> used;
    for (const auto& t : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            edges.insert({std::min(a, b), std::max(a, b)});
            used.insert(a);
        }
    }
    return static_cast<int>(used.size()) - static_cast<int>(edges.size()) +
           static_cast<int>(mesh.faces.size());
}

} // namespace tetrec
