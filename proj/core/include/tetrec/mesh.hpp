#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <optional>
#include <vector>

namespace tetrec {

using Vec3 = Eigen::Vector3d;

/// Indexed triangle surface. Vertex order is preserved through file I/O and
/// all operators, which keeps runs reproducible.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    /// Lazily computed area-weighted vertex normals (unit length).
    mutable std::optional<std::vector<Vec3>> vertex_normals_cache;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
    bool empty() const { return faces.empty(); }

    /// Throws TopologyError if any face index is out of range or repeated
    /// within a face.
    void validate() const;

    /// Area-weighted vertex normals; zero-area faces are skipped. Cached.
    const std::vector<Vec3>& vertex_normals() const;
    void invalidate_normals() { vertex_normals_cache.reset(); }

    Vec3 face_normal(int f) const;    // unit, zero vector for degenerate faces
    double face_area(int f) const;
    double surface_area() const;
    Vec3 bbox_min() const;
    Vec3 bbox_max() const;
    /// True when every edge is shared by exactly two faces.
    bool is_closed() const;
};

/// Σ_v ‖v − mean(one-ring)‖² with its analytic gradient w.r.t. positions.
struct LaplacianResult {
    double energy = 0.0;
    std::vector<Vec3> gradient; // per vertex
};

double laplacian_energy(const TriMesh& mesh);
LaplacianResult laplacian_energy_with_grad(const TriMesh& mesh);

/// One-ring adjacency (undirected edges), sorted per vertex.
std::vector<std::vector<int>> vertex_adjacency(const TriMesh& mesh);

/// Backward pass of the vertex-normal computation: given dL/d(unit vertex
/// normals), accumulate dL/d(vertex positions). Used by the renderer when
/// normal images receive gradients.
void vertex_normals_backward(const TriMesh& mesh,
                             const std::vector<Vec3>& normal_grads,
                             std::vector<Vec3>& position_grads);

/// V - E + F (topological Euler characteristic).
int euler_characteristic(const TriMesh& mesh);

} // namespace tetrec
