#pragma once

#include "tetrec/mesh.hpp"

#include <memory>
#include <vector>

namespace tetrec {

struct SignedDistanceSample {
    Vec3 point;
    double distance = 0.0; // negative inside
};

struct SdfQueryResult {
    std::vector<SignedDistanceSample> samples;
    /// Set when the mesh is open and the sign fell back to the
    /// nearest-triangle normal heuristic instead of the winding number.
    bool open_mesh_heuristic = false;
};

/// AABB tree over mesh triangles for exact point-to-surface distance.
class MeshDistanceQuery {
public:
    explicit MeshDistanceQuery(const TriMesh& mesh);
    ~MeshDistanceQuery();
    MeshDistanceQuery(MeshDistanceQuery&&) noexcept;
    MeshDistanceQuery& operator=(MeshDistanceQuery&&) noexcept;

    /// Exact unsigned distance to the triangle soup, with the closest point
    /// and triangle index.
    double unsigned_distance(const Vec3& p, Vec3* closest = nullptr,
                             int* triangle = nullptr) const;

    /// Generalized winding number (1 inside a watertight surface, 0 outside).
    double winding_number(const Vec3& p) const;

    bool mesh_is_closed() const { return closed_; }

private:
    struct Node;
    const TriMesh* mesh_;
    std::vector<Node> nodes_;
    std::vector<int> triangle_order_;
    bool closed_ = false;
};

/// Signed distance of each point: |d| is the exact distance to the surface,
/// sign from the generalized winding number (> 0.5 means inside, negative).
/// Open meshes fall back to a nearest-normal sign heuristic and set the
/// result flag.
SdfQueryResult signed_distance(const TriMesh& mesh, const std::vector<Vec3>& points);

/// Exact closest point on one triangle.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

} // namespace tetrec
