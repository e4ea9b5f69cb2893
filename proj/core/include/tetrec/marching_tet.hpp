#pragma once

#include "tetrec/mesh.hpp"
#include "tetrec/tet_grid.hpp"

#include <vector>

namespace tetrec {

/// Result of differentiable Marching Tetrahedra.
///
/// Every surface vertex records the grid edge it lives on (a < b), its
/// interpolation parameter t = s_a / (s_a - s_b), and the analytic Jacobian
/// of its position w.r.t. the two endpoint SDF values. Sign changes in the
/// SDF (and nothing else) alter face connectivity, so gradients are valid as
/// long as no sign flips.
struct MtOutput {
    TriMesh mesh;

    struct Provenance {
        int edge_a = -1; // grid vertex indices, edge_a < edge_b
        int edge_b = -1;
        double t = 0.0;  // in (0, 1)
    };
    std::vector<Provenance> provenance;   // per output vertex
    std::vector<Vec3> d_pos_d_sa;         // per output vertex
    std::vector<Vec3> d_pos_d_sb;

    int grid_vertex_count = 0;
};

/// Extracts the zero isosurface of per-vertex SDF values on the grid.
/// Exact zeros are nudged to +1e-10 so every vertex has a strict sign.
/// Output triangles are oriented so normals point toward positive SDF;
/// crossing vertices are deduplicated across shared tet edges.
MtOutput marching_tet(const TetGrid& grid, const std::vector<double>& sdf);

/// Transposed Jacobian: scatter-adds upstream position gradients into a
/// per-grid-vertex SDF gradient array (deterministic accumulation order).
std::vector<double> mt_backward(const MtOutput& out, const std::vector<Vec3>& upstream);

} // namespace tetrec
