#pragma once

#include "tetrec/mesh.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace tetrec {

/// Compact tetrahedral grid. Tets are stored with positive orientation
/// (signed volume > 0). Construction and subdivision are deterministic:
/// identical inputs produce identical vertex and tet orderings.
struct TetGrid {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 4>> tets;
    int level = 0;                       // subdivision generation
    std::vector<uint8_t> surface_mask;   // per tet, set by mark_surface_tets

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int tet_count() const { return static_cast<int>(tets.size()); }

    double tet_volume(int t) const;
    double total_volume() const;

    /// Throws if any tet is non-positively oriented or volumes degenerate.
    void validate() const;
};

/// Fills the watertight shell with a body-centered-cubic tetrahedral lattice
/// clipped to the shell: tets with at least one vertex strictly inside are
/// kept. `resolution` is lattice cells per scene unit (>= 8).
/// Throws EmptyShell when nothing intersects the shell interior.
TetGrid build_shell_grid(const TriMesh& shell, int resolution);

/// Unclipped BCC lattice over an axis-aligned box (fixtures and tests).
TetGrid build_box_grid(const Vec3& lo, const Vec3& hi, int resolution);

/// surface_mask[t] = true iff the four SDF values of tet t are not all of
/// the same sign. sdf_values.size() must equal the vertex count.
TetGrid mark_surface_tets(const TetGrid& grid, const std::vector<double>& sdf_values);

/// Red-green refinement: marked tets split 1->8 via edge midpoints; unmarked
/// neighbours are split by conforming green templates (or promoted to red
/// when no template applies), so every interior face stays shared by exactly
/// two tets. Children inherit the parent's surface flag; level increments.
TetGrid subdivide_surface(const TetGrid& grid);

/// Longest edge over all tets.
double max_edge_length(const TetGrid& grid);

/// Versioned little-endian binary container (magic, version, counts; f64
/// vertices, u32 tets, level, optional mask) for pipeline checkpointing.
void save_grid(const TetGrid& grid, const std::string& path);
TetGrid load_grid(const std::string& path);

} // namespace tetrec
