#pragma once

#include "tetrec/mesh.hpp"

namespace tetrec {

/// Moves every vertex by `offset` along its area-weighted vertex normal.
/// Topology is unchanged. Normals are taken from the input mesh, so two
/// successive dilations are not equivalent to one dilation by the sum.
/// Throws DegenerateNormal when a referenced vertex has a zero normal.
TriMesh dilate(const TriMesh& mesh, double offset);

/// Quadric-error-metric edge collapse. Collapses until the face count drops
/// to ceil((1 - reduce_fraction) * input face count) or no valid collapse
/// remains. Ties are broken by lowest edge index for determinism.
/// reduce_fraction must lie in (0, 1); input must be manifold.
TriMesh decimate(const TriMesh& mesh, double reduce_fraction);

/// Sampled approximation of the symmetric Hausdorff distance (used to verify
/// the decimation tolerance contract; not a loss).
double approx_hausdorff(const TriMesh& a, const TriMesh& b, int samples_per_face = 3);

} // namespace tetrec
