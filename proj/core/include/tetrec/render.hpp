#pragma once

#include "tetrec/camera.hpp"
#include "tetrec/field.hpp"
#include "tetrec/image.hpp"
#include "tetrec/mesh.hpp"

#include <cstdint>
#include <vector>

namespace tetrec {

struct RasterOptions {
    double sigma_px = 1.0;            // soft silhouette width in pixels
    Vec3 background_normal = Vec3(0, 0, 1); // camera space
    Vec3 background_albedo = Vec3(0, 0, 0);
    double near_clip = 1e-4;
};

/// Per-camera render buffers.
///
/// `mask` is the soft silhouette coverage (SoftRas-style probabilistic union
/// over front faces, evaluated exactly in a band around the silhouette and
/// saturated to 0/1 outside it). Hard channels (position, normal, albedo,
/// depth, face_id) come from the z-buffered hit: face_id == -1 marks
/// background, where normal/albedo hold the configured constants. Covered
/// pixels always have mask > 0 and mask == 0 implies background.
struct RenderBuffers {
    int height = 0, width = 0;
    Image position;   // H x W x 3, world space
    Image normal;     // H x W x 3, camera space, unit where covered
    Image albedo;     // H x W x 3 (filled by query_albedo)
    Image mask;       // H x W x 1, soft coverage in [0, 1]
    Image depth;      // H x W x 1, +inf background
    Image bary;       // H x W x 3, perspective-correct barycentrics
    std::vector<int32_t> face_id; // H*W, -1 background

    Camera camera;
    RasterOptions options;
    Image soft_product;  // H x W x 1: Q = prod(1 - sigma_f), for backward
    uint64_t mesh_fingerprint = 0;

    int32_t face_at(int y, int x) const { return face_id[static_cast<size_t>(y) * width + x]; }
};

/// Upstream per-pixel gradients for rasterize_backward. Any image may be
/// empty (skipped). Normal gradients are in camera space.
struct RenderUpstream {
    Image d_mask;     // H x W x 1
    Image d_normal;   // H x W x 3
    Image d_position; // H x W x 3
};

struct RenderGrads {
    std::vector<Vec3> d_vertices;  // per mesh vertex, world space
    Vec3 d_background_normal = Vec3::Zero(); // camera space
};

/// Z-buffered, perspective-correct rasterization with a soft silhouette.
/// An empty mesh produces all-background buffers.
RenderBuffers rasterize(const TriMesh& mesh, const Camera& camera,
                        const RasterOptions& options = {});

/// Gradients of the render w.r.t. mesh vertex positions. Interior pixels use
/// fixed face assignment and barycentric weights; silhouette gradients flow
/// through the soft-mask sigmoid to the nearest screen-space edge feature.
/// Throws StaleBuffers when buffers do not match mesh/camera.
RenderGrads rasterize_backward(const RenderBuffers& buffers, const TriMesh& mesh,
                               const RenderUpstream& upstream);

/// Albedo pass: every covered pixel evaluates the color field at the
/// canonical-space surface point (barycentric combination of the hit face's
/// canonical vertices; identity when no correspondence is given).
struct AlbedoRender {
    Image albedo;                  // H x W x 3
    FieldNet::ForwardCache cache;  // for albedo_backward
    std::vector<int> covered_pixels; // pixel index per cache point
};

AlbedoRender query_albedo(const FieldNet& color_net, const RenderBuffers& buffers,
                          const TriMesh& mesh,
                          const std::vector<Vec3>* canonical_vertices = nullptr);

/// Backprop of an albedo image gradient into the color field (and the
/// learnable background albedo, returned).
Vec3 albedo_backward(FieldNet& color_net, const AlbedoRender& render,
                     const Image& upstream_albedo);

/// True for every query point whose projection lands in-frame and whose view
/// depth matches the depth buffer within epsilon_z.
std::vector<bool> visibility_mask(const TriMesh& mesh, const Camera& camera,
                                  const std::vector<Vec3>& query_points,
                                  double epsilon_z = 1e-3);

/// Maps camera-space normals into RGB as (n+1)/2 for previews and SDS input.
Image normal_to_rgb(const Image& normal_buffer);

} // namespace tetrec
