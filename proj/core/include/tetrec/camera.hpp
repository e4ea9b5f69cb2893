#pragma once

#include "tetrec/mesh.hpp"

#include <cmath>

namespace tetrec {

/// Pinhole camera. Azimuth/elevation are bookkeeping for view-aware prompts;
/// eye/target/up define the actual pose.
struct Camera {
    Vec3 eye = Vec3(0, 0, 2);
    Vec3 target = Vec3::Zero();
    Vec3 up = Vec3(0, 1, 0);
    double vertical_fov = 45.0 * M_PI / 180.0; // radians
    int width = 128;
    int height = 128;
    double azimuth = 0.0;    // radians, bookkeeping
    double elevation = 0.0;  // radians, bookkeeping

    void validate() const;

    /// Orthonormal camera frame: x=right, y=up, z=back (camera looks along -z).
    void frame(Vec3& right, Vec3& up_out, Vec3& back) const;

    /// World -> camera space (z negative in front of the camera).
    Vec3 to_camera(const Vec3& p) const;

    /// Camera-space point -> pixel coordinates (pixel centers at +0.5) and
    /// positive view depth. Returns false behind the near plane.
    bool project(const Vec3& cam, double& sx, double& sy, double& depth) const;
};

} // namespace tetrec
