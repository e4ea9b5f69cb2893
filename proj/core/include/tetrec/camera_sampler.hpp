#pragma once

#include "tetrec/camera.hpp"
#include "tetrec/rng.hpp"

#include <array>
#include <vector>

namespace tetrec {

/// Random camera distribution: body cameras orbit the body centre at a
/// sampled height/radius/azimuth, face cameras orbit the head keypoint.
/// Angles are degrees in the config, radians in the Camera.
struct SamplerConfig {
    double p_body = 0.7;
    std::array<double, 2> h_body{-0.4, 0.4};
    std::array<double, 2> r_body{0.7, 1.3};
    std::array<double, 2> theta_body_deg{-180.0, 180.0};
    std::vector<double> phi_body_deg{0.0};
    Vec3 face_target{0.0, 0.3, 0.0};
    std::array<double, 2> r_face{0.3, 0.4};
    std::array<double, 2> theta_face_deg{-90.0, 90.0};
    int width = 128;
    int height = 128;
    double fov_deg = 45.0;

    void validate() const;
};

struct SampledCamera {
    Camera camera;
    bool is_face = false;
};

/// Draws one camera. Body branch with probability p_body: height, radius and
/// azimuth uniform over their intervals, elevation from the phi set, looking
/// horizontally at the body axis. Face branch: radius/azimuth uniform,
/// looking at the face target.
SampledCamera sample_camera(const SamplerConfig& config, Rng& rng);

} // namespace tetrec
