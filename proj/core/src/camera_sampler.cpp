#include "tetrec/camera_sampler.hpp"

#include "tetrec/errors.hpp"

#include <cmath>

namespace tetrec {

void SamplerConfig::validate() const {
    if (!(p_body >= 0.0 && p_body <= 1.0))
        throw PreconditionError("p_body must lie in [0, 1]");
    auto check_interval = [](const std::array<double, 2>& iv, const char* name) {
        if (iv[0] > iv[1]) throw PreconditionError(std::string(name) + " interval is empty");
    };
    check_interval(h_body, "h_body");
    check_interval(r_body, "r_body");
    check_interval(theta_body_deg, "theta_body");
    check_interval(r_face, "r_face");
    check_interval(theta_face_deg, "theta_face");
    if (phi_body_deg.empty()) throw PreconditionError("phi_body set is empty");
    if (width < 1 || height < 1 || fov_deg <= 0.0 || fov_deg >= 180.0)
        throw PreconditionError("bad image/fov settings");
}

SampledCamera sample_camera(const SamplerConfig& config, Rng& rng) {
    config.validate();
    const double deg = M_PI / 180.0;
    SampledCamera out;
    Camera& cam = out.camera;
    cam.width = config.width;
    cam.height = config.height;
    cam.vertical_fov = config.fov_deg * deg;
    cam.up = Vec3(0, 1, 0);

    const bool body = rng.uniform() < config.p_body;
    out.is_face = !body;
    if (body) {
        const double theta = rng.uniform(config.theta_body_deg[0], config.theta_body_deg[1]) * deg;
        const double h = rng.uniform(config.h_body[0], config.h_body[1]);
        const double r = rng.uniform(config.r_body[0], config.r_body[1]);
        const double phi =
            config.phi_body_deg[rng.uniform_index(config.phi_body_deg.size())] * deg;
        cam.target = Vec3(0.0, h, 0.0);
        cam.eye = cam.target + r * Vec3(std::sin(theta) * std::cos(phi), std::sin(phi),
                                        std::cos(theta) * std::cos(phi));
        cam.azimuth = theta;
        cam.elevation = phi;
    } else {
        const double theta = rng.uniform(config.theta_face_deg[0], config.theta_face_deg[1]) * deg;
        const double r = rng.uniform(config.r_face[0], config.r_face[1]);
        cam.target = config.face_target;
        cam.eye = cam.target + r * Vec3(std::sin(theta), 0.0, std::cos(theta));
        cam.azimuth = theta;
        cam.elevation = 0.0;
    }
    return out;
}

} // namespace tetrec
