#include "tetrec/camera_sampler.hpp"
#include "tetrec/errors.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace tetrec;

TEST_CASE("sample_camera: defaults match the configured distribution") {
    const SamplerConfig config;
    CHECK(config.p_body == 0.7);
    CHECK(config.r_face[0] == 0.3);
    CHECK(config.r_face[1] == 0.4);
    CHECK(config.theta_face_deg[0] == -90.0);
    CHECK(config.theta_face_deg[1] == 90.0);
}

TEST_CASE("sample_camera: face fraction, bounds, and azimuth uniformity") {
    SamplerConfig config;
    Rng rng(424242);
    const int n = 100000;
    int faces = 0;
    std::array<int, 36> bins{};
    for (int i = 0; i < n; ++i) {
        const SampledCamera s = sample_camera(config, rng);
        if (s.is_face) {
            ++faces;
            const double r = (s.camera.eye - s.camera.target).norm();
            CHECK(r >= config.r_face[0] - 1e-12);
            CHECK(r <= config.r_face[1] + 1e-12);
            const double az = s.camera.azimuth * 180.0 / M_PI;
            CHECK(az >= config.theta_face_deg[0] - 1e-9);
            CHECK(az <= config.theta_face_deg[1] + 1e-9);
        } else {
            const double r = (s.camera.eye - s.camera.target).norm();
            CHECK(r >= config.r_body[0] - 1e-12);
            CHECK(r <= config.r_body[1] + 1e-12);
            CHECK(s.camera.eye.y() >= config.h_body[0] - 1e-12);
            CHECK(s.camera.eye.y() <= config.h_body[1] + 1e-12);
            // azimuth histogram over 36 bins for the chi-square test
            double az = s.camera.azimuth * 180.0 / M_PI;
            if (az >= 180.0) az -= 360.0;
            const int bin =
                std::clamp(static_cast<int>((az + 180.0) / 10.0), 0, 35);
            bins[bin]++;
        }
    }
    const double face_fraction = static_cast<double>(faces) / n;
    CHECK(std::abs(face_fraction - 0.3) <= 0.01);

    // chi-square uniformity over 36 bins, p > 0.01 (critical value for 35
    // degrees of freedom at alpha = 0.01 is 57.342)
    const int body_count = n - faces;
    const double expected = static_cast<double>(body_count) / 36.0;
    double chi2 = 0.0;
    for (int count : bins) {
        const double diff = count - expected;
        chi2 += diff * diff / expected;
    }
    CHECK(chi2 < 57.342);
}

TEST_CASE("sample_camera: degenerate height interval pins every camera") {
    SamplerConfig config;
    config.h_body = {0.0, 0.0};
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const SampledCamera s = sample_camera(config, rng);
        if (!s.is_face) CHECK(s.camera.eye.y() == 0.0);
    }
}

TEST_CASE("sample_camera: seeded determinism") {
    const SamplerConfig config;
    Rng rng_a(99), rng_b(99);
    for (int i = 0; i < 100; ++i) {
        const SampledCamera a = sample_camera(config, rng_a);
        const SampledCamera b = sample_camera(config, rng_b);
        CHECK(a.is_face == b.is_face);
        CHECK(a.camera.eye == b.camera.eye);
        CHECK(a.camera.target == b.camera.target);
        CHECK(a.camera.azimuth == b.camera.azimuth);
    }
}

TEST_CASE("sample_camera: face cameras look at the configured target") {
    SamplerConfig config;
    config.p_body = 0.0; // face cameras only
    config.face_target = Vec3(0.05, 0.3, -0.02);
    Rng rng(12);
    for (int i = 0; i < 50; ++i) {
        const SampledCamera s = sample_camera(config, rng);
        CHECK(s.is_face);
        CHECK((s.camera.target - config.face_target).norm() == 0.0);
    }
}

TEST_CASE("sample_camera: invalid configuration throws") {
    SamplerConfig config;
    config.p_body = 1.5;
    Rng rng(1);
    CHECK_THROWS_AS(sample_camera(config, rng), PreconditionError);

    SamplerConfig empty_phi;
    empty_phi.phi_body_deg.clear();
    CHECK_THROWS_AS(sample_camera(empty_phi, rng), PreconditionError);
}

TEST_CASE("sample_camera: cameras project a valid frame") {
    SamplerConfig config;
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const SampledCamera s = sample_camera(config, rng);
        s.camera.validate();
        CHECK(s.camera.width == config.width);
        CHECK(s.camera.height == config.height);
    }
}
