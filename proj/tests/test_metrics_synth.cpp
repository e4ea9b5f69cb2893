#include "tetrec/errors.hpp"
#include "tetrec/mesh_query.hpp"
#include "tetrec/metrics.hpp"
#include "tetrec/pipeline.hpp"
#include "tetrec/synth.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <filesystem>

using namespace tetrec;
using namespace tetrec::testing;

TEST_CASE("eval_meshes: identical meshes give zero everywhere") {
    const TriMesh sphere = make_icosphere(3, 0.8);
    const EvalReport report = eval_meshes(sphere, sphere, 4000);
    CHECK(report.chamfer < 1e-12);
    CHECK(report.p2s < 1e-12);
    CHECK(report.normal_error == 0.0);
}

TEST_CASE("eval_meshes: concentric spheres radius 1 vs 1.1 give chamfer ~0.1") {
    const TriMesh unit = make_icosphere(4, 1.0);
    const TriMesh bigger = make_icosphere(4, 1.1);
    const EvalReport report = eval_meshes(unit, bigger, 20000);

    // dense-sampling oracle: every surface point of one sphere is exactly
    // 0.1 from the other (up to icosphere discretization)
    CHECK(std::abs(report.chamfer - 0.1) / 0.1 < 0.05);
    CHECK(std::abs(report.p2s - 0.1) / 0.1 < 0.05);
}

TEST_CASE("eval_meshes: empty mesh throws") {
    const TriMesh sphere = make_icosphere(1);
    TriMesh empty;
    CHECK_THROWS_AS(eval_meshes(empty, sphere), EmptyMesh);
    CHECK_THROWS_AS(eval_meshes(sphere, empty), EmptyMesh);
}

TEST_CASE("psnr: identical images cap at 99, +0.1 offset gives 20 dB") {
    Image a(16, 16, 3, 0.4);
    CHECK(psnr(a, a) == 99.0);

    Image b = a;
    for (auto& v : b.data) v += 0.1;
    CHECK(std::abs(psnr(a, b) - 20.0) < 1e-9);
}

TEST_CASE("ssim: identity is 1, negative correlation goes below zero") {
    Rng rng(21);
    Image a(32, 32, 1);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            a.at(y, x, 0) = 0.5 + 0.45 * std::sin(0.7 * x) * std::cos(0.5 * y);
    CHECK(ssim(a, a) == doctest::Approx(1.0));

    Image negated = a;
    for (auto& v : negated.data) v = 1.0 - v;
    CHECK(ssim(a, negated) < 0.0);
}

TEST_CASE("eval_images: averages over pairs and checks dimensions") {
    Image a(16, 16, 3, 0.2), b(16, 16, 3, 0.2);
    const EvalReport r = eval_images({a}, {b});
    CHECK(r.psnr == 99.0);
    CHECK(r.ssim == doctest::Approx(1.0));
    CHECK_THROWS_AS(eval_images({a}, {}), DimensionMismatch);
}

TEST_CASE("sample_surface: deterministic and on-surface") {
    const TriMesh sphere = make_icosphere(3, 0.5);
    Rng rng_a(4), rng_b(4);
    const auto pa = sample_surface(sphere, 500, rng_a);
    const auto pb = sample_surface(sphere, 500, rng_b);
    REQUIRE(pa.size() == pb.size());
    MeshDistanceQuery query(sphere);
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i] == pb[i]);
        CHECK(query.unsigned_distance(pa[i]) < 1e-9);
    }
}

TEST_CASE("synth_scene: sphere fixture produces a centered-disk mask") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "tetrec_synth_sphere").string();
    const auto result = synth_scene(SynthShape::Sphere, SynthTexture::Stripes, dir, 48, 96);

    const Image& mask = result.scene.foreground_mask;
    // centered disk: covered iff within the analytic projected radius
    const double alpha = std::asin(0.3 / 1.0);
    const double radius_px =
        std::tan(alpha) / std::tan(0.5 * 45.0 * M_PI / 180.0) * (96 / 2.0);
    int mismatches = 0;
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            const double dx = x + 0.5 - 48.0, dy = y + 0.5 - 48.0;
            const bool inside = std::hypot(dx, dy) < radius_px - 1.5;
            const bool outside = std::hypot(dx, dy) > radius_px + 1.5;
            if (inside && mask.at(y, x, 0) < 0.5) ++mismatches;
            if (outside && mask.at(y, x, 0) > 0.5) ++mismatches;
        }
    CHECK(mismatches == 0);
}

TEST_CASE("synth_scene: front and back normal maps are mirror-consistent") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "tetrec_synth_mirror").string();
    const auto result = synth_scene(SynthShape::Sphere, SynthTexture::Gray, dir, 48, 96);

    // For a z-symmetric shape: the back view of the sphere at mirrored pixel
    // (y, W-1-x) sees the same surface point with world z negated. In camera
    // space both views report identical z; x flips with the pixel mirror.
    const Image& front = result.scene.normal_front;
    const Image& back = result.scene.normal_back;
    const Image& fmask = result.scene.foreground_mask;
    const Image& bmask = result.scene.back_mask;
    int compared = 0;
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            const int mx = 95 - x;
            if (fmask.at(y, x, 0) < 0.5 || bmask.at(y, mx, 0) < 0.5) continue;
            CHECK(std::abs(front.at(y, x, 0) + back.at(y, mx, 0)) < 0.1);
            CHECK(std::abs(front.at(y, x, 1) - back.at(y, mx, 1)) < 0.1);
            CHECK(std::abs(front.at(y, x, 2) - back.at(y, mx, 2)) < 0.1);
            ++compared;
        }
    CHECK(compared > 1000);
}

TEST_CASE("synth_scene: ground-truth round trip evaluates to zero chamfer") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "tetrec_synth_rt").string();
    const auto result = synth_scene(SynthShape::SphereBump, SynthTexture::Checker, dir, 32, 64);
    const EvalReport report = eval_meshes(result.ground_truth, result.ground_truth, 3000);
    CHECK(report.chamfer < 1e-12);
    CHECK(report.p2s < 1e-12);

    // the written scene reloads consistently
    const SceneInput loaded = load_scene(dir);
    CHECK(loaded.input_image.width == 64);
    CHECK(loaded.foreground_mask.height == 64);
    CHECK(loaded.body.face_count() == result.ground_truth.face_count());
    CHECK(loaded.attributes.gender == "man");
}

TEST_CASE("synth_scene: analytic SDF shapes have the advertised extents") {
    CHECK(analytic_sdf(SynthShape::Sphere, Vec3(0.3, 0, 0)) == doctest::Approx(0.0));
    CHECK(analytic_sdf(SynthShape::Sphere, Vec3(0, 0, 0)) == doctest::Approx(-0.3));
    CHECK(analytic_sdf(SynthShape::Capsule, Vec3(0, 0.35, 0)) == doctest::Approx(0.0));
    CHECK(analytic_sdf(SynthShape::SphereBump, Vec3(0.38, 0, 0)) == doctest::Approx(0.0));
    // the bump sticks out only on +x
    CHECK(analytic_sdf(SynthShape::SphereBump, Vec3(-0.28, 0, 0)) == doctest::Approx(0.0));
}

TEST_CASE("image raw container round trip") {
    namespace fs = std::filesystem;
    Rng rng(3);
    Image img(7, 5, 3);
    for (auto& v : img.data) v = rng.uniform();
    const std::string path = (fs::temp_directory_path() / "img_rt.imgf").string();
    save_image_raw(img, path);
    const Image loaded = load_image_raw(path);
    REQUIRE(loaded.same_shape(img));
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(loaded.data[i] == doctest::Approx(img.data[i]).epsilon(1e-7)); // f32 payload
}
