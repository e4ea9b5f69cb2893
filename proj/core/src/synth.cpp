#include "tetrec/synth.hpp"

#include "tetrec/errors.hpp"
#include "tetrec/marching_tet.hpp"
#include "tetrec/mesh_io.hpp"
#include "tetrec/render.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace tetrec {

using nlohmann::json;
namespace fs = std::filesystem;

SynthShape parse_shape(const std::string& name) {
    if (name == "sphere") return SynthShape::Sphere;
    if (name == "capsule") return SynthShape::Capsule;
    if (name == "sphere_bump" || name == "sphere-with-bump") return SynthShape::SphereBump;
    throw PreconditionError("unknown synth shape: " + name);
}

SynthTexture parse_texture(const std::string& name) {
    if (name == "stripes") return SynthTexture::Stripes;
    if (name == "checker") return SynthTexture::Checker;
    if (name == "gray") return SynthTexture::Gray;
    throw PreconditionError("unknown synth texture: " + name);
}

double analytic_sdf(SynthShape shape, const Vec3& p) {
    switch (shape) {
        case SynthShape::Sphere:
            return p.norm() - 0.3;
        case SynthShape::Capsule: {
            // vertical segment (0,-0.15,0)..(0,0.15,0), radius 0.2
            const double y = std::clamp(p.y(), -0.15, 0.15);
            return (p - Vec3(0.0, y, 0.0)).norm() - 0.2;
        }
        case SynthShape::SphereBump: {
            const double base = p.norm() - 0.28;
            const double bump = (p - Vec3(0.28, 0.0, 0.0)).norm() - 0.1;
            return std::min(base, bump);
        }
    }
    return 1.0;
}

Vec3 analytic_color(SynthTexture texture, const Vec3& p) {
    switch (texture) {
        case SynthTexture::Stripes: {
            const double r = 0.5 + 0.35 * std::sin(14.0 * p.y());
            const double g = 0.5 + 0.35 * std::sin(11.0 * p.x() + 1.3);
            const double b = 0.5 + 0.35 * std::cos(9.0 * p.z() - 0.7);
            return Vec3(r, g, b);
        }
        case SynthTexture::Checker: {
            const int parity = (static_cast<int>(std::floor(p.x() * 8.0)) +
                                static_cast<int>(std::floor(p.y() * 8.0)) +
                                static_cast<int>(std::floor(p.z() * 8.0))) & 1;
            return parity ? Vec3(0.85, 0.85, 0.85) : Vec3(0.2, 0.25, 0.35);
        }
        case SynthTexture::Gray: {
            const double v = 0.45 + 0.25 * std::sin(10.0 * p.y());
            return Vec3(v, v, v);
        }
    }
    return Vec3(0.5, 0.5, 0.5);
}

namespace {

Vec3 shape_head_keypoint(SynthShape shape) {
    switch (shape) {
        case SynthShape::Sphere: return Vec3(0.0, 0.24, 0.0);
        case SynthShape::Capsule: return Vec3(0.0, 0.28, 0.0);
        case SynthShape::SphereBump: return Vec3(0.0, 0.22, 0.0);
    }
    return Vec3(0.0, 0.2, 0.0);
}

/// Hard binary coverage of a render.
Image hard_mask(const RenderBuffers& buffers) {
    Image mask(buffers.height, buffers.width, 1, 0.0);
    for (size_t p = 0; p < buffers.face_id.size(); ++p)
        mask.data[p] = buffers.face_id[p] >= 0 ? 1.0 : 0.0;
    return mask;
}

Image albedo_from_analytic(const RenderBuffers& buffers, SynthTexture texture) {
    Image img(buffers.height, buffers.width, 3, 0.0);
    for (int y = 0; y < buffers.height; ++y)
        for (int x = 0; x < buffers.width; ++x) {
            if (buffers.face_at(y, x) < 0) continue;
            const Vec3 p(buffers.position.at(y, x, 0), buffers.position.at(y, x, 1),
                         buffers.position.at(y, x, 2));
            const Vec3 c = analytic_color(texture, p);
            for (int k = 0; k < 3; ++k) img.at(y, x, k) = std::clamp(c[k], 0.0, 1.0);
        }
    return img;
}

} // namespace

SynthSceneResult synth_scene(SynthShape shape, SynthTexture texture, const std::string& out_dir,
                             int grid_resolution, int image_size) {
    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "previews");

    // Ground truth from the analytic SDF on an unclipped lattice.
    const TetGrid grid = build_box_grid(Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5),
                                        grid_resolution);
    std::vector<double> sdf(grid.vertices.size());
    for (size_t i = 0; i < grid.vertices.size(); ++i)
        sdf[i] = analytic_sdf(shape, grid.vertices[i]);
    TriMesh gt = marching_tet(grid, sdf).mesh;
    if (gt.faces.empty()) throw EmptyMesh("synthetic shape produced no surface");

    SynthSceneResult result;
    result.directory = out_dir;
    result.ground_truth = gt;

    Camera front;
    front.width = front.height = image_size;
    front.vertical_fov = 45.0 * M_PI / 180.0;
    front.target = Vec3::Zero();
    front.eye = Vec3(0.0, 0.0, 1.0);
    front.azimuth = 0.0;
    Camera back = front;
    back.eye = Vec3(0.0, 0.0, -1.0);
    back.azimuth = M_PI;

    const RenderBuffers front_buf = rasterize(gt, front);
    const RenderBuffers back_buf = rasterize(gt, back);

    SceneInput& scene = result.scene;
    scene.input_image = albedo_from_analytic(front_buf, texture);
    scene.foreground_mask = hard_mask(front_buf);
    scene.normal_front = front_buf.normal;
    scene.normal_back = back_buf.normal;
    scene.back_mask = hard_mask(back_buf);
    scene.body = gt;
    scene.head_keypoint = shape_head_keypoint(shape);
    scene.input_camera = front;
    scene.attributes.gender = "man";
    scene.attributes.garments = {"gray suit"};

    // Files
    const fs::path dir(out_dir);
    save_mesh(gt, (dir / "gt.obj").string());
    save_mesh(gt, (dir / "body.obj").string());
    save_image_raw(scene.input_image, (dir / "image.imgf").string());
    save_image_raw(scene.foreground_mask, (dir / "mask.imgf").string());
    save_image_raw(scene.normal_front, (dir / "normal_front.imgf").string());
    save_image_raw(scene.normal_back, (dir / "normal_back.imgf").string());
    save_image_raw(scene.back_mask, (dir / "mask_back.imgf").string());
    save_image_png(scene.input_image, (dir / "previews" / "image.png").string());
    save_image_png(scene.foreground_mask, (dir / "previews" / "mask.png").string());
    save_image_png(normal_to_rgb(scene.normal_front),
                   (dir / "previews" / "normal_front.png").string());
    save_image_png(normal_to_rgb(scene.normal_back),
                   (dir / "previews" / "normal_back.png").string());

    json attrs;
    attrs["gender"] = scene.attributes.gender;
    attrs["garments"] = scene.attributes.garments;
    {
        std::ofstream out(dir / "attributes.json");
        out << attrs.dump(2) << "\n";
    }

    json manifest;
    manifest["image"] = "image.imgf";
    manifest["mask"] = "mask.imgf";
    manifest["normal_front"] = "normal_front.imgf";
    manifest["normal_back"] = "normal_back.imgf";
    manifest["back_mask"] = "mask_back.imgf";
    manifest["body"] = "body.obj";
    manifest["ground_truth"] = "gt.obj";
    manifest["attributes"] = "attributes.json";
    manifest["head_keypoint"] = {scene.head_keypoint.x(), scene.head_keypoint.y(),
                                 scene.head_keypoint.z()};
    manifest["camera"] = {
        {"eye", {front.eye.x(), front.eye.y(), front.eye.z()}},
        {"target", {front.target.x(), front.target.y(), front.target.z()}},
        {"up", {0.0, 1.0, 0.0}},
        {"fov_deg", 45.0},
        {"width", front.width},
        {"height", front.height},
    };
    {
        std::ofstream out(dir / "scene.json");
        out << manifest.dump(2) << "\n";
    }
    return result;
}

} // namespace tetrec
