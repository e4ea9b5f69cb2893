#include "tetrec/errors.hpp"
#include "tetrec/field.hpp"
#include "tetrec/guidance.hpp"
#include "tetrec/marching_tet.hpp"
#include "tetrec/mesh_io.hpp"
#include "tetrec/mesh_ops.hpp"
#include "tetrec/metrics.hpp"
#include "tetrec/parallel.hpp"
#include "tetrec/pipeline.hpp"
#include "tetrec/render.hpp"
#include "tetrec/synth.hpp"
#include "tetrec/tet_grid.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace tetrec;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Machine-readable summary on stdout; logs stay on stderr.
void emit_summary(const json& j) { std::cout << j.dump(2) << std::endl; }

void write_manifest(const std::string& out_dir, const PipelineConfig& config,
                    const std::string& command) {
    fs::create_directories(out_dir);
    json m;
    m["command"] = command;
    m["seed"] = config.seed;
    m["threads"] = config.threads;
    m["score_provider"] = config.score_provider;
    m["version"] = "0.1.0";
    m["timestamp"] = static_cast<int64_t>(std::time(nullptr));
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    out << m.dump(2) << "\n";
}

struct CommonFlags {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    int threads = 0;
    int resolution = 0;
    std::string provider;
    std::string recorded;
    bool paper_scale = false;
};

PipelineConfig resolve_config(const CommonFlags& flags) {
    PipelineConfig config =
        flags.config_path.empty() ? desk_scale_config() : load_config(flags.config_path);
    if (flags.paper_scale) apply_paper_scale(config);
    if (flags.seed_set) config.seed = flags.seed;
    if (flags.threads > 0) config.threads = flags.threads;
    if (flags.resolution > 0) config.grid_resolution = flags.resolution;
    if (!flags.provider.empty()) config.score_provider = flags.provider;
    if (!flags.recorded.empty()) config.recorded_scores_path = flags.recorded;
    return config;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_out) {
    cmd->add_option("--config", flags.config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    auto* seed_opt = cmd->add_option("--seed", flags.seed, "Master random seed");
    cmd->parse_complete_callback(
        [&flags, seed_opt]() { flags.seed_set = seed_opt->count() > 0; });
    auto* out = cmd->add_option("--out", flags.out_dir, "Output directory");
    if (needs_out) out->required();
    cmd->add_option("--threads", flags.threads, "Worker thread cap");
    cmd->add_option("--resolution", flags.resolution, "Tet grid cells per unit");
    cmd->add_option("--score-provider", flags.provider, "null|gaussian|recorded")
        ->check(CLI::IsMember({"null", "gaussian", "recorded"}));
    cmd->add_option("--recorded-scores", flags.recorded, "Recorded score JSONL path");
    cmd->add_flag("--paper-scale", flags.paper_scale,
                  "Use full-scale iteration counts and resolutions");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tetrec: hybrid tetrahedral reconstruction pipeline"};
    app.require_subcommand(1);

    // ---- init-shell ----
    auto* cmd_shell =
        app.add_subcommand("init-shell", "Build the outer shell and tetrahedral grid");
    CommonFlags f_shell;
    std::string shell_body;
    add_common(cmd_shell, f_shell, true);
    cmd_shell->add_option("--body", shell_body, "Template body mesh (.obj/.ply)")
        ->required()
        ->check(CLI::ExistingFile);

    // ---- fit-geometry ----
    auto* cmd_geom = app.add_subcommand("fit-geometry", "Run the geometry optimization stage");
    CommonFlags f_geom;
    std::string geom_scene, geom_resume;
    add_common(cmd_geom, f_geom, true);
    cmd_geom->add_option("--scene", geom_scene, "Scene directory (scene.json)")->required();
    cmd_geom->add_option("--resume", geom_resume, "Checkpoint directory to resume from");

    // ---- fit-texture ----
    auto* cmd_tex = app.add_subcommand("fit-texture", "Run the texture optimization stage");
    CommonFlags f_tex;
    std::string tex_scene, tex_mesh, tex_canon;
    add_common(cmd_tex, f_tex, true);
    cmd_tex->add_option("--scene", tex_scene, "Scene directory")->required();
    cmd_tex->add_option("--mesh", tex_mesh, "Input-pose mesh from the geometry stage")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_tex->add_option("--canonical", tex_canon,
                        "Canonical-pose mesh with 1:1 vertex correspondence");

    // ---- extract-mesh ----
    auto* cmd_extract =
        app.add_subcommand("extract-mesh", "Marching-tetrahedra extraction from a checkpoint");
    CommonFlags f_extract;
    std::string extract_field, extract_grid, extract_mesh_out;
    add_common(cmd_extract, f_extract, false);
    cmd_extract->add_option("--field", extract_field, "Geometry field checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_extract->add_option("--grid", extract_grid, "Serialized tet grid")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_extract->add_option("--mesh-out", extract_mesh_out, "Output mesh path")->required();

    // ---- render ----
    auto* cmd_render = app.add_subcommand("render", "Render buffers of a mesh");
    CommonFlags f_render;
    std::string render_mesh_path, render_field;
    double render_azimuth = 0.0, render_elevation = 0.0, render_radius = 1.0;
    int render_size = 128;
    add_common(cmd_render, f_render, true);
    cmd_render->add_option("--mesh", render_mesh_path, "Mesh to render")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_render->add_option("--color-field", render_field, "Optional albedo field checkpoint");
    cmd_render->add_option("--azimuth", render_azimuth, "Camera azimuth (degrees)");
    cmd_render->add_option("--elevation", render_elevation, "Camera elevation (degrees)");
    cmd_render->add_option("--radius", render_radius, "Camera distance");
    cmd_render->add_option("--size", render_size, "Image size in pixels");

    // ---- synth-scene ----
    auto* cmd_synth = app.add_subcommand("synth-scene", "Generate a synthetic test scene");
    CommonFlags f_synth;
    std::string synth_shape = "sphere", synth_texture = "stripes";
    int synth_size = 128, synth_grid = 64;
    add_common(cmd_synth, f_synth, true);
    cmd_synth->add_option("--shape", synth_shape, "sphere|capsule|sphere_bump");
    cmd_synth->add_option("--texture", synth_texture, "stripes|checker|gray");
    cmd_synth->add_option("--size", synth_size, "Image size");
    cmd_synth->add_option("--gt-resolution", synth_grid, "Ground-truth grid resolution");

    // ---- eval ----
    auto* cmd_eval = app.add_subcommand("eval", "Evaluate meshes and/or images");
    CommonFlags f_eval;
    std::string eval_recon, eval_truth, eval_render_img, eval_truth_img;
    int eval_samples = 20000;
    add_common(cmd_eval, f_eval, false);
    cmd_eval->add_option("--recon", eval_recon, "Reconstructed mesh")->check(CLI::ExistingFile);
    cmd_eval->add_option("--truth", eval_truth, "Ground-truth mesh")->check(CLI::ExistingFile);
    cmd_eval->add_option("--render-image", eval_render_img, "Rendered image (.imgf)")
        ->check(CLI::ExistingFile);
    cmd_eval->add_option("--truth-image", eval_truth_img, "Reference image (.imgf)")
        ->check(CLI::ExistingFile);
    cmd_eval->add_option("--samples", eval_samples, "Surface samples per direction");

    // ---- compose-prompt ----
    auto* cmd_prompt = app.add_subcommand("compose-prompt", "Compose a view-aware text prompt");
    CommonFlags f_prompt;
    std::string prompt_attrs, prompt_view = "front", prompt_token = "[V]";
    bool prompt_face = false, prompt_normal = false;
    add_common(cmd_prompt, f_prompt, false);
    cmd_prompt->add_option("--attrs", prompt_attrs, "Attribute JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_prompt->add_option("--view", prompt_view, "front|side|back|overhead");
    cmd_prompt->add_option("--token", prompt_token, "Subject identifier token");
    cmd_prompt->add_flag("--face", prompt_face, "Face zoom prompt");
    cmd_prompt->add_flag("--normal-mode", prompt_normal, "Sculpture (normal map) prompt");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*cmd_shell) {
            const auto config = resolve_config(f_shell);
            set_thread_count(config.threads);
            fs::create_directories(f_shell.out_dir);
            const TriMesh body = load_mesh(shell_body);
            const ShellResult shell = build_shell(body, config);
            save_mesh(shell.shell, (fs::path(f_shell.out_dir) / "shell.obj").string());
            save_grid(shell.grid, (fs::path(f_shell.out_dir) / "grid.bin").string());
            write_manifest(f_shell.out_dir, config, "init-shell");
            emit_summary({{"command", "init-shell"},
                          {"shell_vertices", shell.shell.vertex_count()},
                          {"shell_faces", shell.shell.face_count()},
                          {"grid_vertices", shell.grid.vertex_count()},
                          {"grid_tets", shell.grid.tet_count()},
                          {"out", f_shell.out_dir}});
        } else if (*cmd_geom) {
            const auto config = resolve_config(f_geom);
            const SceneInput scene = load_scene(geom_scene);
            auto provider = make_score_provider(config, &scene);
            write_manifest(f_geom.out_dir, config, "fit-geometry");
            const auto result =
                run_geometry_stage(scene, config, *provider, f_geom.out_dir, geom_resume);
            save_grid(result.grid, (fs::path(f_geom.out_dir) / "grid.bin").string());
            emit_summary({{"command", "fit-geometry"},
                          {"mesh", (fs::path(f_geom.out_dir) / "meshes/geometry.obj").string()},
                          {"vertices", result.mesh.vertex_count()},
                          {"faces", result.mesh.face_count()},
                          {"grid_level", result.grid.level},
                          {"out", f_geom.out_dir}});
        } else if (*cmd_tex) {
            const auto config = resolve_config(f_tex);
            const SceneInput scene = load_scene(tex_scene);
            const TriMesh mesh_in = load_mesh(tex_mesh);
            std::optional<TriMesh> canon;
            if (!tex_canon.empty()) canon = load_mesh(tex_canon);
            else if (scene.canonical_mesh) canon = scene.canonical_mesh;
            auto provider = make_score_provider(config, &scene);
            write_manifest(f_tex.out_dir, config, "fit-texture");
            const auto result =
                run_texture_stage(scene, mesh_in, canon, config, *provider, f_tex.out_dir);
            emit_summary(
                {{"command", "fit-texture"},
                 {"input_view_psnr", result.input_view_psnr},
                 {"field", (fs::path(f_tex.out_dir) / "checkpoints/color_field.bin").string()},
                 {"out", f_tex.out_dir}});
        } else if (*cmd_extract) {
            const FieldNet field = FieldNet::load(extract_field);
            const TetGrid grid = load_grid(extract_grid);
            const auto sdf = field.forward(grid.vertices);
            const MtOutput mt = marching_tet(grid, sdf);
            save_mesh(mt.mesh, extract_mesh_out);
            emit_summary({{"command", "extract-mesh"},
                          {"vertices", mt.mesh.vertex_count()},
                          {"faces", mt.mesh.face_count()},
                          {"mesh", extract_mesh_out}});
        } else if (*cmd_render) {
            const TriMesh mesh = load_mesh(render_mesh_path);
            Camera cam;
            cam.width = cam.height = render_size;
            const double az = render_azimuth * M_PI / 180.0;
            const double el = render_elevation * M_PI / 180.0;
            cam.azimuth = az;
            cam.elevation = el;
            cam.target = Vec3::Zero();
            cam.eye = render_radius * Vec3(std::sin(az) * std::cos(el), std::sin(el),
                                           std::cos(az) * std::cos(el));
            const RenderBuffers buf = rasterize(mesh, cam);
            fs::create_directories(f_render.out_dir);
            const fs::path out(f_render.out_dir);
            save_image_raw(buf.mask, (out / "mask.imgf").string());
            save_image_raw(buf.normal, (out / "normal.imgf").string());
            save_image_raw(buf.position, (out / "position.imgf").string());
            save_image_raw(buf.depth, (out / "depth.imgf").string());
            save_image_png(buf.mask, (out / "mask.png").string());
            save_image_png(normal_to_rgb(buf.normal), (out / "normal.png").string());
            int covered = 0;
            for (auto f : buf.face_id) covered += (f >= 0);
            json summary = {{"command", "render"},
                            {"covered_pixels", covered},
                            {"out", f_render.out_dir}};
            if (!render_field.empty()) {
                const FieldNet color = FieldNet::load(render_field);
                const AlbedoRender ar = query_albedo(color, buf, mesh);
                save_image_raw(ar.albedo, (out / "albedo.imgf").string());
                save_image_png(ar.albedo, (out / "albedo.png").string());
                summary["albedo"] = (out / "albedo.imgf").string();
            }
            emit_summary(summary);
        } else if (*cmd_synth) {
            const auto result = synth_scene(parse_shape(synth_shape),
                                            parse_texture(synth_texture), f_synth.out_dir,
                                            synth_grid, synth_size);
            emit_summary({{"command", "synth-scene"},
                          {"shape", synth_shape},
                          {"texture", synth_texture},
                          {"gt_vertices", result.ground_truth.vertex_count()},
                          {"gt_faces", result.ground_truth.face_count()},
                          {"out", f_synth.out_dir}});
        } else if (*cmd_eval) {
            json summary = {{"command", "eval"}};
            if (eval_recon.empty() != eval_truth.empty())
                throw PreconditionError("--recon and --truth must be given together");
            if (!eval_recon.empty()) {
                const TriMesh recon = load_mesh(eval_recon);
                const TriMesh truth = load_mesh(eval_truth);
                const EvalReport r = eval_meshes(recon, truth, eval_samples);
                summary["chamfer"] = r.chamfer;
                summary["p2s"] = r.p2s;
                summary["normal_error"] = r.normal_error;
            }
            if (!eval_render_img.empty() && !eval_truth_img.empty()) {
                const Image a = load_image_raw(eval_render_img);
                const Image b = load_image_raw(eval_truth_img);
                const EvalReport r = eval_images({a}, {b});
                summary["psnr"] = r.psnr;
                summary["ssim"] = r.ssim;
            }
            emit_summary(summary);
        } else if (*cmd_prompt) {
            std::ifstream in(prompt_attrs);
            json a = json::parse(in, nullptr, false);
            if (a.is_discarded()) throw ParseError("attributes file is not valid JSON");
            AttributeSet attrs;
            attrs.gender = a.value("gender", std::string());
            if (a.contains("garments"))
                attrs.garments = a["garments"].get<std::vector<std::string>>();
            attrs.hair = a.value("hair", std::string());
            attrs.face = a.value("face", std::string());
            attrs.facial_hair = a.value("facial_hair", std::string());
            Camera cam;
            if (prompt_view == "front") cam.azimuth = 0.0;
            else if (prompt_view == "side") cam.azimuth = M_PI / 2.0;
            else if (prompt_view == "back") cam.azimuth = M_PI;
            else if (prompt_view == "overhead") cam.elevation = 80.0 * M_PI / 180.0;
            else throw PreconditionError("unknown view: " + prompt_view);
            const PromptCondition cond =
                compose_prompt(attrs, prompt_token, cam, prompt_normal, prompt_face);
            emit_summary({{"command", "compose-prompt"},
                          {"prompt", cond.text},
                          {"view", cond.view_tag}});
        }
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << std::endl;
        return 1;
    } catch (const IoError& e) {
        // missing or unreadable input files are usage errors
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}
