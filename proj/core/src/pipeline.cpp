#include "tetrec/pipeline.hpp"

#include "tetrec/errors.hpp"
#include "tetrec/marching_tet.hpp"
#include "tetrec/mesh_io.hpp"
#include "tetrec/mesh_ops.hpp"
#include "tetrec/mesh_query.hpp"
#include "tetrec/parallel.hpp"
#include "tetrec/render.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace tetrec {

using nlohmann::json;
namespace fs = std::filesystem;

ShellResult build_shell(const TriMesh& body, const PipelineConfig& config) {
    ShellResult result;
    const TriMesh dilated = dilate(body, config.shell_offset);
    result.shell = config.shell_decimate > 0.0 ? decimate(dilated, config.shell_decimate)
                                               : dilated;
    result.grid = build_shell_grid(result.shell, config.grid_resolution);
    return result;
}

std::shared_ptr<ScoreProvider> make_score_provider(const PipelineConfig& config,
                                                   const SceneInput* scene) {
    if (config.score_provider == "null") return std::make_shared<NullScore>();
    if (config.score_provider == "gaussian") {
        if (!scene) throw PreconditionError("gaussian provider needs a scene");
        Image target = scene->input_image;
        if (target.height != config.sampler.height || target.width != config.sampler.width)
            throw PreconditionError(
                "gaussian provider requires render resolution == scene image resolution");
        return std::make_shared<AnalyticGaussianScore>(std::move(target));
    }
    if (config.score_provider == "recorded") {
        if (config.recorded_scores_path.empty())
            throw PreconditionError("recorded provider needs recorded_scores_path");
        return std::make_shared<RecordedScore>(config.recorded_scores_path);
    }
    throw PreconditionError("unknown score provider: " + config.score_provider);
}

namespace {

struct BgParam {
    std::vector<double> value;
    std::vector<double> grads;
    AdamState adam;

    explicit BgParam(const Vec3& init, double lr) {
        value = {init.x(), init.y(), init.z()};
        grads.assign(3, 0.0);
        adam.learning_rate = lr;
        adam.weight_decay = 0.0;
        adam.init(3);
    }
    Vec3 vec() const { return Vec3(value[0], value[1], value[2]); }
    void accumulate(const Vec3& g) {
        grads[0] += g.x();
        grads[1] += g.y();
        grads[2] += g.z();
    }
    void step() { adam_step(value, grads, adam); }
};

Camera back_view_of(const Camera& front) {
    Camera back = front;
    const Vec3 offset = front.eye - front.target;
    back.eye = front.target + Vec3(-offset.x(), offset.y(), -offset.z());
    back.azimuth = front.azimuth + M_PI;
    return back;
}

/// L_init sample set: 80% in a +-0.05 band around the body surface, 20%
/// uniform inside the shell. Distances are measured against the shell.
std::vector<SignedDistanceSample> make_init_samples(const TriMesh& body, const TriMesh& shell,
                                                    int n, Rng& rng) {
    std::vector<Vec3> points;
    points.reserve(n);
    const int n_band = (n * 8) / 10;

    // area-weighted body surface samples offset along face normals
    std::vector<double> cumulative(body.faces.size());
    double total = 0.0;
    for (size_t f = 0; f < body.faces.size(); ++f) {
        total += body.face_area(static_cast<int>(f));
        cumulative[f] = total;
    }
    for (int i = 0; i < n_band; ++i) {
        const double u = rng.uniform() * total;
        const size_t f = std::min<size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin(),
            body.faces.size() - 1);
        const auto& t = body.faces[f];
        double r1 = std::sqrt(rng.uniform());
        double r2 = rng.uniform();
        const Vec3 p = (1.0 - r1) * body.vertices[t[0]] +
                       r1 * (1.0 - r2) * body.vertices[t[1]] + r1 * r2 * body.vertices[t[2]];
        const Vec3 normal = body.face_normal(static_cast<int>(f));
        points.push_back(p + rng.uniform(-0.05, 0.05) * normal);
    }

    // uniform rejection samples inside the shell
    MeshDistanceQuery shell_query(shell);
    const Vec3 lo = shell.bbox_min(), hi = shell.bbox_max();
    int guard = 0;
    while (static_cast<int>(points.size()) < n && guard < 1000 * n) {
        ++guard;
        const Vec3 p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                     rng.uniform(lo.z(), hi.z()));
        if (shell_query.winding_number(p) > 0.5) points.push_back(p);
    }

    const auto sdf = signed_distance(shell, points);
    return sdf.samples;
}

void save_adam(const AdamState& adam, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    const uint32_t magic = 0x4d414441u; // "ADAM"
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&adam.step), 8);
    for (double v : {adam.learning_rate, adam.weight_decay, adam.beta1, adam.beta2, adam.epsilon})
        out.write(reinterpret_cast<const char*>(&v), 8);
    const uint64_t n = adam.m.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(adam.m.data()), n * 8);
    out.write(reinterpret_cast<const char*>(adam.v.data()), n * 8);
}

void load_adam(AdamState& adam, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    uint32_t magic;
    in.read(reinterpret_cast<char*>(&magic), 4);
    if (magic != 0x4d414441u) throw ParseError("bad adam magic in " + path);
    in.read(reinterpret_cast<char*>(&adam.step), 8);
    for (double* v : {&adam.learning_rate, &adam.weight_decay, &adam.beta1, &adam.beta2,
                      &adam.epsilon})
        in.read(reinterpret_cast<char*>(v), 8);
    uint64_t n;
    in.read(reinterpret_cast<char*>(&n), 8);
    adam.m.resize(n);
    adam.v.resize(n);
    in.read(reinterpret_cast<char*>(adam.m.data()), n * 8);
    in.read(reinterpret_cast<char*>(adam.v.data()), n * 8);
    if (!in) throw ParseError("truncated adam state: " + path);
}

void save_rng(const std::vector<const Rng*>& rngs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const Rng* rng : rngs) {
        const auto s = rng->state();
        out.write(reinterpret_cast<const char*>(s.data()), sizeof(s));
    }
}

void load_rng(const std::vector<Rng*>& rngs, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    for (Rng* rng : rngs) {
        std::array<uint64_t, 4> s;
        in.read(reinterpret_cast<char*>(s.data()), sizeof(s));
        rng->set_state(s);
    }
    if (!in) throw ParseError("truncated rng state: " + path);
}

bool all_finite(const std::vector<double>& values) {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

/// Writes one JSONL log record; doubles serialize with shortest-round-trip
/// so identical runs produce byte-identical logs.
void log_line(std::ofstream& log, const json& j) { log << j.dump() << "\n"; }

double image_abs_mean(const Image& img) {
    double acc = 0.0;
    for (double v : img.data) acc += std::abs(v);
    return img.data.empty() ? 0.0 : acc / static_cast<double>(img.data.size());
}

} // namespace

GeometryStageResult run_geometry_stage(const SceneInput& scene, const PipelineConfig& config,
                                       ScoreProvider& provider, const std::string& out_dir,
                                       const std::string& resume_from) {
    scene.validate();
    set_thread_count(config.threads);
    fs::create_directories(fs::path(out_dir) / "checkpoints");
    fs::create_directories(fs::path(out_dir) / "meshes");
    fs::create_directories(fs::path(out_dir) / "renders");
    save_config(config, (fs::path(out_dir) / "config.json").string());

    Rng master(config.seed);
    Rng rng_net = master.fork(1);
    Rng rng_init = master.fork(2);
    Rng rng_camera = master.fork(3);
    Rng rng_sds = master.fork(4);

    const ShellResult shell = build_shell(scene.body, config);
    TetGrid grid = shell.grid;

    auto field = std::make_shared<FieldNet>(config.geometry_encoding, config.geometry_mlp,
                                            rng_net.next_u64());
    AdamState adam;
    adam.learning_rate = config.geometry.learning_rate;
    adam.weight_decay = config.geometry.weight_decay;
    adam.init(field->param_count());
    BgParam bg_normal(Vec3(0, 0, 1), config.geometry.learning_rate);

    NoiseSchedule schedule = config.guidance.make_schedule();
    const int t_coarse = config.geometry.t_coarse;
    const int t_fine = config.geometry.t_fine;
    const int total_iters = t_coarse + t_fine;

    int start_iter = 0;
    if (resume_from.empty()) {
        const auto samples = make_init_samples(scene.body, shell.shell,
                                               config.geometry.init_samples, rng_init);
        FitOptions fit_opts;
        fit_opts.learning_rate = config.geometry.learning_rate;
        fit_opts.weight_decay = config.geometry.weight_decay;
        fit_to_sdf(*field, samples, config.geometry.init_iters, rng_init.next_u64(), fit_opts);
    } else {
        const fs::path ck(resume_from);
        std::ifstream sin(ck / "state.json");
        if (!sin) throw IoError("cannot open checkpoint state: " + resume_from);
        json st = json::parse(sin);
        start_iter = st.at("iter").get<int>();
        *field = FieldNet::load((ck / "field.bin").string());
        load_adam(adam, (ck / "adam.bin").string());
        load_adam(bg_normal.adam, (ck / "bg_adam.bin").string());
        {
            std::ifstream bin(ck / "bg.bin", std::ios::binary);
            bin.read(reinterpret_cast<char*>(bg_normal.value.data()), 3 * 8);
        }
        load_rng({&rng_camera, &rng_sds}, (ck / "rng.bin").string());
        if (st.value("level", 0) > 0) grid = load_grid((ck / "grid.bin").string());
    }

    auto write_checkpoint = [&](int iter) {
        const fs::path ck = fs::path(out_dir) / "checkpoints" /
                            ("ckpt_" + std::to_string(iter));
        fs::create_directories(ck);
        field->save((ck / "field.bin").string());
        save_adam(adam, (ck / "adam.bin").string());
        save_adam(bg_normal.adam, (ck / "bg_adam.bin").string());
        {
            std::ofstream bout(ck / "bg.bin", std::ios::binary);
            bout.write(reinterpret_cast<const char*>(bg_normal.value.data()), 3 * 8);
        }
        save_rng({&rng_camera, &rng_sds}, (ck / "rng.bin").string());
        if (grid.level > 0) save_grid(grid, (ck / "grid.bin").string());
        json st;
        st["iter"] = iter;
        st["level"] = grid.level;
        std::ofstream sout(ck / "state.json");
        sout << st.dump(2) << "\n";
        return ck.string();
    };

    std::ofstream log((fs::path(out_dir) / "log.jsonl").string(),
                      resume_from.empty() ? std::ios::trunc : std::ios::app);

    RasterOptions ropts;
    ropts.sigma_px = config.render.sigma_px;

    const Camera input_cam = scene.input_camera;
    const Camera back_cam = back_view_of(input_cam);
    const LossWeights& w = config.weights;

    MtOutput mt;
    for (int t = start_iter; t < total_iters; ++t) {
        if (t >= t_coarse && grid.level == 0 && config.max_subdivisions > 0) {
            const auto sdf = field->forward(grid.vertices);
            grid = mark_surface_tets(grid, sdf);
            grid = subdivide_surface(grid);
        }

        FieldNet::ForwardCache cache;
        const auto sdf = field->forward(grid.vertices, &cache);
        mt = marching_tet(grid, sdf);

        LossReport report;
        std::vector<Vec3> vertex_grads(mt.mesh.vertices.size(), Vec3::Zero());
        ropts.background_normal = bg_normal.vec();

        double sds_t = 0.0, sds_w = 0.0, sds_mag = 0.0;
        const double lam_norm =
            lambda_norm_schedule(t, t_coarse, t_fine, w.lambda_norm_base);

        if (!mt.mesh.faces.empty()) {
            // Laplacian smoothing regularizer on the extracted surface.
            const auto lap = laplacian_energy_with_grad(mt.mesh);
            report.add("lap", lap.energy, w.lambda_lap);
            for (size_t i = 0; i < vertex_grads.size(); ++i)
                vertex_grads[i] += w.lambda_lap * lap.gradient[i];

            // Input view: silhouette + front normal regularization.
            const RenderBuffers buf_front = rasterize(mt.mesh, input_cam, ropts);
            const auto sil = silhouette_loss(buf_front.mask, scene.foreground_mask);
            report.add("sil", sil.total(), w.lambda_sil);
            RenderUpstream up_front;
            up_front.d_mask = sil.d_mask;
            for (auto& v : up_front.d_mask.data) v *= w.lambda_sil;
            const auto nr_front =
                normal_reg_loss(buf_front.normal, scene.normal_front, scene.foreground_mask);
            report.add("norm_front", nr_front.value, lam_norm);
            up_front.d_normal = nr_front.grad;
            for (auto& v : up_front.d_normal.data) v *= lam_norm;
            const auto g_front = rasterize_backward(buf_front, mt.mesh, up_front);
            for (size_t i = 0; i < vertex_grads.size(); ++i)
                vertex_grads[i] += g_front.d_vertices[i];
            bg_normal.accumulate(g_front.d_background_normal);

            // Back view normal regularization.
            const RenderBuffers buf_back = rasterize(mt.mesh, back_cam, ropts);
            const auto nr_back =
                normal_reg_loss(buf_back.normal, scene.normal_back, scene.back_mask);
            report.add("norm_back", nr_back.value, lam_norm);
            RenderUpstream up_back;
            up_back.d_normal = nr_back.grad;
            for (auto& v : up_back.d_normal.data) v *= lam_norm;
            const auto g_back = rasterize_backward(buf_back, mt.mesh, up_back);
            for (size_t i = 0; i < vertex_grads.size(); ++i)
                vertex_grads[i] += g_back.d_vertices[i];
            bg_normal.accumulate(g_back.d_background_normal);

            // SDS on a sampled view's normal rendering (sculpture prompt).
            const SampledCamera sampled = sample_camera(config.sampler, rng_camera);
            const RenderBuffers buf_sds = rasterize(mt.mesh, sampled.camera, ropts);
            const Image rgb = normal_to_rgb(buf_sds.normal);
            const PromptCondition cond = compose_prompt(
                scene.attributes, config.identifier, sampled.camera, true, sampled.is_face);
            const SdsResult sds =
                sds_gradient(rgb, cond, provider, schedule, rng_sds, config.guidance.t_min,
                             config.guidance.t_max, t);
            sds_t = sds.t;
            sds_w = sds.weight;
            sds_mag = image_abs_mean(sds.gradient);
            RenderUpstream up_sds;
            up_sds.d_normal = sds.gradient;
            // d(rgb)/d(normal) = 0.5 per channel.
            for (auto& v : up_sds.d_normal.data) v *= 0.5 * w.lambda_sds;
            const auto g_sds = rasterize_backward(buf_sds, mt.mesh, up_sds);
            for (size_t i = 0; i < vertex_grads.size(); ++i)
                vertex_grads[i] += g_sds.d_vertices[i];
            bg_normal.accumulate(g_sds.d_background_normal);
        } else {
            // keep the rng streams advancing even with an empty surface
            sample_camera(config.sampler, rng_camera);
            rng_sds.uniform();
            rng_sds.next_u64();
        }

        const auto sdf_grads = mt_backward(mt, vertex_grads);
        std::vector<int> subset;
        for (size_t i = 0; i < sdf_grads.size(); ++i)
            if (sdf_grads[i] != 0.0) subset.push_back(static_cast<int>(i));
        field->backward(cache, sdf_grads, &subset);

        if (!std::isfinite(report.total) || !all_finite(bg_normal.grads)) {
            write_checkpoint(t);
            throw DivergenceDetected("non-finite loss at iteration " + std::to_string(t));
        }

        field->optimizer_step(adam);
        bg_normal.step();

        json line;
        line["iter"] = t;
        line["stage"] = grid.level == 0 ? "coarse" : "fine";
        line["total"] = report.total;
        for (const auto& [name, value] : report.terms) line[name] = value;
        line["lambda_norm"] = lam_norm;
        line["sds_t"] = sds_t;
        line["sds_w"] = sds_w;
        line["sds_grad_mean"] = sds_mag;
        line["n_faces"] = mt.mesh.face_count();
        log_line(log, line);

        if (config.geometry.checkpoint_every > 0 && (t + 1) % config.geometry.checkpoint_every == 0)
            write_checkpoint(t + 1);
    }

    // Final extraction from the optimized field.
    const auto sdf = field->forward(grid.vertices);
    mt = marching_tet(grid, sdf);
    save_mesh(mt.mesh, (fs::path(out_dir) / "meshes" / "geometry.obj").string());
    write_checkpoint(total_iters);

    GeometryStageResult result;
    result.mesh = mt.mesh;
    result.grid = grid;
    result.field = field;
    return result;
}

TextureStageResult run_texture_stage(const SceneInput& scene, const TriMesh& mesh_in,
                                     const std::optional<TriMesh>& mesh_canonical,
                                     const PipelineConfig& config, ScoreProvider& provider,
                                     const std::string& out_dir) {
    scene.validate();
    if (mesh_in.faces.empty()) throw EmptyMesh("texture stage needs a nonempty mesh");
    if (mesh_canonical && mesh_canonical->vertices.size() != mesh_in.vertices.size())
        throw CorrespondenceMismatch("canonical mesh vertex count differs from input mesh");
    set_thread_count(config.threads);
    fs::create_directories(fs::path(out_dir) / "checkpoints");
    fs::create_directories(fs::path(out_dir) / "renders");
    save_config(config, (fs::path(out_dir) / "config.json").string());

    Rng master(config.seed);
    Rng rng_net = master.fork(11);
    Rng rng_camera = master.fork(12);
    Rng rng_sds = master.fork(13);

    auto field = std::make_shared<FieldNet>(config.color_encoding, config.color_mlp,
                                            rng_net.next_u64());
    AdamState adam;
    adam.learning_rate = config.texture.learning_rate;
    adam.weight_decay = config.texture.weight_decay;
    adam.init(field->param_count());
    BgParam bg_albedo(Vec3(0, 0, 0), config.texture.learning_rate);

    NoiseSchedule schedule = config.guidance.make_schedule();
    RasterOptions ropts;
    ropts.sigma_px = config.render.sigma_px;

    // Input-view geometry is fixed: rasterize once.
    const RenderBuffers input_buf = rasterize(mesh_in, scene.input_camera, ropts);

    // Occlusion-aware mask: covered pixels whose surface point passes the
    // input-camera depth test.
    std::vector<Vec3> surface_points;
    std::vector<size_t> surface_pixels;
    for (int y = 0; y < input_buf.height; ++y)
        for (int x = 0; x < input_buf.width; ++x) {
            if (input_buf.face_at(y, x) < 0) continue;
            surface_points.emplace_back(input_buf.position.at(y, x, 0),
                                        input_buf.position.at(y, x, 1),
                                        input_buf.position.at(y, x, 2));
            surface_pixels.push_back(static_cast<size_t>(y) * input_buf.width + x);
        }
    const auto visible = visibility_mask(mesh_in, scene.input_camera, surface_points);
    Image occ_mask(input_buf.height, input_buf.width, 1, 0.0);
    for (size_t i = 0; i < surface_pixels.size(); ++i)
        occ_mask.data[surface_pixels[i]] = visible[i] ? 1.0 : 0.0;

    const std::vector<Vec3>* canon_verts =
        mesh_canonical ? &mesh_canonical->vertices : nullptr;

    // Foreground color distribution of the input image (for L_CD).
    std::vector<Vec3> input_fg_colors;
    for (size_t p = 0; p < scene.foreground_mask.pixel_count(); ++p)
        if (scene.foreground_mask.data[p] >= 0.5)
            input_fg_colors.emplace_back(scene.input_image.data[3 * p + 0],
                                         scene.input_image.data[3 * p + 1],
                                         scene.input_image.data[3 * p + 2]);

    std::ofstream log((fs::path(out_dir) / "log.jsonl").string(), std::ios::trunc);

    const int t_texture = config.texture.t_texture;
    const int t_cd = std::min(config.texture.t_cd, t_texture);
    const LossWeights& w = config.weights;

    for (int t = 0; t < t_texture; ++t) {
        LossReport report;
        ropts.background_albedo = bg_albedo.vec();

        // Novel-view SDS pass (canonical mesh with probability p_pose).
        const bool pick_canon = rng_camera.uniform() < config.texture.p_pose;
        const bool use_canon = pick_canon && mesh_canonical.has_value();
        const TriMesh& render_mesh = use_canon ? *mesh_canonical : mesh_in;
        const SampledCamera sampled = sample_camera(config.sampler, rng_camera);
        const RenderBuffers buf = rasterize(render_mesh, sampled.camera, ropts);
        AlbedoRender ar = query_albedo(*field, buf, render_mesh,
                                       use_canon ? nullptr : canon_verts);
        const PromptCondition cond = compose_prompt(scene.attributes, config.identifier,
                                                    sampled.camera, false, sampled.is_face);
        const SdsResult sds = sds_gradient(ar.albedo, cond, provider, schedule, rng_sds,
                                           config.guidance.t_min, config.guidance.t_max, t);
        Image upstream = sds.gradient;
        for (auto& v : upstream.data) v *= w.lambda_sds;

        double cd_value = 0.0;
        double saturation = 0.0;
        if (!ar.covered_pixels.empty()) {
            for (int p : ar.covered_pixels) {
                const double r = ar.albedo.data[3 * p + 0];
                const double g = ar.albedo.data[3 * p + 1];
                const double b = ar.albedo.data[3 * p + 2];
                const double hi = std::max({r, g, b});
                const double lo = std::min({r, g, b});
                saturation += hi > 1e-9 ? (hi - lo) / hi : 0.0;
            }
            saturation /= static_cast<double>(ar.covered_pixels.size());
        }

        const bool cd_phase = (t >= t_texture - t_cd) && w.lambda_cd > 0.0;
        if (cd_phase && !ar.covered_pixels.empty() && !input_fg_colors.empty()) {
            std::vector<Vec3> render_colors;
            render_colors.reserve(ar.covered_pixels.size());
            for (int p : ar.covered_pixels)
                render_colors.emplace_back(ar.albedo.data[3 * p + 0], ar.albedo.data[3 * p + 1],
                                           ar.albedo.data[3 * p + 2]);
            const auto cd = chamfer_rgb_loss(render_colors, input_fg_colors);
            cd_value = cd.value;
            report.add("cd", cd.value, w.lambda_cd);
            for (size_t i = 0; i < ar.covered_pixels.size(); ++i)
                for (int c = 0; c < 3; ++c)
                    upstream.data[3 * ar.covered_pixels[i] + c] +=
                        w.lambda_cd * cd.d_render[i][c];
        }
        bg_albedo.accumulate(albedo_backward(*field, ar, upstream));

        // Input-view occlusion-aware reconstruction (every iteration).
        AlbedoRender ar_in = query_albedo(*field, input_buf, mesh_in, canon_verts);
        const auto recon =
            occlusion_recon_loss(ar_in.albedo, scene.input_image, occ_mask, w.lambda_mse);
        report.add("recon", recon.value, w.lambda_recon);
        Image upstream_in = recon.grad;
        for (auto& v : upstream_in.data) v *= w.lambda_recon;
        bg_albedo.accumulate(albedo_backward(*field, ar_in, upstream_in));

        if (!std::isfinite(report.total)) {
            field->save((fs::path(out_dir) / "checkpoints" / "color_field.bin").string());
            throw DivergenceDetected("non-finite texture loss at iteration " + std::to_string(t));
        }

        field->optimizer_step(adam);
        bg_albedo.step();

        json line;
        line["iter"] = t;
        line["total"] = report.total;
        for (const auto& [name, value] : report.terms) line[name] = value;
        line["cd"] = cd_value;
        line["saturation"] = saturation;
        line["sds_t"] = sds.t;
        line["canon"] = use_canon;
        log_line(log, line);
    }

    field->save((fs::path(out_dir) / "checkpoints" / "color_field.bin").string());

    // Final input-view rendering and PSNR.
    ropts.background_albedo = bg_albedo.vec();
    const RenderBuffers final_buf = rasterize(mesh_in, scene.input_camera, ropts);
    AlbedoRender final_render = query_albedo(*field, final_buf, mesh_in, canon_verts);
    save_image_raw(final_render.albedo,
                   (fs::path(out_dir) / "renders" / "input_view.imgf").string());
    save_image_png(final_render.albedo,
                   (fs::path(out_dir) / "renders" / "input_view.png").string());

    TextureStageResult result;
    result.field = field;
    result.background_albedo = bg_albedo.vec();
    result.input_view_psnr = psnr(final_render.albedo, scene.input_image);
    return result;
}

} // namespace tetrec
