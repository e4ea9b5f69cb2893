#include "tetrec/errors.hpp"
#include "tetrec/mesh_io.hpp"
#include "tetrec/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace tetrec {

using nlohmann::json;
namespace fs = std::filesystem;

void SceneInput::validate() const {
    if (input_image.channels != 3) throw DimensionMismatch("input image must be RGB");
    if (!foreground_mask.size() || foreground_mask.channels != 1)
        throw DimensionMismatch("foreground mask must be H x W x 1");
    if (foreground_mask.height != input_image.height ||
        foreground_mask.width != input_image.width)
        throw DimensionMismatch("image/mask dimensions disagree");
    for (const Image* n : {&normal_front, &normal_back}) {
        if (n->channels != 3 || n->height != input_image.height || n->width != input_image.width)
            throw DimensionMismatch("normal map dimensions disagree with the image");
    }
    if (body.faces.empty()) throw EmptyMesh("scene template body mesh is empty");
    if (canonical_mesh && canonical_mesh->vertices.size() != 0 &&
        canonical_mesh->faces.empty())
        throw EmptyMesh("canonical mesh has no faces");
}

NoiseSchedule GuidanceConfig::make_schedule() const {
    NoiseSchedule s;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.num_steps = num_steps;
    s.weight_mode = weight_mode;
    s.init();
    return s;
}

PipelineConfig desk_scale_config() {
    PipelineConfig c;
    c.geometry_encoding.levels = 16;
    c.geometry_encoding.min_resolution = 16;
    c.geometry_encoding.max_resolution = 1024;
    c.geometry_encoding.table_size = 1 << 15;
    c.geometry_encoding.features_per_entry = 2;
    c.geometry_mlp.hidden_dim = 32;
    c.geometry_mlp.hidden_layers = 2;
    c.geometry_mlp.output_dim = 1;
    c.geometry_mlp.hidden_activation = Activation::Softplus;
    c.geometry_mlp.output_activation = Activation::Identity;

    c.color_encoding = c.geometry_encoding;
    c.color_encoding.max_resolution = 2048;
    c.color_mlp = c.geometry_mlp;
    c.color_mlp.hidden_layers = 1;
    c.color_mlp.output_dim = 3;
    c.color_mlp.output_activation = Activation::Sigmoid;

    c.sampler.width = c.render.width;
    c.sampler.height = c.render.height;
    c.sampler.fov_deg = c.render.fov_deg;
    return c;
}

void apply_paper_scale(PipelineConfig& c) {
    c.geometry.t_coarse = 5000;
    c.geometry.t_fine = 5000;
    c.texture.t_texture = 7000;
    c.texture.t_cd = 2000;
    // BCC tet volume h^3/12 <= 5e-8 requires h <= 8.4e-3, i.e. >= 119 cells
    // per unit; 128 rounds up to the next power of two.
    c.grid_resolution = 128;
    c.render.width = c.render.height = 512;
    c.geometry_encoding.table_size = 1 << 19;
    c.color_encoding.table_size = 1 << 19;
    c.sampler.width = c.render.width;
    c.sampler.height = c.render.height;
    c.sampler.fov_deg = c.render.fov_deg;
}

namespace {

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::ReLU;
    if (s == "softplus") return Activation::Softplus;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw ParseError("unknown activation: " + s);
}

std::string activation_to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::ReLU: return "relu";
        case Activation::Softplus: return "softplus";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "identity";
}

json encoding_to_json(const HashEncodingConfig& e) {
    return json{{"levels", e.levels},
                {"min_resolution", e.min_resolution},
                {"max_resolution", e.max_resolution},
                {"table_size", e.table_size},
                {"features_per_entry", e.features_per_entry}};
}

void encoding_from_json(const json& j, HashEncodingConfig& e) {
    e.levels = j.value("levels", e.levels);
    e.min_resolution = j.value("min_resolution", e.min_resolution);
    e.max_resolution = j.value("max_resolution", e.max_resolution);
    e.table_size = j.value("table_size", e.table_size);
    e.features_per_entry = j.value("features_per_entry", e.features_per_entry);
}

json mlp_to_json(const MlpConfig& m) {
    return json{{"hidden_dim", m.hidden_dim},
                {"hidden_layers", m.hidden_layers},
                {"output_dim", m.output_dim},
                {"hidden_activation", activation_to_string(m.hidden_activation)},
                {"output_activation", activation_to_string(m.output_activation)}};
}

void mlp_from_json(const json& j, MlpConfig& m) {
    m.hidden_dim = j.value("hidden_dim", m.hidden_dim);
    m.hidden_layers = j.value("hidden_layers", m.hidden_layers);
    m.output_dim = j.value("output_dim", m.output_dim);
    if (j.contains("hidden_activation"))
        m.hidden_activation = activation_from_string(j["hidden_activation"]);
    if (j.contains("output_activation"))
        m.output_activation = activation_from_string(j["output_activation"]);
}

} // namespace

std::string config_to_json(const PipelineConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["render"] = {{"width", c.render.width},
                   {"height", c.render.height},
                   {"sigma_px", c.render.sigma_px},
                   {"fov_deg", c.render.fov_deg}};
    j["grid"] = {{"resolution", c.grid_resolution},
                 {"shell_offset", c.shell_offset},
                 {"shell_decimate", c.shell_decimate},
                 {"max_subdivisions", c.max_subdivisions}};
    j["identifier"] = c.identifier;
    j["geometry"] = {{"t_coarse", c.geometry.t_coarse},
                     {"t_fine", c.geometry.t_fine},
                     {"learning_rate", c.geometry.learning_rate},
                     {"weight_decay", c.geometry.weight_decay},
                     {"init_iters", c.geometry.init_iters},
                     {"init_samples", c.geometry.init_samples},
                     {"checkpoint_every", c.geometry.checkpoint_every}};
    j["texture"] = {{"t_texture", c.texture.t_texture},
                    {"t_cd", c.texture.t_cd},
                    {"learning_rate", c.texture.learning_rate},
                    {"weight_decay", c.texture.weight_decay},
                    {"p_pose", c.texture.p_pose}};
    j["weights"] = {{"lambda_sil", c.weights.lambda_sil},
                    {"lambda_sds", c.weights.lambda_sds},
                    {"lambda_norm_base", c.weights.lambda_norm_base},
                    {"lambda_lap", c.weights.lambda_lap},
                    {"lambda_recon", c.weights.lambda_recon},
                    {"lambda_cd", c.weights.lambda_cd},
                    {"lambda_mse", c.weights.lambda_mse}};
    j["sampler"] = {{"p_body", c.sampler.p_body},
                    {"h_body", c.sampler.h_body},
                    {"r_body", c.sampler.r_body},
                    {"theta_body_deg", c.sampler.theta_body_deg},
                    {"phi_body_deg", c.sampler.phi_body_deg},
                    {"face_target",
                     {c.sampler.face_target.x(), c.sampler.face_target.y(),
                      c.sampler.face_target.z()}},
                    {"r_face", c.sampler.r_face},
                    {"theta_face_deg", c.sampler.theta_face_deg}};
    j["guidance"] = {{"t_min", c.guidance.t_min},
                     {"t_max", c.guidance.t_max},
                     {"beta_start", c.guidance.beta_start},
                     {"beta_end", c.guidance.beta_end},
                     {"num_steps", c.guidance.num_steps},
                     {"weight_mode",
                      c.guidance.weight_mode == NoiseSchedule::WeightMode::Constant
                          ? "constant"
                          : "one_minus_alpha_bar"}};
    j["fields"] = {{"geometry",
                    {{"encoding", encoding_to_json(c.geometry_encoding)},
                     {"mlp", mlp_to_json(c.geometry_mlp)}}},
                   {"color",
                    {{"encoding", encoding_to_json(c.color_encoding)},
                     {"mlp", mlp_to_json(c.color_mlp)}}}};
    j["score_provider"] = c.score_provider;
    j["recorded_scores_path"] = c.recorded_scores_path;
    return j.dump(2);
}

PipelineConfig config_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("config is not valid JSON");
    PipelineConfig c = desk_scale_config();
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("render")) {
        const auto& r = j["render"];
        c.render.width = r.value("width", c.render.width);
        c.render.height = r.value("height", c.render.height);
        c.render.sigma_px = r.value("sigma_px", c.render.sigma_px);
        c.render.fov_deg = r.value("fov_deg", c.render.fov_deg);
    }
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        c.grid_resolution = g.value("resolution", c.grid_resolution);
        c.shell_offset = g.value("shell_offset", c.shell_offset);
        c.shell_decimate = g.value("shell_decimate", c.shell_decimate);
        c.max_subdivisions = g.value("max_subdivisions", c.max_subdivisions);
    }
    c.identifier = j.value("identifier", c.identifier);
    if (j.contains("geometry")) {
        const auto& g = j["geometry"];
        c.geometry.t_coarse = g.value("t_coarse", c.geometry.t_coarse);
        c.geometry.t_fine = g.value("t_fine", c.geometry.t_fine);
        c.geometry.learning_rate = g.value("learning_rate", c.geometry.learning_rate);
        c.geometry.weight_decay = g.value("weight_decay", c.geometry.weight_decay);
        c.geometry.init_iters = g.value("init_iters", c.geometry.init_iters);
        c.geometry.init_samples = g.value("init_samples", c.geometry.init_samples);
        c.geometry.checkpoint_every = g.value("checkpoint_every", c.geometry.checkpoint_every);
    }
    if (j.contains("texture")) {
        const auto& t = j["texture"];
        c.texture.t_texture = t.value("t_texture", c.texture.t_texture);
        c.texture.t_cd = t.value("t_cd", c.texture.t_cd);
        c.texture.learning_rate = t.value("learning_rate", c.texture.learning_rate);
        c.texture.weight_decay = t.value("weight_decay", c.texture.weight_decay);
        c.texture.p_pose = t.value("p_pose", c.texture.p_pose);
    }
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        c.weights.lambda_sil = w.value("lambda_sil", c.weights.lambda_sil);
        c.weights.lambda_sds = w.value("lambda_sds", c.weights.lambda_sds);
        c.weights.lambda_norm_base = w.value("lambda_norm_base", c.weights.lambda_norm_base);
        c.weights.lambda_lap = w.value("lambda_lap", c.weights.lambda_lap);
        c.weights.lambda_recon = w.value("lambda_recon", c.weights.lambda_recon);
        c.weights.lambda_cd = w.value("lambda_cd", c.weights.lambda_cd);
        c.weights.lambda_mse = w.value("lambda_mse", c.weights.lambda_mse);
    }
    if (j.contains("sampler")) {
        const auto& s = j["sampler"];
        c.sampler.p_body = s.value("p_body", c.sampler.p_body);
        if (s.contains("h_body")) c.sampler.h_body = s["h_body"].get<std::array<double, 2>>();
        if (s.contains("r_body")) c.sampler.r_body = s["r_body"].get<std::array<double, 2>>();
        if (s.contains("theta_body_deg"))
            c.sampler.theta_body_deg = s["theta_body_deg"].get<std::array<double, 2>>();
        if (s.contains("phi_body_deg"))
            c.sampler.phi_body_deg = s["phi_body_deg"].get<std::vector<double>>();
        if (s.contains("face_target")) {
            const auto v = s["face_target"].get<std::vector<double>>();
            if (v.size() != 3) throw ParseError("face_target must have 3 entries");
            c.sampler.face_target = Vec3(v[0], v[1], v[2]);
        }
        if (s.contains("r_face")) c.sampler.r_face = s["r_face"].get<std::array<double, 2>>();
        if (s.contains("theta_face_deg"))
            c.sampler.theta_face_deg = s["theta_face_deg"].get<std::array<double, 2>>();
    }
    if (j.contains("guidance")) {
        const auto& g = j["guidance"];
        c.guidance.t_min = g.value("t_min", c.guidance.t_min);
        c.guidance.t_max = g.value("t_max", c.guidance.t_max);
        c.guidance.beta_start = g.value("beta_start", c.guidance.beta_start);
        c.guidance.beta_end = g.value("beta_end", c.guidance.beta_end);
        c.guidance.num_steps = g.value("num_steps", c.guidance.num_steps);
        const std::string mode = g.value("weight_mode", std::string("constant"));
        c.guidance.weight_mode = mode == "constant"
                                     ? NoiseSchedule::WeightMode::Constant
                                     : NoiseSchedule::WeightMode::OneMinusAlphaBar;
    }
    if (j.contains("fields")) {
        const auto& f = j["fields"];
        if (f.contains("geometry")) {
            encoding_from_json(f["geometry"].value("encoding", json::object()),
                               c.geometry_encoding);
            mlp_from_json(f["geometry"].value("mlp", json::object()), c.geometry_mlp);
        }
        if (f.contains("color")) {
            encoding_from_json(f["color"].value("encoding", json::object()), c.color_encoding);
            mlp_from_json(f["color"].value("mlp", json::object()), c.color_mlp);
        }
    }
    c.score_provider = j.value("score_provider", c.score_provider);
    c.recorded_scores_path = j.value("recorded_scores_path", c.recorded_scores_path);

    // keep the sampler's image settings in lockstep with the renderer
    c.sampler.width = c.render.width;
    c.sampler.height = c.render.height;
    c.sampler.fov_deg = c.render.fov_deg;

    c.weights.validate();
    c.sampler.validate();
    c.geometry_encoding.validate();
    c.color_encoding.validate();
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

void save_config(const PipelineConfig& config, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open config for writing: " + path);
    out << config_to_json(config) << "\n";
}

SceneInput load_scene(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream in(root / "scene.json");
    if (!in) throw IoError("cannot open scene manifest: " + (root / "scene.json").string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("scene.json is not valid JSON");

    SceneInput scene;
    auto path_of = [&](const char* key) { return (root / j.at(key).get<std::string>()).string(); };
    scene.input_image = load_image_raw(path_of("image"));
    scene.foreground_mask = load_image_raw(path_of("mask"));
    scene.normal_front = load_image_raw(path_of("normal_front"));
    scene.normal_back = load_image_raw(path_of("normal_back"));
    if (j.contains("back_mask")) {
        scene.back_mask = load_image_raw(path_of("back_mask"));
    } else {
        // fall back to the horizontally mirrored front mask
        scene.back_mask = scene.foreground_mask;
        for (int y = 0; y < scene.back_mask.height; ++y)
            for (int x = 0; x < scene.back_mask.width; ++x)
                scene.back_mask.at(y, x, 0) =
                    scene.foreground_mask.at(y, scene.foreground_mask.width - 1 - x, 0);
    }
    scene.body = load_mesh(path_of("body"));
    if (j.contains("canonical") && !j["canonical"].is_null())
        scene.canonical_mesh = load_mesh(path_of("canonical"));
    if (j.contains("head_keypoint")) {
        const auto v = j["head_keypoint"].get<std::vector<double>>();
        if (v.size() != 3) throw ParseError("head_keypoint must have 3 entries");
        scene.head_keypoint = Vec3(v[0], v[1], v[2]);
    }
    if (j.contains("attributes")) {
        std::ifstream ain(root / j["attributes"].get<std::string>());
        if (!ain) throw IoError("cannot open attributes JSON");
        json a = json::parse(ain, nullptr, false);
        if (a.is_discarded()) throw ParseError("attributes file is not valid JSON");
        scene.attributes.gender = a.value("gender", std::string());
        if (a.contains("garments"))
            scene.attributes.garments = a["garments"].get<std::vector<std::string>>();
        scene.attributes.hair = a.value("hair", std::string());
        scene.attributes.face = a.value("face", std::string());
        scene.attributes.facial_hair = a.value("facial_hair", std::string());
    }
    if (j.contains("camera")) {
        const auto& c = j["camera"];
        auto vec = [&](const char* key, const Vec3& fallback) {
            if (!c.contains(key)) return fallback;
            const auto v = c[key].get<std::vector<double>>();
            return v.size() == 3 ? Vec3(v[0], v[1], v[2]) : fallback;
        };
        scene.input_camera.eye = vec("eye", Vec3(0, 0, 1));
        scene.input_camera.target = vec("target", Vec3(0, 0, 0));
        scene.input_camera.up = vec("up", Vec3(0, 1, 0));
        scene.input_camera.vertical_fov =
            c.value("fov_deg", 45.0) * M_PI / 180.0;
        scene.input_camera.width = c.value("width", scene.input_image.width);
        scene.input_camera.height = c.value("height", scene.input_image.height);
    } else {
        scene.input_camera.width = scene.input_image.width;
        scene.input_camera.height = scene.input_image.height;
    }
    scene.validate();
    return scene;
}

} // namespace tetrec
