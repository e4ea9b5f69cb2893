#pragma once

#include "tetrec/camera_sampler.hpp"
#include "tetrec/field.hpp"
#include "tetrec/guidance.hpp"
#include "tetrec/image.hpp"
#include "tetrec/losses.hpp"
#include "tetrec/mesh.hpp"
#include "tetrec/metrics.hpp"
#include "tetrec/tet_grid.hpp"

#include <memory>
#include <optional>
#include <string>

namespace tetrec {

/// All inputs of one reconstruction problem. Normal maps are supplied as
/// files (camera space, unit where masked); no estimation happens here.
struct SceneInput {
    Image input_image;     // H x W x 3 RGB in [0,1]
    Image foreground_mask; // H x W x 1 binary
    Image normal_front;    // H x W x 3
    Image normal_back;     // H x W x 3
    Image back_mask;       // H x W x 1 (auxiliary; derived if absent)
    TriMesh body;          // template body mesh (any watertight mesh)
    std::optional<TriMesh> canonical_mesh; // 1:1 vertex correspondence with the
                                           // texture-stage input mesh
    AttributeSet attributes;
    Vec3 head_keypoint = Vec3(0, 0.25, 0);
    Camera input_camera;

    void validate() const;
};

SceneInput load_scene(const std::string& dir);

struct RenderSettings {
    int width = 128;
    int height = 128;
    double sigma_px = 1.0;
    double fov_deg = 45.0;
};

struct GeometryStageConfig {
    int t_coarse = 500;
    int t_fine = 500;
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    int init_iters = 1500;    // L_init fitting
    int init_samples = 20000; // band + uniform shell samples
    int checkpoint_every = 0; // 0 = final checkpoint only
};

struct TextureStageConfig {
    int t_texture = 700;
    int t_cd = 200; // chamfer-color phase at the tail of t_texture
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    double p_pose = 0.5; // probability of rendering the canonical mesh
};

struct GuidanceConfig {
    double t_min = 0.02;
    double t_max = 0.98;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int num_steps = 1000;
    NoiseSchedule::WeightMode weight_mode = NoiseSchedule::WeightMode::Constant;

    NoiseSchedule make_schedule() const;
};

/// Full run configuration (serialized as JSON; see config.cpp for the
/// schema). Desk-scale defaults; --paper-scale switches to the full values.
struct PipelineConfig {
    uint64_t seed = 1234;
    int threads = 8;
    RenderSettings render;
    int grid_resolution = 32;
    double shell_offset = 0.1;     // body dilation
    double shell_decimate = 0.9;   // face reduction fraction
    int max_subdivisions = 1;
    std::string identifier = "[V]";

    GeometryStageConfig geometry;
    TextureStageConfig texture;
    LossWeights weights;
    SamplerConfig sampler;
    GuidanceConfig guidance;

    HashEncodingConfig geometry_encoding;
    MlpConfig geometry_mlp;
    HashEncodingConfig color_encoding;
    MlpConfig color_mlp;

    std::string score_provider = "null"; // null | gaussian | recorded
    std::string recorded_scores_path;
};

PipelineConfig desk_scale_config();
void apply_paper_scale(PipelineConfig& config);
PipelineConfig load_config(const std::string& path);
void save_config(const PipelineConfig& config, const std::string& path);
std::string config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const std::string& text);

/// Builds the outer shell (dilate + decimate) and its clipped BCC grid.
struct ShellResult {
    TriMesh shell;
    TetGrid grid;
};
ShellResult build_shell(const TriMesh& body, const PipelineConfig& config);

struct GeometryStageResult {
    TriMesh mesh;
    TetGrid grid;
    std::shared_ptr<FieldNet> field;
    double final_loss = 0.0;
};

/// Two-phase geometry optimization (coarse grid, then one red-green
/// subdivision). Writes log.jsonl / checkpoints / meshes under out_dir.
/// Throws DivergenceDetected on NaN (after writing a checkpoint).
/// `resume_from` points at a checkpoint directory to continue from.
GeometryStageResult run_geometry_stage(const SceneInput& scene, const PipelineConfig& config,
                                       ScoreProvider& provider, const std::string& out_dir,
                                       const std::string& resume_from = "");

struct TextureStageResult {
    std::shared_ptr<FieldNet> field;
    Vec3 background_albedo = Vec3::Zero();
    double input_view_psnr = 0.0;
};

TextureStageResult run_texture_stage(const SceneInput& scene, const TriMesh& mesh_in,
                                     const std::optional<TriMesh>& mesh_canonical,
                                     const PipelineConfig& config, ScoreProvider& provider,
                                     const std::string& out_dir);

std::shared_ptr<ScoreProvider> make_score_provider(const PipelineConfig& config,
                                                   const SceneInput* scene);

} // namespace tetrec
