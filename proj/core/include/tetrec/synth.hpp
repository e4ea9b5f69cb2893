#pragma once

#include "tetrec/pipeline.hpp"

#include <string>

namespace tetrec {

enum class SynthShape { Sphere, Capsule, SphereBump };
enum class SynthTexture { Stripes, Checker, Gray };

SynthShape parse_shape(const std::string& name);
SynthTexture parse_texture(const std::string& name);

double analytic_sdf(SynthShape shape, const Vec3& p);
Vec3 analytic_color(SynthTexture texture, const Vec3& p);

struct SynthSceneResult {
    SceneInput scene;
    TriMesh ground_truth;
    std::string directory;
};

/// Generates a complete synthetic scene: ground-truth mesh from the analytic
/// SDF, input-view image/mask, front and back normal maps, attribute JSON and
/// scene manifest, all written under out_dir.
SynthSceneResult synth_scene(SynthShape shape, SynthTexture texture, const std::string& out_dir,
                             int grid_resolution = 64, int image_size = 128);

} // namespace tetrec
