#pragma once

#include "tetrec/camera.hpp"
#include "tetrec/image.hpp"
#include "tetrec/rng.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tetrec {

/// Pre-answered visual attributes (gender, garments, hair, face), matching
/// the attribute JSON consumed by compose-prompt.
struct AttributeSet {
    std::string gender; // required: class word of the subject
    std::vector<std::string> garments;
    std::string hair;
    std::string face;
    std::string facial_hair;
};

struct PromptCondition {
    std::string text;     // fully composed prompt
    std::string view_tag; // front | side | back | overhead
    bool face_zoom = false;
    bool normal_mode = false;
};

/// View tag from camera bookkeeping angles: front |az| < 45 deg, side
/// 45..135, back otherwise; elevation > 60 deg overrides to overhead.
std::string classify_view(const Camera& camera);

/// Deterministic template fill:
///   "a {view} view of {token} {gender} wearing {garments}, {hair} hair, ..."
/// Face cameras prepend "face of "; normal mode prepends
/// "a detailed sculpture of " (outermost). Consecutive duplicate words
/// collapse. Throws MissingGender when the gender attribute is absent.
PromptCondition compose_prompt(const AttributeSet& attributes, const std::string& identifier,
                               const Camera& camera, bool normal_mode, bool face_zoom = false);

/// DDPM-style linear-beta schedule over continuous t in (0, 1).
struct NoiseSchedule {
    enum class WeightMode { Constant, OneMinusAlphaBar };

    double beta_start = 1e-4;
    double beta_end = 0.02;
    int num_steps = 1000;
    WeightMode weight_mode = WeightMode::Constant;

    void init(); // precomputes alpha_bar
    double alpha_bar_at(double t) const;
    double weight_at(double t) const;
    bool initialized() const { return !alpha_bar_.empty(); }

private:
    std::vector<double> alpha_bar_;
};

/// Context handed to providers alongside (z_t, condition, t). Closed-loop
/// providers may use the clean image or the exact sampled noise; real
/// providers ignore it.
struct SdsContext {
    const Image* clean = nullptr;
    const Image* noise = nullptr;
    double alpha_bar = 1.0;
    uint64_t noise_seed = 0;
    int64_t step = 0;
};

/// Noise-prediction contract: given a noised image, a condition and a
/// timestep, return predicted noise of the same shape.
class ScoreProvider {
public:
    virtual ~ScoreProvider() = default;
    virtual Image predict_noise(const Image& z_t, const PromptCondition& condition, double t,
                                const SdsContext& context) = 0;

    /// Replay providers may force the sampled (t, noise seed).
    virtual bool overrides_sampling() const { return false; }
    virtual void sample_override(double& /*t*/, uint64_t& /*noise_seed*/) {}
};

/// Zero guidance: predicts exactly the injected noise, so the SDS gradient
/// is identically zero.
class NullScore final : public ScoreProvider {
public:
    Image predict_noise(const Image& z_t, const PromptCondition&, double,
                        const SdsContext& context) override;
};

/// Gaussian score centered on a target image y:
///   eps_hat = (z_t - sqrt(alpha_bar) * y) / sqrt(1 - alpha_bar),
/// which drives SDS optimization of a free image toward y.
class AnalyticGaussianScore final : public ScoreProvider {
public:
    explicit AnalyticGaussianScore(Image target) : target_(std::move(target)) {}
    Image predict_noise(const Image& z_t, const PromptCondition&, double,
                        const SdsContext& context) override;

private:
    Image target_;
};

/// Replays a recorded (t, seed, eps_hat) stream from a JSONL file with raw
/// f32 tensor sidecars.
class RecordedScore final : public ScoreProvider {
public:
    explicit RecordedScore(const std::string& jsonl_path);
    Image predict_noise(const Image& z_t, const PromptCondition&, double,
                        const SdsContext& context) override;
    bool overrides_sampling() const override { return true; }
    void sample_override(double& t, uint64_t& noise_seed) override;
    size_t remaining() const { return records_.size() - cursor_; }

private:
    struct Record {
        int64_t step;
        double t;
        uint64_t seed;
        std::string eps_hat_path;
    };
    std::vector<Record> records_;
    size_t cursor_ = 0;
};

/// Wraps a provider and logs every call: JSONL lines
/// {step, t, seed, eps_hat_path} plus one raw f32 sidecar per step.
class ScoreRecorder final : public ScoreProvider {
public:
    ScoreRecorder(std::shared_ptr<ScoreProvider> inner, std::string directory);
    Image predict_noise(const Image& z_t, const PromptCondition& condition, double t,
                        const SdsContext& context) override;
    bool overrides_sampling() const override { return inner_->overrides_sampling(); }
    void sample_override(double& t, uint64_t& seed) override {
        inner_->sample_override(t, seed);
    }
    const std::string& log_path() const { return log_path_; }

private:
    std::shared_ptr<ScoreProvider> inner_;
    std::string directory_;
    std::string log_path_;
    int64_t step_ = 0;
};

struct SdsResult {
    Image gradient; // w_t * (eps_hat - eps), same shape as the rendered image
    double t = 0.0;
    double weight = 1.0;
};

/// Score distillation gradient for a rendered image in [0,1]. Samples
/// t ~ U(t_min, t_max) and eps ~ N(0,1) from rng (providers may override),
/// forms z_t = sqrt(ab) x + sqrt(1-ab) eps and returns w_t (eps_hat - eps).
/// Pixel-space providers only: the latent-encoder Jacobian is identity.
SdsResult sds_gradient(const Image& rendered, const PromptCondition& condition,
                       ScoreProvider& provider, const NoiseSchedule& schedule, Rng& rng,
                       double t_min = 0.02, double t_max = 0.98, int64_t step = 0);

/// Deterministic standard-normal image from a seed (the noise stream shared
/// by recording and replay).
Image noise_image_from_seed(int h, int w, int c, uint64_t seed);

} // namespace tetrec
