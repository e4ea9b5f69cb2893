#pragma once

#include "tetrec/mesh.hpp"
#include "tetrec/mesh_query.hpp"
#include "tetrec/rng.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace tetrec {

/// Multiresolution hash encoding layout (one feature table per level).
/// Levels whose dense corner count fits in table_size are indexed densely
/// and collision-free; finer levels use the fixed spatial hash
/// (i XOR j*2654435761 XOR k*805459861) masked to the table size.
struct HashEncodingConfig {
    int levels = 16;
    int min_resolution = 16;
    int max_resolution = 1024;
    int table_size = 1 << 19; // entries per level, power of two
    int features_per_entry = 2;

    void validate() const;
    /// Per-axis grid resolution of each level (geometric growth).
    std::vector<int> level_resolutions() const;
};

enum class Activation { Identity, ReLU, Softplus, Sigmoid };

struct MlpConfig {
    int hidden_dim = 32;
    int hidden_layers = 2;
    int output_dim = 1;
    Activation hidden_activation = Activation::Softplus;
    Activation output_activation = Activation::Identity;
};

/// First/second moment state for Adam with decoupled weight decay.
/// Gradients are zeroed by the step.
struct AdamState {
    int64_t step = 0;
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<double> m, v;

    void init(size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
};

void adam_step(std::vector<double>& params, std::vector<double>& grads, AdamState& state);

/// Hash-encoded field: encoding tables feeding a small MLP.
///
/// Parameters are held in one flat f64 vector but materialized at f32
/// precision after every optimizer step, so the f32 checkpoint payload is
/// lossless and resumed runs replay bit-exactly. All math runs in f64.
class FieldNet {
public:
    FieldNet(const HashEncodingConfig& encoding, const MlpConfig& mlp, uint64_t seed);

    const HashEncodingConfig& encoding() const { return encoding_; }
    const MlpConfig& mlp() const { return mlp_; }
    int output_dim() const { return mlp_.output_dim; }
    int feature_dim() const { return encoding_.levels * encoding_.features_per_entry; }
    size_t param_count() const { return params_.size(); }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& grads() { return grads_; }
    void zero_grads();

    /// Revision changes whenever parameters change; caches are tagged with it.
    uint64_t revision() const { return revision_; }

    struct ForwardCache {
        uint64_t revision = 0;
        std::vector<Vec3> points;              // clamped inputs
        std::vector<double> features;          // n x feature_dim
        std::vector<std::vector<double>> hidden; // post-activation, n x hidden_dim
        std::vector<double> outputs;           // n x output_dim
        int64_t clamped = 0;
    };

    /// Evaluates the field; outputs are n x output_dim row major. Thread-safe.
    std::vector<double> forward(const std::vector<Vec3>& points,
                                ForwardCache* cache = nullptr) const;

    /// Accumulates parameter gradients (single-writer) and returns input
    /// gradients d(upstream . outputs)/d(points). `subset`, when given, lists
    /// the point indices with nonzero upstream rows. Throws StaleCache if the
    /// cache predates the current parameters.
    std::vector<Vec3> backward(const ForwardCache& cache, const std::vector<double>& upstream,
                               const std::vector<int>* subset = nullptr);

    /// Adam step over all parameters followed by f32 materialization.
    void optimizer_step(AdamState& state);

    /// f32 materialization of the current parameters (also called by
    /// optimizer_step). Bumps the revision.
    void quantize_params();

    void save(const std::string& path, bool f64_payload = false) const;
    static FieldNet load(const std::string& path);

    /// Raw encoding features (before the MLP); used by piecewise-linearity
    /// tests and diagnostics.
    std::vector<double> encode(const std::vector<Vec3>& points) const;

private:
    void forward_point(const Vec3& p, double* features, double* hidden_buf,
                       double* out, bool* clamped) const;

    HashEncodingConfig encoding_;
    MlpConfig mlp_;
    std::vector<int> level_res_;
    std::vector<size_t> level_offset_; // into params_, per level
    std::vector<size_t> level_entries_;
    std::vector<bool> level_dense_;
    size_t mlp_offset_ = 0;
    std::vector<size_t> layer_offset_; // W offsets; biases follow each W
    std::vector<int> layer_in_, layer_out_;

    std::vector<double> params_;
    std::vector<double> grads_;
    uint64_t revision_ = 1;
};

struct FitReport {
    std::vector<double> loss_history; // per-iteration batch MSE
    double final_rms = 0.0;           // RMS over the full sample set
};

struct FitOptions {
    int batch_size = 4096;
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
};

/// Fits the field to signed-distance samples with Adam (batch MSE objective).
/// Deterministic for a fixed seed. Throws PreconditionError on empty samples.
FitReport fit_to_sdf(FieldNet& net, const std::vector<SignedDistanceSample>& samples,
                     int iters, uint64_t rng_seed, const FitOptions& options = {});

} // namespace tetrec
