#include "tetrec/field.hpp"

#include "tetrec/errors.hpp"
#include "tetrec/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tetrec {

void HashEncodingConfig::validate() const {
    if (levels < 1) throw PreconditionError("levels must be >= 1");
    if (min_resolution < 1 || min_resolution >= max_resolution)
        throw PreconditionError("require 1 <= min_resolution < max_resolution");
    if (table_size < 8 || (table_size & (table_size - 1)) != 0)
        throw PreconditionError("table_size must be a power of two >= 8");
    if (features_per_entry < 1) throw PreconditionError("features_per_entry must be >= 1");
}

std::vector<int> HashEncodingConfig::level_resolutions() const {
    std::vector<int> res(levels);
    if (levels == 1) {
        res[0] = min_resolution;
        return res;
    }
    const double growth = std::exp((std::log(static_cast<double>(max_resolution)) -
                                    std::log(static_cast<double>(min_resolution))) /
                                   static_cast<double>(levels - 1));
    for (int l = 0; l < levels; ++l)
        res[l] = static_cast<int>(std::floor(min_resolution * std::pow(growth, l) + 0.5));
    return res;
}

namespace {

inline double apply_activation(Activation act, double z) {
    switch (act) {
        case Activation::Identity: return z;
        case Activation::ReLU: return z > 0.0 ? z : 0.0;
        case Activation::Softplus: return z > 30.0 ? z : std::log1p(std::exp(z));
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    }
    return z;
}

/// Derivative expressed through the post-activation value.
inline double activation_grad_from_output(Activation act, double h) {
    switch (act) {
        case Activation::Identity: return 1.0;
        case Activation::ReLU: return h > 0.0 ? 1.0 : 0.0;
        case Activation::Softplus: return 1.0 - std::exp(-h); // sigmoid(z)
        case Activation::Sigmoid: return h * (1.0 - h);
    }
    return 1.0;
}

inline uint32_t spatial_hash(uint32_t i, uint32_t j, uint32_t k) {
    return i ^ (j * 2654435761u) ^ (k * 805459861u);
}

} // namespace

void adam_step(std::vector<double>& params, std::vector<double>& grads, AdamState& state) {
    if (params.size() != grads.size())
        throw ShapeMismatch("params/grads size mismatch");
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        if (state.m.empty() && state.v.empty() && state.step == 0) state.init(params.size());
        else throw ShapeMismatch("adam moment buffers do not match parameter shape");
    }
    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = state.learning_rate;
    const double wd = state.weight_decay;
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / bias1;
        const double vhat = state.v[i] / bias2;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + state.epsilon) + wd * params[i]);
    }
    std::fill(grads.begin(), grads.end(), 0.0);
}

FieldNet::FieldNet(const HashEncodingConfig& encoding, const MlpConfig& mlp, uint64_t seed)
    : encoding_(encoding), mlp_(mlp) {
    encoding_.validate();
    if (mlp_.hidden_layers < 0 || mlp_.output_dim < 1 ||
        (mlp_.hidden_layers > 0 && mlp_.hidden_dim < 1))
        throw PreconditionError("bad MLP configuration");

    level_res_ = encoding_.level_resolutions();
    size_t offset = 0;
    for (int l = 0; l < encoding_.levels; ++l) {
        const size_t dense = static_cast<size_t>(level_res_[l] + 1) * (level_res_[l] + 1) *
                             (level_res_[l] + 1);
        const bool is_dense = dense <= static_cast<size_t>(encoding_.table_size);
        const size_t entries = is_dense ? dense : static_cast<size_t>(encoding_.table_size);
        level_dense_.push_back(is_dense);
        level_entries_.push_back(entries);
        level_offset_.push_back(offset);
        offset += entries * encoding_.features_per_entry;
    }
    mlp_offset_ = offset;

    const int in_dim = feature_dim();
    int prev = in_dim;
    for (int l = 0; l < mlp_.hidden_layers; ++l) {
        layer_in_.push_back(prev);
        layer_out_.push_back(mlp_.hidden_dim);
        layer_offset_.push_back(offset);
        offset += static_cast<size_t>(prev) * mlp_.hidden_dim + mlp_.hidden_dim;
        prev = mlp_.hidden_dim;
    }
    layer_in_.push_back(prev);
    layer_out_.push_back(mlp_.output_dim);
    layer_offset_.push_back(offset);
    offset += static_cast<size_t>(prev) * mlp_.output_dim + mlp_.output_dim;

    params_.assign(offset, 0.0);
    grads_.assign(offset, 0.0);

    Rng rng(seed);
    // Hash features start tiny (near-constant field); MLP weights use a
    // uniform Xavier-style range, biases zero.
    for (size_t i = 0; i < mlp_offset_; ++i) params_[i] = rng.uniform(-1e-4, 1e-4);
    for (size_t layer = 0; layer < layer_offset_.size(); ++layer) {
        const int fan_in = layer_in_[layer], fan_out = layer_out_[layer];
        const double scale = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        double* w = params_.data() + layer_offset_[layer];
        for (int i = 0; i < fan_in * fan_out; ++i) w[i] = rng.uniform(-scale, scale);
        // biases already zero
    }
    quantize_params();
}

void FieldNet::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void FieldNet::quantize_params() {
    for (auto& p : params_) p = static_cast<double>(static_cast<float>(p));
    ++revision_;
}

void FieldNet::forward_point(const Vec3& p, double* features, double* hidden_buf,
                             double* out, bool* clamped) const {
    const int F = encoding_.features_per_entry;
    double u[3];
    bool was_clamped = false;
    for (int k = 0; k < 3; ++k) {
        double v = p[k] + 0.5;
        if (v < 0.0 || v > 1.0) {
            v = std::clamp(v, 0.0, 1.0);
            was_clamped = true;
        }
        u[k] = v;
    }
    if (clamped) *clamped = was_clamped;

    const int fdim = feature_dim();
    std::fill(features, features + fdim, 0.0);
    for (int l = 0; l < encoding_.levels; ++l) {
        const int n = level_res_[l];
        double x[3];
        int i0[3];
        double f[3];
        for (int k = 0; k < 3; ++k) {
            x[k] = u[k] * n;
            i0[k] = std::min(static_cast<int>(x[k]), n - 1);
            f[k] = x[k] - i0[k];
        }
        const double* table = params_.data() + level_offset_[l];
        const bool dense = level_dense_[l];
        const size_t mask = level_entries_[l] - 1;
        const int stride = n + 1;
        for (int corner = 0; corner < 8; ++corner) {
            const int di = corner & 1, dj = (corner >> 1) & 1, dk = (corner >> 2) & 1;
            const double w = (di ? f[0] : 1.0 - f[0]) * (dj ? f[1] : 1.0 - f[1]) *
                             (dk ? f[2] : 1.0 - f[2]);
            if (w == 0.0) continue;
            const uint32_t ci = static_cast<uint32_t>(i0[0] + di);
            const uint32_t cj = static_cast<uint32_t>(i0[1] + dj);
            const uint32_t ck = static_cast<uint32_t>(i0[2] + dk);
            size_t idx;
            if (dense) idx = (static_cast<size_t>(ci) * stride + cj) * stride + ck;
            else idx = spatial_hash(ci, cj, ck) & mask;
            const double* entry = table + idx * F;
            for (int c = 0; c < F; ++c) features[l * F + c] += w * entry[c];
        }
    }

    // MLP
    const int n_layers = static_cast<int>(layer_offset_.size());
    const double* input = features;
    int in_dim = fdim;
    for (int layer = 0; layer < n_layers; ++layer) {
        const int out_dim = layer_out_[layer];
        const double* w = params_.data() + layer_offset_[layer];
        const double* b = w + static_cast<size_t>(in_dim) * out_dim;
        double* dst = (layer == n_layers - 1) ? out : hidden_buf + layer * mlp_.hidden_dim;
        const Activation act =
            (layer == n_layers - 1) ? mlp_.output_activation : mlp_.hidden_activation;
        for (int o = 0; o < out_dim; ++o) {
            double z = b[o];
            const double* row = w + static_cast<size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) z += row[i] * input[i];
            dst[o] = apply_activation(act, z);
        }
        input = dst;
        in_dim = out_dim;
    }
}

std::vector<double> FieldNet::forward(const std::vector<Vec3>& points,
                                      ForwardCache* cache) const {
    const size_t n = points.size();
    const int fdim = feature_dim();
    const int out_dim = mlp_.output_dim;
    const int n_hidden = mlp_.hidden_layers;

    std::vector<double> outputs(n * out_dim, 0.0);
    std::vector<double> features;
    std::vector<std::vector<double>> hidden(n_hidden);
    if (cache) {
        features.resize(n * fdim);
        for (int l = 0; l < n_hidden; ++l) hidden[l].resize(n * mlp_.hidden_dim);
    }

    std::vector<int64_t> clamp_counts(std::max(1, parallel_chunk_count(n)), 0);
    parallel_for_chunks(static_cast<int64_t>(n), [&](int64_t begin, int64_t end, int chunk) {
        std::vector<double> local_features(fdim);
        std::vector<double> hidden_buf(std::max(1, n_hidden * mlp_.hidden_dim));
        for (int64_t i = begin; i < end; ++i) {
            bool was_clamped = false;
            forward_point(points[i], cache ? features.data() + i * fdim : local_features.data(),
                          hidden_buf.data(), outputs.data() + i * out_dim, &was_clamped);
            if (was_clamped) ++clamp_counts[chunk];
            if (cache)
                for (int l = 0; l < n_hidden; ++l)
                    std::copy(hidden_buf.data() + l * mlp_.hidden_dim,
                              hidden_buf.data() + (l + 1) * mlp_.hidden_dim,
                              hidden[l].data() + i * mlp_.hidden_dim);
        }
    });

    if (cache) {
        cache->revision = revision_;
        cache->points = points;
        cache->features = std::move(features);
        cache->hidden = std::move(hidden);
        cache->outputs = outputs;
        cache->clamped = 0;
        for (int64_t c : clamp_counts) cache->clamped += c;
    }
    return outputs;
}

std::vector<double> FieldNet::encode(const std::vector<Vec3>& points) const {
    const size_t n = points.size();
    const int fdim = feature_dim();
    std::vector<double> features(n * fdim);
    parallel_for(static_cast<int64_t>(n), [&](int64_t i) {
        // encoding only: run forward_point into scratch output
        std::vector<double> hidden_buf(std::max(1, mlp_.hidden_layers * mlp_.hidden_dim));
        std::vector<double> out(mlp_.output_dim);
        forward_point(points[i], features.data() + i * fdim, hidden_buf.data(), out.data(),
                      nullptr);
    });
    return features;
}

std::vector<Vec3> FieldNet::backward(const ForwardCache& cache,
                                     const std::vector<double>& upstream,
                                     const std::vector<int>* subset) {
    if (cache.revision != revision_)
        throw StaleCache("forward cache is stale (parameters changed since forward)");
    const size_t n = cache.points.size();
    const int out_dim = mlp_.output_dim;
    const int fdim = feature_dim();
    const int F = encoding_.features_per_entry;
    if (upstream.size() != n * static_cast<size_t>(out_dim))
        throw ShapeMismatch("upstream size != n_points * output_dim");

    std::vector<Vec3> input_grads(n, Vec3::Zero());
    const int n_layers = static_cast<int>(layer_offset_.size());

    std::vector<double> g_out(out_dim);
    std::vector<double> g_buf_a(std::max(mlp_.hidden_dim, fdim));
    std::vector<double> g_buf_b(std::max(mlp_.hidden_dim, fdim));

    auto process_point = [&](size_t i) {
        // output activation
        bool all_zero = true;
        for (int o = 0; o < out_dim; ++o) {
            const double h = cache.outputs[i * out_dim + o];
            g_out[o] = upstream[i * out_dim + o] *
                       activation_grad_from_output(mlp_.output_activation, h);
            all_zero &= (g_out[o] == 0.0);
        }
        if (all_zero) return;

        // walk layers backwards
        double* g_cur = g_out.data();
        int cur_dim = out_dim;
        for (int layer = n_layers - 1; layer >= 0; --layer) {
            const int in_dim = layer_in_[layer];
            const double* input = (layer == 0) ? cache.features.data() + i * fdim
                                               : cache.hidden[layer - 1].data() +
                                                     i * static_cast<size_t>(mlp_.hidden_dim);
            double* gw = grads_.data() + layer_offset_[layer];
            double* gb = gw + static_cast<size_t>(in_dim) * cur_dim;
            const double* w = params_.data() + layer_offset_[layer];
            double* g_prev = (g_cur == g_buf_a.data()) ? g_buf_b.data() : g_buf_a.data();
            std::fill(g_prev, g_prev + in_dim, 0.0);
            for (int o = 0; o < cur_dim; ++o) {
                const double g = g_cur[o];
                if (g == 0.0) continue;
                gb[o] += g;
                double* gw_row = gw + static_cast<size_t>(o) * in_dim;
                const double* w_row = w + static_cast<size_t>(o) * in_dim;
                for (int k = 0; k < in_dim; ++k) {
                    gw_row[k] += g * input[k];
                    g_prev[k] += g * w_row[k];
                }
            }
            if (layer > 0) {
                const double* h = cache.hidden[layer - 1].data() +
                                  i * static_cast<size_t>(mlp_.hidden_dim);
                for (int k = 0; k < in_dim; ++k)
                    g_prev[k] *= activation_grad_from_output(mlp_.hidden_activation, h[k]);
            }
            g_cur = g_prev;
            cur_dim = in_dim;
        }

        // g_cur now holds gradient w.r.t. the encoding features
        const Vec3& p = cache.points[i];
        double u[3];
        for (int k = 0; k < 3; ++k) u[k] = std::clamp(p[k] + 0.5, 0.0, 1.0);
        Vec3 g_point = Vec3::Zero();
        for (int l = 0; l < encoding_.levels; ++l) {
            const int nres = level_res_[l];
            double x[3];
            int i0[3];
            double f[3];
            for (int k = 0; k < 3; ++k) {
                x[k] = u[k] * nres;
                i0[k] = std::min(static_cast<int>(x[k]), nres - 1);
                f[k] = x[k] - i0[k];
            }
            double* gtable = grads_.data() + level_offset_[l];
            const double* table = params_.data() + level_offset_[l];
            const bool dense = level_dense_[l];
            const size_t mask = level_entries_[l] - 1;
            const int stride = nres + 1;
            const double* gf = g_cur + l * F;
            for (int corner = 0; corner < 8; ++corner) {
                const int di = corner & 1, dj = (corner >> 1) & 1, dk = (corner >> 2) & 1;
                const double wx = di ? f[0] : 1.0 - f[0];
                const double wy = dj ? f[1] : 1.0 - f[1];
                const double wz = dk ? f[2] : 1.0 - f[2];
                const double w = wx * wy * wz;
                const uint32_t ci = static_cast<uint32_t>(i0[0] + di);
                const uint32_t cj = static_cast<uint32_t>(i0[1] + dj);
                const uint32_t ck = static_cast<uint32_t>(i0[2] + dk);
                size_t idx;
                if (dense) idx = (static_cast<size_t>(ci) * stride + cj) * stride + ck;
                else idx = spatial_hash(ci, cj, ck) & mask;
                double* gentry = gtable + idx * F;
                const double* entry = table + idx * F;
                double dot = 0.0;
                for (int c = 0; c < F; ++c) {
                    gentry[c] += w * gf[c];
                    dot += gf[c] * entry[c];
                }
                // d w / d u, scaled by level resolution
                const double sx = di ? 1.0 : -1.0;
                const double sy = dj ? 1.0 : -1.0;
                const double sz = dk ? 1.0 : -1.0;
                g_point[0] += dot * sx * wy * wz * nres;
                g_point[1] += dot * wx * sy * wz * nres;
                g_point[2] += dot * wx * wy * sz * nres;
            }
        }
        input_grads[i] = g_point;
    };

    if (subset) {
        for (int idx : *subset) process_point(static_cast<size_t>(idx));
    } else {
        for (size_t i = 0; i < n; ++i) process_point(i);
    }
    return input_grads;
}

void FieldNet::optimizer_step(AdamState& state) {
    adam_step(params_, grads_, state);
    quantize_params();
}

namespace {
constexpr uint32_t kFieldMagic = 0x54454e46u; // "FNET"
constexpr uint32_t kFieldVersion = 1;
} // namespace

void FieldNet::save(const std::string& path, bool f64_payload) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto w64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    w32(kFieldMagic);
    w32(kFieldVersion);
    w32(static_cast<uint32_t>(encoding_.levels));
    w32(static_cast<uint32_t>(encoding_.min_resolution));
    w32(static_cast<uint32_t>(encoding_.max_resolution));
    w32(static_cast<uint32_t>(encoding_.table_size));
    w32(static_cast<uint32_t>(encoding_.features_per_entry));
    w32(static_cast<uint32_t>(mlp_.hidden_dim));
    w32(static_cast<uint32_t>(mlp_.hidden_layers));
    w32(static_cast<uint32_t>(mlp_.output_dim));
    w32(static_cast<uint32_t>(mlp_.hidden_activation));
    w32(static_cast<uint32_t>(mlp_.output_activation));
    w32(f64_payload ? 1u : 0u);
    w64(params_.size());
    if (f64_payload) {
        out.write(reinterpret_cast<const char*>(params_.data()),
                  static_cast<std::streamsize>(params_.size() * sizeof(double)));
    } else {
        std::vector<float> buf(params_.size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(params_[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write: " + path);
}

FieldNet FieldNet::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    auto r32 = [&]() {
        uint32_t v;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto r64 = [&]() {
        uint64_t v;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    if (r32() != kFieldMagic) throw ParseError("bad field magic: " + path);
    if (r32() != kFieldVersion) throw ParseError("unsupported field version: " + path);
    HashEncodingConfig enc;
    enc.levels = static_cast<int>(r32());
    enc.min_resolution = static_cast<int>(r32());
    enc.max_resolution = static_cast<int>(r32());
    enc.table_size = static_cast<int>(r32());
    enc.features_per_entry = static_cast<int>(r32());
    MlpConfig mlp;
    mlp.hidden_dim = static_cast<int>(r32());
    mlp.hidden_layers = static_cast<int>(r32());
    mlp.output_dim = static_cast<int>(r32());
    mlp.hidden_activation = static_cast<Activation>(r32());
    mlp.output_activation = static_cast<Activation>(r32());
    const bool f64_payload = r32() != 0;
    const uint64_t count = r64();
    if (!in) throw ParseError("truncated field header: " + path);

    FieldNet net(enc, mlp, 0);
    if (count != net.params_.size())
        throw ParseError("field parameter count mismatch in " + path);
    if (f64_payload) {
        in.read(reinterpret_cast<char*>(net.params_.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
    } else {
        std::vector<float> buf(count);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        for (size_t i = 0; i < count; ++i) net.params_[i] = buf[i];
    }
    if (!in) throw ParseError("truncated field payload: " + path);
    ++net.revision_;
    return net;
}

FitReport fit_to_sdf(FieldNet& net, const std::vector<SignedDistanceSample>& samples,
                     int iters, uint64_t rng_seed, const FitOptions& options) {
    if (samples.empty()) throw PreconditionError("fit_to_sdf requires at least one sample");
    Rng rng(rng_seed);
    AdamState adam;
    adam.learning_rate = options.learning_rate;
    adam.weight_decay = options.weight_decay;
    adam.init(net.param_count());

    FitReport report;
    report.loss_history.reserve(iters);
    const int batch = std::min<int>(options.batch_size, static_cast<int>(samples.size()));

    std::vector<Vec3> points(batch);
    std::vector<double> targets(batch);
    for (int it = 0; it < iters; ++it) {
        for (int b = 0; b < batch; ++b) {
            const auto& s = samples[rng.uniform_index(samples.size())];
            points[b] = s.point;
            targets[b] = s.distance;
        }
        FieldNet::ForwardCache cache;
        const auto out = net.forward(points, &cache);
        double loss = 0.0;
        std::vector<double> upstream(batch);
        for (int b = 0; b < batch; ++b) {
            const double r = out[b] - targets[b];
            loss += r * r;
            upstream[b] = 2.0 * r / batch;
        }
        loss /= batch;
        report.loss_history.push_back(loss);
        net.backward(cache, upstream);
        net.optimizer_step(adam);
    }

    // Full-set RMS for the report.
    std::vector<Vec3> all_points(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) all_points[i] = samples[i].point;
    const auto out = net.forward(all_points);
    double sq = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const double r = out[i] - samples[i].distance;
        sq += r * r;
    }
    report.final_rms = std::sqrt(sq / static_cast<double>(samples.size()));
    return report;
}

} // namespace tetrec
