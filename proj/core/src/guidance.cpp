#include "tetrec/guidance.hpp"

#include "tetrec/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tetrec {

using nlohmann::json;

std::string classify_view(const Camera& camera) {
    const double elevation_deg = camera.elevation * 180.0 / M_PI;
    if (elevation_deg > 60.0) return "overhead";
    double az = camera.azimuth * 180.0 / M_PI;
    az = std::fmod(az + 180.0, 360.0);
    if (az < 0.0) az += 360.0;
    az -= 180.0; // normalized to [-180, 180)
    const double abs_az = std::abs(az);
    if (abs_az < 45.0) return "front";
    if (abs_az < 135.0) return "side";
    return "back";
}

namespace {

/// Collapses consecutive duplicate words ("blue blue shirt" -> "blue shirt").
std::string dedup_words(const std::string& text) {
    std::istringstream ss(text);
    std::string word, prev, out;
    auto canonical = [](std::string w) {
        while (!w.empty() && (w.back() == ',' || w.back() == '.')) w.pop_back();
        return w;
    };
    while (ss >> word) {
        if (!prev.empty() && canonical(word) == canonical(prev)) {
            // keep punctuation of the survivor
            if (word.size() > canonical(word).size() && out.size() >= prev.size()) {
                out.replace(out.size() - prev.size(), prev.size(), word);
                prev = word;
            }
            continue;
        }
        if (!out.empty()) out += ' ';
        out += word;
        prev = word;
    }
    return out;
}

} // namespace

PromptCondition compose_prompt(const AttributeSet& attributes, const std::string& identifier,
                               const Camera& camera, bool normal_mode, bool face_zoom) {
    if (attributes.gender.empty())
        throw MissingGender("attribute set lacks the gender field");

    std::string core = identifier.empty() ? attributes.gender
                                          : identifier + " " + attributes.gender;
    if (!attributes.garments.empty()) {
        core += " wearing ";
        for (size_t i = 0; i < attributes.garments.size(); ++i) {
            if (i) core += ", ";
            core += attributes.garments[i];
        }
    }
    if (!attributes.hair.empty()) core += ", " + attributes.hair + " hair";
    if (!attributes.facial_hair.empty()) core += ", " + attributes.facial_hair;
    if (!attributes.face.empty()) core += ", " + attributes.face;
    core = dedup_words(core);

    PromptCondition cond;
    cond.view_tag = classify_view(camera);
    const std::string article = cond.view_tag == "overhead" ? "an " : "a ";
    std::string prompt = article + cond.view_tag + " view of " + core;
    if (face_zoom) prompt = "face of " + prompt;
    if (normal_mode) prompt = "a detailed sculpture of " + prompt;

    cond.face_zoom = face_zoom;
    cond.normal_mode = normal_mode;
    cond.text = prompt;
    return cond;
}

void NoiseSchedule::init() {
    if (num_steps < 2) throw PreconditionError("noise schedule needs >= 2 steps");
    alpha_bar_.resize(num_steps);
    double prod = 1.0;
    for (int i = 0; i < num_steps; ++i) {
        const double beta =
            beta_start + (beta_end - beta_start) * static_cast<double>(i) / (num_steps - 1);
        prod *= (1.0 - beta);
        alpha_bar_[i] = prod;
    }
}

double NoiseSchedule::alpha_bar_at(double t) const {
    if (alpha_bar_.empty()) throw PreconditionError("noise schedule not initialized");
    const int idx = std::clamp(static_cast<int>(t * num_steps), 0, num_steps - 1);
    return alpha_bar_[idx];
}

double NoiseSchedule::weight_at(double t) const {
    switch (weight_mode) {
        case WeightMode::Constant: return 1.0;
        case WeightMode::OneMinusAlphaBar: return 1.0 - alpha_bar_at(t);
    }
    return 1.0;
}

Image NullScore::predict_noise(const Image& z_t, const PromptCondition&, double,
                               const SdsContext& context) {
    if (!context.noise || !context.noise->same_shape(z_t))
        throw PreconditionError("NullScore needs the sampling context");
    return *context.noise;
}

Image AnalyticGaussianScore::predict_noise(const Image& z_t, const PromptCondition&, double,
                                           const SdsContext& context) {
    if (!target_.same_shape(z_t))
        throw DimensionMismatch("AnalyticGaussianScore target shape mismatch");
    const double ab = context.alpha_bar;
    const double scale = 1.0 / std::sqrt(1.0 - ab);
    const double shift = std::sqrt(ab);
    Image out = z_t;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (z_t.data[i] - shift * target_.data[i]) * scale;
    return out;
}

RecordedScore::RecordedScore(const std::string& jsonl_path) {
    std::ifstream in(jsonl_path);
    if (!in) throw IoError("cannot open recorded score log: " + jsonl_path);
    const auto dir = std::filesystem::path(jsonl_path).parent_path();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("bad JSONL line in " + jsonl_path);
        Record r;
        r.step = j.at("step").get<int64_t>();
        r.t = j.at("t").get<double>();
        r.seed = j.at("seed").get<uint64_t>();
        r.eps_hat_path = (dir / j.at("eps_hat_path").get<std::string>()).string();
        records_.push_back(std::move(r));
    }
    if (records_.empty()) throw ParseError("recorded score log is empty: " + jsonl_path);
}

void RecordedScore::sample_override(double& t, uint64_t& noise_seed) {
    if (cursor_ >= records_.size())
        throw OutOfRange("recorded score stream exhausted");
    t = records_[cursor_].t;
    noise_seed = records_[cursor_].seed;
}

Image RecordedScore::predict_noise(const Image& z_t, const PromptCondition&, double,
                                   const SdsContext&) {
    if (cursor_ >= records_.size())
        throw OutOfRange("recorded score stream exhausted");
    Image eps_hat = load_image_raw(records_[cursor_].eps_hat_path);
    ++cursor_;
    if (!eps_hat.same_shape(z_t))
        throw DimensionMismatch("recorded eps_hat shape mismatch");
    return eps_hat;
}

ScoreRecorder::ScoreRecorder(std::shared_ptr<ScoreProvider> inner, std::string directory)
    : inner_(std::move(inner)), directory_(std::move(directory)) {
    std::filesystem::create_directories(directory_);
    log_path_ = (std::filesystem::path(directory_) / "scores.jsonl").string();
    std::ofstream out(log_path_, std::ios::trunc); // start a fresh log
    if (!out) throw IoError("cannot open score log for writing: " + log_path_);
}

Image ScoreRecorder::predict_noise(const Image& z_t, const PromptCondition& condition, double t,
                                   const SdsContext& context) {
    Image eps_hat = inner_->predict_noise(z_t, condition, t, context);
    // The f32 sidecar is the canonical recorded value; quantize the returned
    // prediction the same way so the recording run and a later replay see
    // bit-identical scores.
    for (auto& v : eps_hat.data) v = static_cast<double>(static_cast<float>(v));
    const std::string name = "eps_hat_" + std::to_string(step_) + ".imgf";
    save_image_raw(eps_hat, (std::filesystem::path(directory_) / name).string());
    json j;
    j["step"] = step_;
    j["t"] = t;
    j["seed"] = context.noise_seed;
    j["eps_hat_path"] = name;
    std::ofstream out(log_path_, std::ios::app);
    out << j.dump() << "\n";
    ++step_;
    return eps_hat;
}

Image noise_image_from_seed(int h, int w, int c, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, c);
    for (auto& v : img.data) v = rng.normal();
    return img;
}

SdsResult sds_gradient(const Image& rendered, const PromptCondition& condition,
                       ScoreProvider& provider, const NoiseSchedule& schedule, Rng& rng,
                       double t_min, double t_max, int64_t step) {
    if (!schedule.initialized()) throw PreconditionError("noise schedule not initialized");

    SdsResult result;
    uint64_t noise_seed;
    if (provider.overrides_sampling()) {
        provider.sample_override(result.t, noise_seed);
    } else {
        result.t = rng.uniform(t_min, t_max);
        noise_seed = rng.next_u64();
    }
    const double ab = schedule.alpha_bar_at(result.t);
    result.weight = schedule.weight_at(result.t);

    const Image eps = noise_image_from_seed(rendered.height, rendered.width, rendered.channels,
                                            noise_seed);
    Image z = rendered;
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    for (size_t i = 0; i < z.data.size(); ++i)
        z.data[i] = a * rendered.data[i] + b * eps.data[i];

    SdsContext context;
    context.clean = &rendered;
    context.noise = &eps;
    context.alpha_bar = ab;
    context.noise_seed = noise_seed;
    context.step = step;

    const Image eps_hat = provider.predict_noise(z, condition, result.t, context);
    if (!eps_hat.same_shape(rendered))
        throw DimensionMismatch("score provider returned a wrong-shaped prediction");

    result.gradient = Image(rendered.height, rendered.width, rendered.channels);
    for (size_t i = 0; i < result.gradient.data.size(); ++i)
        result.gradient.data[i] = result.weight * (eps_hat.data[i] - eps.data[i]);
    return result;
}

} // namespace tetrec
