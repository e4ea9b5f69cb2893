#include "tetrec/errors.hpp"
#include "tetrec/guidance.hpp"
#include "tetrec/rng.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <filesystem>

using namespace tetrec;
using namespace tetrec::testing;

namespace {

Camera camera_at(double azimuth_deg, double elevation_deg = 0.0) {
    Camera cam;
    cam.azimuth = azimuth_deg * M_PI / 180.0;
    cam.elevation = elevation_deg * M_PI / 180.0;
    return cam;
}

NoiseSchedule default_schedule() {
    NoiseSchedule s;
    s.init();
    return s;
}

AttributeSet man_in_tshirt() {
    AttributeSet attrs;
    attrs.gender = "man";
    attrs.garments = {"blue t-shirt"};
    return attrs;
}

} // namespace

TEST_CASE("classify_view: azimuth quadrants and the overhead override") {
    CHECK(classify_view(camera_at(0)) == "front");
    CHECK(classify_view(camera_at(44.9)) == "front");
    CHECK(classify_view(camera_at(-44.9)) == "front");
    CHECK(classify_view(camera_at(90)) == "side");
    CHECK(classify_view(camera_at(-120)) == "side");
    CHECK(classify_view(camera_at(179)) == "back");
    CHECK(classify_view(camera_at(-179)) == "back");
    CHECK(classify_view(camera_at(360 + 10)) == "front"); // normalization
    CHECK(classify_view(camera_at(0, 75)) == "overhead");
}

TEST_CASE("compose_prompt: golden body prompt") {
    const PromptCondition cond =
        compose_prompt(man_in_tshirt(), "[V]", camera_at(0), false, false);
    CHECK(cond.text == "a front view of [V] man wearing blue t-shirt");
    CHECK(cond.view_tag == "front");
}

TEST_CASE("compose_prompt: normal mode prepends the sculpture phrase") {
    const PromptCondition cond =
        compose_prompt(man_in_tshirt(), "[V]", camera_at(0), true, false);
    CHECK(cond.text ==
          "a detailed sculpture of a front view of [V] man wearing blue t-shirt");
}

TEST_CASE("compose_prompt: face cameras prepend 'face of'") {
    const PromptCondition cond =
        compose_prompt(man_in_tshirt(), "[V]", camera_at(0), false, true);
    CHECK(cond.text == "face of a front view of [V] man wearing blue t-shirt");

    const PromptCondition both =
        compose_prompt(man_in_tshirt(), "[V]", camera_at(0), true, true);
    CHECK(both.text ==
          "a detailed sculpture of face of a front view of [V] man wearing blue t-shirt");
}

TEST_CASE("compose_prompt: repeated words collapse") {
    AttributeSet attrs;
    attrs.gender = "woman";
    attrs.garments = {"blue blue dress"};
    const PromptCondition cond = compose_prompt(attrs, "[V]", camera_at(90), false, false);
    CHECK(cond.text == "a side view of [V] woman wearing blue dress");
}

TEST_CASE("compose_prompt: full attribute set and overhead article") {
    AttributeSet attrs;
    attrs.gender = "woman";
    attrs.garments = {"red jacket", "black pants"};
    attrs.hair = "long black";
    attrs.face = "round face";
    const PromptCondition cond = compose_prompt(attrs, "[V]", camera_at(0, 80), false, false);
    CHECK(cond.text ==
          "an overhead view of [V] woman wearing red jacket, black pants, long black hair, "
          "round face");
}

TEST_CASE("compose_prompt: deterministic and idempotent") {
    const PromptCondition a = compose_prompt(man_in_tshirt(), "[V]", camera_at(30), true, false);
    const PromptCondition b = compose_prompt(man_in_tshirt(), "[V]", camera_at(30), true, false);
    CHECK(a.text == b.text);
}

TEST_CASE("compose_prompt: missing gender throws") {
    AttributeSet attrs;
    attrs.garments = {"hat"};
    CHECK_THROWS_AS(compose_prompt(attrs, "[V]", camera_at(0), false, false), MissingGender);
}

TEST_CASE("noise schedule: alpha_bar is monotone decreasing from ~1") {
    const NoiseSchedule s = default_schedule();
    CHECK(s.alpha_bar_at(0.0) > 0.999);
    double prev = 1.0;
    for (double t = 0.0; t < 1.0; t += 0.05) {
        const double ab = s.alpha_bar_at(t);
        CHECK(ab <= prev);
        CHECK(ab > 0.0);
        prev = ab;
    }
}

TEST_CASE("sds_gradient: perfect-denoiser provider yields exactly zero gradient") {
    const NoiseSchedule schedule = default_schedule();
    Rng rng(101);
    Image rendered(8, 8, 3);
    for (auto& v : rendered.data) v = rng.uniform();

    NullScore provider;
    PromptCondition cond;
    const SdsResult result = sds_gradient(rendered, cond, provider, schedule, rng);
    for (double g : result.gradient.data) CHECK(g == 0.0);
}

TEST_CASE("sds_gradient: constant-weight mode is independent of t") {
    const NoiseSchedule schedule = default_schedule();
    CHECK(schedule.weight_at(0.1) == 1.0);
    CHECK(schedule.weight_at(0.9) == 1.0);
}

TEST_CASE("sds_gradient: same seed gives bit-identical gradients") {
    const NoiseSchedule schedule = default_schedule();
    Image rendered(8, 8, 3, 0.4);
    Image target(8, 8, 3, 0.9);
    PromptCondition cond;
    AnalyticGaussianScore provider(target);

    Rng rng_a(7), rng_b(7);
    const SdsResult a = sds_gradient(rendered, cond, provider, schedule, rng_a);
    const SdsResult b = sds_gradient(rendered, cond, provider, schedule, rng_b);
    CHECK(a.t == b.t);
    for (size_t i = 0; i < a.gradient.data.size(); ++i)
        CHECK(a.gradient.data[i] == b.gradient.data[i]);
}

TEST_CASE("sds_gradient: expectation matches a noise-independent provider") {
    // provider returning a constant C: E[grad] = w * C
    struct ConstantScore final : ScoreProvider {
        Image predict_noise(const Image& z, const PromptCondition&, double,
                            const SdsContext&) override {
            Image out = z;
            std::fill(out.data.begin(), out.data.end(), 1.0);
            return out;
        }
    };
    NoiseSchedule schedule = default_schedule();
    ConstantScore provider;
    PromptCondition cond;
    Image rendered(4, 4, 3, 0.5);
    Rng rng(55);

    // fixed t: use a degenerate sampling range
    Image mean(4, 4, 3, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const SdsResult r = sds_gradient(rendered, cond, provider, schedule, rng, 0.5, 0.5);
        for (size_t p = 0; p < mean.data.size(); ++p) mean.data[p] += r.gradient.data[p];
    }
    for (size_t p = 0; p < mean.data.size(); ++p) {
        mean.data[p] /= n;
        CHECK(std::abs(mean.data[p] - 1.0) < 0.05); // w = 1, C = 1
    }
}

TEST_CASE("sds_gradient: analytic gaussian score drives an image to its target") {
    // small, fast version of the closed-loop criterion
    const NoiseSchedule schedule = default_schedule();
    Image target(8, 8, 3);
    Rng init(3);
    for (auto& v : target.data) v = init.uniform();
    AnalyticGaussianScore provider(target);
    PromptCondition cond;

    Image x(8, 8, 3, 0.5);
    Rng rng(11);
    const double lr = 0.05;
    for (int step = 0; step < 800; ++step) {
        const SdsResult r = sds_gradient(x, cond, provider, schedule, rng);
        for (size_t i = 0; i < x.data.size(); ++i)
            x.data[i] = std::clamp(x.data[i] - lr * r.gradient.data[i], 0.0, 1.0);
    }
    double mean_abs = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) mean_abs += std::abs(x.data[i] - target.data[i]);
    mean_abs /= static_cast<double>(x.data.size());
    CHECK(mean_abs < 0.1);
}

TEST_CASE("recorded scores: record then replay reproduces gradients exactly") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "tetrec_recorded").string();
    const NoiseSchedule schedule = default_schedule();
    PromptCondition cond;
    Image target(6, 6, 3, 0.8);
    Image rendered(6, 6, 3, 0.3);

    std::vector<Image> recorded_grads;
    {
        auto inner = std::make_shared<AnalyticGaussianScore>(target);
        ScoreRecorder recorder(inner, dir);
        Rng rng(31);
        for (int step = 0; step < 5; ++step) {
            const SdsResult r =
                sds_gradient(rendered, cond, recorder, schedule, rng, 0.02, 0.98, step);
            recorded_grads.push_back(r.gradient);
        }
    }
    {
        RecordedScore replay((fs::path(dir) / "scores.jsonl").string());
        Rng rng(9999); // replay must not depend on this stream
        for (int step = 0; step < 5; ++step) {
            const SdsResult r =
                sds_gradient(rendered, cond, replay, schedule, rng, 0.02, 0.98, step);
            for (size_t i = 0; i < r.gradient.data.size(); ++i)
                CHECK(r.gradient.data[i] == recorded_grads[step].data[i]);
        }
        CHECK(replay.remaining() == 0);
    }
}

TEST_CASE("recorded scores: exhausted stream throws") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "tetrec_recorded2").string();
    const NoiseSchedule schedule = default_schedule();
    PromptCondition cond;
    Image rendered(4, 4, 3, 0.3);
    {
        auto inner = std::make_shared<NullScore>();
        ScoreRecorder recorder(inner, dir);
        Rng rng(1);
        sds_gradient(rendered, cond, recorder, schedule, rng);
    }
    RecordedScore replay((fs::path(dir) / "scores.jsonl").string());
    Rng rng(2);
    sds_gradient(rendered, cond, replay, schedule, rng);
    CHECK_THROWS_AS(sds_gradient(rendered, cond, replay, schedule, rng), OutOfRange);
}
