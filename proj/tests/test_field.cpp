#include "tetrec/errors.hpp"
#include "tetrec/field.hpp"
#include "tetrec/rng.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <filesystem>

using namespace tetrec;
using namespace tetrec::testing;

namespace {

HashEncodingConfig small_encoding() {
    HashEncodingConfig enc;
    enc.levels = 4;
    enc.min_resolution = 2;
    enc.max_resolution = 16;
    enc.table_size = 1 << 8;
    enc.features_per_entry = 2;
    return enc;
}

MlpConfig small_mlp(int out_dim = 1) {
    MlpConfig mlp;
    mlp.hidden_dim = 8;
    mlp.hidden_layers = 2;
    mlp.output_dim = out_dim;
    return mlp;
}

std::vector<Vec3> random_points(int n, Rng& rng) {
    std::vector<Vec3> points(n);
    for (auto& p : points)
        p = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    return points;
}

} // namespace

TEST_CASE("field_forward: zero tables and biases produce the output bias constant") {
    FieldNet net(small_encoding(), small_mlp(), 7);
    std::fill(net.params().begin(), net.params().end(), 0.0);
    net.quantize_params();
    Rng rng(1);
    const auto out = net.forward(random_points(16, rng));
    for (double v : out) CHECK(v == 0.0); // identity output activation, zero bias
}

TEST_CASE("field_forward: deterministic for identical points") {
    FieldNet net(small_encoding(), small_mlp(), 3);
    const std::vector<Vec3> points = {Vec3(0.1, -0.2, 0.3), Vec3(0.1, -0.2, 0.3)};
    const auto out = net.forward(points);
    CHECK(out[0] == out[1]);
}

TEST_CASE("field gradcheck: every parameter class matches finite differences") {
    FieldNet net(small_encoding(), small_mlp(), 1);
    Rng rng(42);
    // roughen the parameters so gradients are nontrivial
    for (auto& p : net.params()) p += 0.05 * rng.normal();
    net.quantize_params();

    const auto points = random_points(24, rng);
    std::vector<double> upstream(points.size());
    for (auto& u : upstream) u = rng.normal();

    FieldNet::ForwardCache cache;
    net.forward(points, &cache);
    net.zero_grads();
    net.backward(cache, upstream);
    const auto analytic = net.grads();

    auto loss_fn = [&](FieldNet& n) {
        const auto out = n.forward(points);
        double acc = 0.0;
        for (size_t i = 0; i < out.size(); ++i) acc += upstream[i] * out[i];
        return acc;
    };

    // Probe a spread of parameter indices: hash features (dense and hashed
    // levels), first-layer weights, biases, and the output layer.
    const size_t n_params = net.param_count();
    std::vector<size_t> probes;
    Rng pick(17);
    for (int k = 0; k < 40; ++k) probes.push_back(pick.uniform_index(n_params));
    probes.push_back(0);
    probes.push_back(n_params - 1); // output bias

    const double h = 1e-5;
    int checked = 0;
    for (size_t idx : probes) {
        const double saved = net.params()[idx];
        net.params()[idx] = saved + h;
        const double fp = loss_fn(net);
        net.params()[idx] = saved - h;
        const double fm = loss_fn(net);
        net.params()[idx] = saved;
        const double fd = (fp - fm) / (2.0 * h);
        if (std::abs(analytic[idx]) < 1e-10 && std::abs(fd) < 1e-7) continue; // inactive entry
        CHECK(rel_error(analytic[idx], fd) < 1e-4);
        ++checked;
    }
    CHECK(checked > 10);
}

TEST_CASE("field_backward: zero upstream leaves gradients untouched") {
    FieldNet net(small_encoding(), small_mlp(), 1);
    Rng rng(3);
    const auto points = random_points(8, rng);
    FieldNet::ForwardCache cache;
    net.forward(points, &cache);
    net.zero_grads();
    std::vector<double> upstream(points.size(), 0.0);
    net.backward(cache, upstream);
    for (double g : net.grads()) CHECK(g == 0.0);
}

TEST_CASE("field_backward: linear in the upstream signal") {
    FieldNet net(small_encoding(), small_mlp(), 1);
    Rng rng(5);
    const auto points = random_points(8, rng);
    FieldNet::ForwardCache cache;
    net.forward(points, &cache);

    std::vector<double> upstream(points.size());
    for (auto& u : upstream) u = rng.normal();

    net.zero_grads();
    net.backward(cache, upstream);
    const auto g1 = net.grads();

    std::vector<double> doubled = upstream;
    for (auto& u : doubled) u *= 2.0;
    net.zero_grads();
    net.backward(cache, doubled);
    const auto g2 = net.grads();

    for (size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]));
}

TEST_CASE("field_backward: stale cache detected") {
    FieldNet net(small_encoding(), small_mlp(), 1);
    Rng rng(6);
    const auto points = random_points(4, rng);
    FieldNet::ForwardCache cache;
    net.forward(points, &cache);
    net.quantize_params(); // bumps the revision
    std::vector<double> upstream(points.size(), 1.0);
    CHECK_THROWS_AS(net.backward(cache, upstream), StaleCache);
}

TEST_CASE("encoding is piecewise-trilinear: collinear within a finest cell") {
    HashEncodingConfig enc = small_encoding();
    FieldNet net(enc, small_mlp(), 1);
    Rng rng(12);
    for (auto& p : net.params()) p += 0.1 * rng.normal();
    net.quantize_params();

    const auto res = enc.level_resolutions();
    const int finest = res.back();
    // pick a segment along x strictly inside one cell of every level
    const double cell = 1.0 / finest;
    const Vec3 base(-0.5 + 7.25 * cell, -0.5 + 3.4 * cell, -0.5 + 5.6 * cell);
    const Vec3 a = base;
    const Vec3 b = base + Vec3(0.45 * cell, 0, 0);
    const Vec3 m = base + Vec3(0.225 * cell, 0, 0);
    // verify no level boundary is crossed
    for (int r : res) {
        const int ca = static_cast<int>((a.x() + 0.5) * r);
        const int cb = static_cast<int>((b.x() + 0.5) * r);
        REQUIRE(ca == cb);
    }
    const auto fa = net.encode({a});
    const auto fb = net.encode({b});
    const auto fm = net.encode({m});
    for (size_t i = 0; i < fa.size(); ++i)
        CHECK(fm[i] == doctest::Approx(0.5 * (fa[i] + fb[i])).epsilon(1e-9));

    // with an identity-activation MLP the full forward stays affine
    MlpConfig linear_mlp = small_mlp(1);
    linear_mlp.hidden_activation = Activation::Identity;
    FieldNet linear_net(enc, linear_mlp, 9);
    const auto oa = linear_net.forward({a});
    const auto ob = linear_net.forward({b});
    const auto om = linear_net.forward({m});
    CHECK(om[0] == doctest::Approx(0.5 * (oa[0] + ob[0])).epsilon(1e-9));
}

TEST_CASE("adam_step: zero gradient and zero weight decay leave params unchanged") {
    std::vector<double> params = {1.0, -2.0, 0.5};
    std::vector<double> grads = {0.0, 0.0, 0.0};
    AdamState state;
    state.weight_decay = 0.0;
    state.init(3);
    adam_step(params, grads, state);
    CHECK(params[0] == 1.0);
    CHECK(params[1] == -2.0);
    CHECK(params[2] == 0.5);
}

TEST_CASE("adam defaults match the configured base values") {
    AdamState state;
    CHECK(state.learning_rate == 1e-3);
    CHECK(state.weight_decay == 5e-4);
}

TEST_CASE("adam_step: quadratic descent reaches the optimum") {
    std::vector<double> x = {1.0};
    std::vector<double> g = {0.0};
    AdamState state;
    state.learning_rate = 1e-2;
    state.weight_decay = 0.0;
    state.init(1);
    for (int i = 0; i < 500; ++i) {
        g[0] = 2.0 * x[0];
        adam_step(x, g, state);
    }
    CHECK(std::abs(x[0]) < 1e-2);
}

TEST_CASE("adam_step: shape mismatch throws") {
    std::vector<double> params = {1.0, 2.0};
    std::vector<double> grads = {1.0, 2.0};
    AdamState state;
    state.init(3);
    CHECK_THROWS_AS(adam_step(params, grads, state), ShapeMismatch);
}

TEST_CASE("fit_to_sdf: plane field reaches RMS < 0.01") {
    HashEncodingConfig enc;
    enc.levels = 8;
    enc.min_resolution = 4;
    enc.max_resolution = 64;
    enc.table_size = 1 << 12;
    FieldNet net(enc, small_mlp(), 21);

    Rng rng(2024);
    std::vector<SignedDistanceSample> samples;
    for (int i = 0; i < 6000; ++i) {
        const Vec3 p(rng.uniform(-0.5, 0.5), rng.uniform(-0.4, 0.4), rng.uniform(-0.5, 0.5));
        samples.push_back({p, p.y()}); // SDF of the plane y = 0
    }
    const FitReport report = fit_to_sdf(net, samples, 2000, 77);
    CHECK(report.final_rms < 0.01);
}

TEST_CASE("fit_to_sdf: empty samples rejected; same seed gives identical trajectory") {
    FieldNet net(small_encoding(), small_mlp(), 1);
    CHECK_THROWS_AS(fit_to_sdf(net, {}, 10, 1), PreconditionError);

    std::vector<SignedDistanceSample> samples;
    Rng rng(8);
    for (int i = 0; i < 256; ++i) {
        const Vec3 p(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        samples.push_back({p, p.norm() - 0.3});
    }
    FieldNet net_a(small_encoding(), small_mlp(), 5);
    FieldNet net_b(small_encoding(), small_mlp(), 5);
    const FitReport ra = fit_to_sdf(net_a, samples, 50, 123);
    const FitReport rb = fit_to_sdf(net_b, samples, 50, 123);
    REQUIRE(ra.loss_history.size() == rb.loss_history.size());
    for (size_t i = 0; i < ra.loss_history.size(); ++i)
        CHECK(ra.loss_history[i] == rb.loss_history[i]);
}

TEST_CASE("fit_to_sdf: sphere fit evaluates near zero on the surface") {
    HashEncodingConfig enc;
    enc.levels = 8;
    enc.min_resolution = 4;
    enc.max_resolution = 64;
    enc.table_size = 1 << 12;
    FieldNet net(enc, small_mlp(), 31);

    Rng rng(31337);
    std::vector<SignedDistanceSample> samples;
    for (int i = 0; i < 8000; ++i) {
        const Vec3 p(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        samples.push_back({p, p.norm() - 0.3});
    }
    fit_to_sdf(net, samples, 2500, 55);
    const auto out = net.forward({Vec3(0.3, 0.0, 0.0)});
    CHECK(std::abs(out[0]) < 0.02);
}

TEST_CASE("field checkpoint: f32 payload round trips the quantized parameters") {
    FieldNet net(small_encoding(), small_mlp(), 3);
    Rng rng(4);
    for (auto& p : net.params()) p += 0.3 * rng.normal();
    net.quantize_params();
    const std::string path =
        (std::filesystem::temp_directory_path() / "field_roundtrip.bin").string();
    net.save(path);
    const FieldNet loaded = FieldNet::load(path);
    REQUIRE(loaded.param_count() == net.param_count());
    for (size_t i = 0; i < net.param_count(); ++i)
        CHECK(loaded.params()[i] == net.params()[i]);

    const auto points = random_points(8, rng);
    const auto a = net.forward(points);
    const auto b = loaded.forward(points);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("field_forward: input gradients match finite differences") {
    FieldNet net(small_encoding(), small_mlp(), 1);
    Rng rng(67);
    for (auto& p : net.params()) p += 0.1 * rng.normal();
    net.quantize_params();

    const Vec3 base(0.123, -0.221, 0.05);
    FieldNet::ForwardCache cache;
    net.forward({base}, &cache);
    net.zero_grads();
    const auto input_grads = net.backward(cache, {1.0});

    const double h = 1e-6;
    for (int axis = 0; axis < 3; ++axis) {
        Vec3 plus = base, minus = base;
        plus[axis] += h;
        minus[axis] -= h;
        const double fd = (net.forward({plus})[0] - net.forward({minus})[0]) / (2.0 * h);
        CHECK(rel_error(input_grads[0][axis], fd, 1e-8) < 1e-3);
    }
}
