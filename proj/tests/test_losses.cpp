#include "tetrec/errors.hpp"
#include "tetrec/losses.hpp"
#include "tetrec/rng.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

using namespace tetrec;
using namespace tetrec::testing;

namespace {

Image binary_rect(int h, int w, int y0, int x0, int rh, int rw) {
    Image img(h, w, 1, 0.0);
    for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) img.at(y, x, 0) = 1.0;
    return img;
}

/// Brute-force nearest-boundary oracle for the silhouette edge term.
double brute_force_edge_term(const Image& rendered, const Image& target) {
    const auto redges = binary_edge_map(rendered);
    const auto tedges = binary_edge_map(target);
    const int h = rendered.height, w = rendered.width;
    double total = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!redges[static_cast<size_t>(y) * w + x]) continue;
            double best = std::numeric_limits<double>::infinity();
            for (int ty = 0; ty < h; ++ty)
                for (int tx = 0; tx < w; ++tx)
                    if (tedges[static_cast<size_t>(ty) * w + tx])
                        best = std::min(best, static_cast<double>(std::abs(y - ty) +
                                                                  std::abs(x - tx)));
            total += best;
        }
    return total;
}

} // namespace

TEST_CASE("silhouette_loss: identical masks give zero") {
    const Image mask = binary_rect(32, 32, 8, 8, 12, 12);
    const auto loss = silhouette_loss(mask, mask);
    CHECK(loss.mse_term == 0.0);
    CHECK(loss.edge_term == 0.0);
}

TEST_CASE("silhouette_loss: all-zero render against a 10x10 square") {
    const Image target = binary_rect(64, 64, 20, 20, 10, 10);
    const Image rendered(64, 64, 1, 0.0);
    const auto loss = silhouette_loss(rendered, target);
    CHECK(loss.mse_term == doctest::Approx(100.0 / 4096.0));
    CHECK(loss.edge_term == 0.0); // the rendered mask has no boundary pixels
}

TEST_CASE("silhouette_loss: offset square edge term matches the brute-force oracle") {
    const Image target = binary_rect(64, 64, 20, 20, 12, 12);
    const Image rendered = binary_rect(64, 64, 20, 23, 12, 12); // 3 px to the right
    const auto loss = silhouette_loss(rendered, target);
    const double oracle = brute_force_edge_term(rendered, target);
    CHECK(loss.edge_term == doctest::Approx(oracle));
    CHECK(loss.edge_term > 0.0);
}

TEST_CASE("silhouette_loss: edge term is translation-monotone for disjoint squares") {
    const Image target = binary_rect(96, 96, 40, 8, 12, 12);
    double previous = -1.0;
    for (int offset = 24; offset <= 60; offset += 6) {
        const Image rendered = binary_rect(96, 96, 40, 8 + offset, 12, 12);
        const auto loss = silhouette_loss(rendered, target);
        if (previous >= 0.0) CHECK(loss.edge_term >= previous);
        previous = loss.edge_term;
    }
}

TEST_CASE("silhouette_loss: gradient of the soft objective matches finite differences") {
    Rng rng(77);
    Image rendered(8, 8, 1);
    Image target(8, 8, 1);
    for (auto& v : rendered.data) v = rng.uniform();
    for (auto& v : target.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;

    const auto loss = silhouette_loss(rendered, target);
    const double h = 1e-6;
    Rng pick(3);
    for (int k = 0; k < 10; ++k) {
        const size_t idx = pick.uniform_index(rendered.data.size());
        Image plus = rendered, minus = rendered;
        plus.data[idx] += h;
        minus.data[idx] -= h;
        const double fd =
            (silhouette_loss(plus, target).soft_total() -
             silhouette_loss(minus, target).soft_total()) /
            (2.0 * h);
        CHECK(rel_error(loss.d_mask.data[idx], fd, 1e-9) < 1e-4);
    }
}

TEST_CASE("silhouette_loss: dimension mismatch throws") {
    CHECK_THROWS_AS(silhouette_loss(Image(8, 8, 1), Image(9, 8, 1)), DimensionMismatch);
}

TEST_CASE("normal_reg_loss: identical images give zero, empty mask warns") {
    Rng rng(5);
    Image normals(8, 8, 3);
    for (auto& v : normals.data) v = rng.normal();
    Image mask(8, 8, 1, 1.0);
    const auto loss = normal_reg_loss(normals, normals, mask);
    CHECK(loss.value == 0.0);
    CHECK_FALSE(loss.empty_mask);

    Image empty_mask(8, 8, 1, 0.0);
    const auto warned = normal_reg_loss(normals, normals, empty_mask);
    CHECK(warned.value == 0.0);
    CHECK(warned.empty_mask);
}

TEST_CASE("normal_reg_loss: 180-degree rotated target gives the analytic mean") {
    // rotation by pi about the view axis: (x, y, z) -> (-x, -y, z)
    Rng rng(6);
    const int n = 8;
    Image rendered(n, n, 3);
    Image target(n, n, 3);
    Image mask(n, n, 1, 1.0);
    double expected = 0.0;
    for (int p = 0; p < n * n; ++p) {
        Vec3 v(rng.normal(), rng.normal(), rng.normal());
        v.normalize();
        const Vec3 r(-v.x(), -v.y(), v.z());
        for (int c = 0; c < 3; ++c) {
            rendered.data[3 * p + c] = v[c];
            target.data[3 * p + c] = r[c];
        }
        expected += (v - r).squaredNorm();
    }
    expected /= n * n;
    const auto loss = normal_reg_loss(rendered, target, mask);
    CHECK(loss.value == doctest::Approx(expected));
}

TEST_CASE("normal_reg_loss: gradient matches finite differences") {
    Rng rng(8);
    Image rendered(8, 8, 3), target(8, 8, 3), mask(8, 8, 1);
    for (auto& v : rendered.data) v = rng.normal();
    for (auto& v : target.data) v = rng.normal();
    for (auto& v : mask.data) v = rng.uniform() < 0.7 ? 1.0 : 0.0;
    const auto loss = normal_reg_loss(rendered, target, mask);
    Rng pick(4);
    const double h = 1e-6;
    for (int k = 0; k < 10; ++k) {
        const size_t idx = pick.uniform_index(rendered.data.size());
        Image plus = rendered, minus = rendered;
        plus.data[idx] += h;
        minus.data[idx] -= h;
        const double fd = (normal_reg_loss(plus, target, mask).value -
                           normal_reg_loss(minus, target, mask).value) /
                          (2.0 * h);
        CHECK(rel_error(loss.grad.data[idx], fd, 1e-10) < 1e-4);
    }
}

TEST_CASE("occlusion_recon_loss: masked MSE conventions") {
    Image input(8, 8, 3, 0.25);
    Image mask(8, 8, 1, 1.0);

    SUBCASE("zero mask gives zero") {
        Image zero_mask(8, 8, 1, 0.0);
        Image rendered(8, 8, 3, 0.9);
        const auto loss = occlusion_recon_loss(rendered, input, zero_mask, 1.0);
        CHECK(loss.value == 0.0);
        CHECK(loss.empty_mask);
    }
    SUBCASE("identical images give zero") {
        const auto loss = occlusion_recon_loss(input, input, mask, 1.0);
        CHECK(loss.value == 0.0);
    }
    SUBCASE("constant +0.1 offset gives lambda * 0.01 * 3") {
        Image rendered = input;
        for (auto& v : rendered.data) v += 0.1;
        const double lambda = 2.5;
        const auto loss = occlusion_recon_loss(rendered, input, mask, lambda);
        CHECK(loss.value == doctest::Approx(lambda * 0.01 * 3.0).epsilon(1e-12));
    }
}

TEST_CASE("occlusion_recon_loss: gradient matches finite differences") {
    Rng rng(13);
    Image rendered(8, 8, 3), input(8, 8, 3), mask(8, 8, 1);
    for (auto& v : rendered.data) v = rng.uniform();
    for (auto& v : input.data) v = rng.uniform();
    for (auto& v : mask.data) v = rng.uniform() < 0.6 ? 1.0 : 0.0;
    const double lambda = 1.7;
    const auto loss = occlusion_recon_loss(rendered, input, mask, lambda);
    Rng pick(14);
    const double h = 1e-6;
    for (int k = 0; k < 10; ++k) {
        const size_t idx = pick.uniform_index(rendered.data.size());
        Image plus = rendered, minus = rendered;
        plus.data[idx] += h;
        minus.data[idx] -= h;
        const double fd = (occlusion_recon_loss(plus, input, mask, lambda).value -
                           occlusion_recon_loss(minus, input, mask, lambda).value) /
                          (2.0 * h);
        CHECK(rel_error(loss.grad.data[idx], fd, 1e-10) < 1e-4);
    }
}

TEST_CASE("chamfer_rgb_loss: unit-corner fixture returns exactly 6") {
    const std::vector<Vec3> a = {Vec3(0, 0, 0)};
    const std::vector<Vec3> b = {Vec3(1, 1, 1)};
    const auto loss = chamfer_rgb_loss(a, b);
    CHECK(loss.value == 6.0);
}

TEST_CASE("chamfer_rgb_loss: identical sets give zero; symmetric value") {
    Rng rng(15);
    std::vector<Vec3> a(50);
    for (auto& p : a) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    CHECK(chamfer_rgb_loss(a, a).value == 0.0);

    std::vector<Vec3> b(70);
    for (auto& p : b) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    CHECK(chamfer_rgb_loss(a, b).value == chamfer_rgb_loss(b, a).value);
}

TEST_CASE("chamfer_rgb_loss: bit-exact against the brute-force oracle") {
    Rng rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(200));
        const int m = 1 + static_cast<int>(rng.uniform_index(200));
        std::vector<Vec3> a(n), b(m);
        for (auto& p : a) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
        for (auto& p : b) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
        const auto loss = chamfer_rgb_loss(a, b);
        CHECK(loss.value == brute_force_chamfer_rgb(a, b));
    }
}

TEST_CASE("chamfer_rgb_loss: gradient matches finite differences") {
    Rng rng(17);
    std::vector<Vec3> a(20), b(30);
    for (auto& p : a) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    for (auto& p : b) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    const auto loss = chamfer_rgb_loss(a, b);
    const double h = 1e-7;
    Rng pick(18);
    for (int k = 0; k < 10; ++k) {
        const size_t i = pick.uniform_index(a.size());
        const int axis = static_cast<int>(pick.uniform_index(3));
        auto plus = a, minus = a;
        plus[i][axis] += h;
        minus[i][axis] -= h;
        const double fd =
            (chamfer_rgb_loss(plus, b).value - chamfer_rgb_loss(minus, b).value) / (2.0 * h);
        CHECK(rel_error(loss.d_render[i][axis], fd, 1e-9) < 1e-4);
    }
}

TEST_CASE("chamfer_rgb_loss: empty set throws") {
    std::vector<Vec3> empty;
    std::vector<Vec3> one = {Vec3(0.5, 0.5, 0.5)};
    CHECK_THROWS_AS(chamfer_rgb_loss(empty, one), EmptySet);
    CHECK_THROWS_AS(chamfer_rgb_loss(one, empty), EmptySet);
}

TEST_CASE("lambda_norm_schedule: anchor values and range checks") {
    const double base = 1e4;
    const int t_coarse = 500, t_fine = 500;
    CHECK(lambda_norm_schedule(0, t_coarse, t_fine, base) == base);
    CHECK(lambda_norm_schedule(t_coarse, t_coarse, t_fine, base) == base);
    CHECK(lambda_norm_schedule(t_coarse / 2, t_coarse, t_fine, base) ==
          doctest::Approx(base / 2.0));
    CHECK_THROWS_AS(lambda_norm_schedule(-1, t_coarse, t_fine, base), OutOfRange);
    CHECK_THROWS_AS(lambda_norm_schedule(t_coarse + t_fine, t_coarse, t_fine, base), OutOfRange);
}

TEST_CASE("l1_distance_transform is exact against brute force") {
    Rng rng(19);
    const int h = 16, w = 16;
    std::vector<uint8_t> seeds(h * w, 0);
    for (auto& s : seeds) s = rng.uniform() < 0.1;
    bool any = false;
    for (auto s : seeds) any |= (s != 0);
    if (!any) seeds[37] = 1;
    const auto dt = l1_distance_transform(seeds, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double best = std::numeric_limits<double>::infinity();
            for (int sy = 0; sy < h; ++sy)
                for (int sx = 0; sx < w; ++sx)
                    if (seeds[static_cast<size_t>(sy) * w + sx])
                        best = std::min(best,
                                        static_cast<double>(std::abs(y - sy) + std::abs(x - sx)));
            CHECK(dt[static_cast<size_t>(y) * w + x] == best);
        }
}

TEST_CASE("LossReport: total equals the weighted sum of terms") {
    LossReport report;
    report.add("a", 2.0, 3.0);
    report.add("b", 0.5, 10.0);
    double expected = 0.0;
    for (const auto& [name, weighted] : report.weighted) expected += weighted;
    CHECK(report.total == doctest::Approx(expected).epsilon(1e-9));
    CHECK(report.total == doctest::Approx(11.0));
}
