#include "tetrec/errors.hpp"
#include "tetrec/marching_tet.hpp"
#include "tetrec/rng.hpp"
#include "tetrec/tet_grid.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace tetrec;
using namespace tetrec::testing;

namespace {

TetGrid single_tet() {
    TetGrid grid;
    grid.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    grid.tets = {{0, 1, 2, 3}};
    grid.surface_mask = {0};
    return grid;
}

} // namespace

TEST_CASE("marching_tet: all-positive SDF gives an empty mesh") {
    const TetGrid grid = build_box_grid(Vec3(0, 0, 0), Vec3(0.25, 0.25, 0.25), 8);
    std::vector<double> sdf(grid.vertices.size(), 0.5);
    const MtOutput out = marching_tet(grid, sdf);
    CHECK(out.mesh.vertices.empty());
    CHECK(out.mesh.faces.empty());
}

TEST_CASE("marching_tet: single-tet case counts") {
    const TetGrid grid = single_tet();
    SUBCASE("one negative vertex -> 1 triangle") {
        const MtOutput out = marching_tet(grid, {-1.0, 1.0, 1.0, 1.0});
        CHECK(out.mesh.face_count() == 1);
        CHECK(out.mesh.vertex_count() == 3);
    }
    SUBCASE("two negative vertices -> 2 triangles") {
        const MtOutput out = marching_tet(grid, {-1.0, -1.0, 1.0, 1.0});
        CHECK(out.mesh.face_count() == 2);
        CHECK(out.mesh.vertex_count() == 4);
    }
    SUBCASE("length mismatch throws") {
        CHECK_THROWS_AS(marching_tet(grid, {1.0, 2.0}), LengthMismatch);
    }
}

TEST_CASE("marching_tet: crossing interpolation and its Jacobian") {
    const TetGrid grid = single_tet();
    const MtOutput out = marching_tet(grid, {-1.0, 1.0, 1.0, 1.0});
    // the crossing on edge (0,1) must sit at the midpoint
    bool found = false;
    for (int i = 0; i < out.mesh.vertex_count(); ++i) {
        const auto& prov = out.provenance[i];
        if (prov.edge_a == 0 && prov.edge_b == 1) {
            found = true;
            CHECK(out.mesh.vertices[i] == Vec3(0.5, 0.0, 0.0));
            CHECK(prov.t == doctest::Approx(0.5));
            // d x / d s_a = -s_b / (s_a - s_b)^2 * (v_b - v_a).x = -0.25
            CHECK(out.d_pos_d_sa[i].x() == doctest::Approx(-0.25));
            CHECK(out.d_pos_d_sb[i].x() == doctest::Approx(-0.25));
        }
    }
    CHECK(found);
}

TEST_CASE("marching_tet: provenance edges straddle the surface, t in (0,1)") {
    const TetGrid grid = build_box_grid(Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5), 8);
    std::vector<double> sdf(grid.vertices.size());
    for (size_t i = 0; i < grid.vertices.size(); ++i) sdf[i] = grid.vertices[i].norm() - 0.3;
    const MtOutput out = marching_tet(grid, sdf);
    REQUIRE(out.mesh.vertex_count() > 0);
    for (int i = 0; i < out.mesh.vertex_count(); ++i) {
        const auto& prov = out.provenance[i];
        CHECK(sdf[prov.edge_a] * sdf[prov.edge_b] < 0.0);
        CHECK(prov.t > 0.0);
        CHECK(prov.t < 1.0);
        const Vec3 expected = (1.0 - prov.t) * grid.vertices[prov.edge_a] +
                              prov.t * grid.vertices[prov.edge_b];
        CHECK((out.mesh.vertices[i] - expected).norm() < 1e-12);
    }
}

TEST_CASE("marching_tet: sphere isosurface is watertight, genus 0, on-radius") {
    const TetGrid grid = build_box_grid(Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5), 32);
    std::vector<double> sdf(grid.vertices.size());
    for (size_t i = 0; i < grid.vertices.size(); ++i) sdf[i] = grid.vertices[i].norm() - 0.3;
    const MtOutput out = marching_tet(grid, sdf);
    REQUIRE(out.mesh.face_count() > 0);
    CHECK(out.mesh.is_closed());
    CHECK(euler_characteristic(out.mesh) == 2);
    const double finest_edge = max_edge_length(grid);
    for (const auto& v : out.mesh.vertices) CHECK(std::abs(v.norm() - 0.3) < finest_edge);

    // orientation: normals point toward positive SDF (outward)
    for (int f = 0; f < out.mesh.face_count(); ++f) {
        const auto& t = out.mesh.faces[f];
        const Vec3 centroid = (out.mesh.vertices[t[0]] + out.mesh.vertices[t[1]] +
                               out.mesh.vertices[t[2]]) /
                              3.0;
        CHECK(out.mesh.face_normal(f).dot(centroid.normalized()) > 0.0);
    }
}

TEST_CASE("marching_tet: topology invariant under sign-preserving perturbation") {
    const TetGrid grid = build_box_grid(Vec3(-0.4, -0.4, -0.4), Vec3(0.4, 0.4, 0.4), 8);
    std::vector<double> sdf(grid.vertices.size());
    for (size_t i = 0; i < grid.vertices.size(); ++i) sdf[i] = grid.vertices[i].norm() - 0.25;
    const MtOutput a = marching_tet(grid, sdf);

    Rng rng(14);
    std::vector<double> perturbed = sdf;
    for (auto& s : perturbed) {
        const double scale = 0.2 * std::abs(s);
        s += rng.uniform(-scale, scale); // never crosses zero
    }
    const MtOutput b = marching_tet(grid, perturbed);
    REQUIRE(a.mesh.face_count() == b.mesh.face_count());
    CHECK(a.mesh.faces == b.mesh.faces);
    for (int i = 0; i < a.mesh.vertex_count(); ++i) {
        CHECK(a.provenance[i].edge_a == b.provenance[i].edge_a);
        CHECK(a.provenance[i].edge_b == b.provenance[i].edge_b);
    }
}

TEST_CASE("mt_backward: zero upstream gives zero gradient") {
    const TetGrid grid = single_tet();
    const MtOutput out = marching_tet(grid, {-1.0, 1.0, 1.0, 1.0});
    const auto grads = mt_backward(out, std::vector<Vec3>(out.mesh.vertex_count(), Vec3::Zero()));
    for (double g : grads) CHECK(g == 0.0);
}

TEST_CASE("mt_backward: matches finite differences on a random grid") {
    const TetGrid grid = build_box_grid(Vec3(-0.4, -0.4, -0.4), Vec3(0.4, 0.4, 0.4), 6);
    Rng rng(2718);
    std::vector<double> sdf(grid.vertices.size());
    for (auto& s : sdf) s = rng.uniform(-0.6, 0.6);

    const MtOutput out = marching_tet(grid, sdf);
    REQUIRE(out.mesh.vertex_count() > 10);

    std::vector<Vec3> upstream(out.mesh.vertex_count());
    for (auto& u : upstream) u = Vec3(rng.normal(), rng.normal(), rng.normal());
    const auto analytic = mt_backward(out, upstream);

    auto scalar = [&](const std::vector<double>& s) {
        const MtOutput o = marching_tet(grid, s);
        double acc = 0.0;
        for (int i = 0; i < o.mesh.vertex_count(); ++i) acc += upstream[i].dot(o.mesh.vertices[i]);
        return acc;
    };

    // probe entries that actually touch the surface
    std::vector<int> active;
    for (size_t i = 0; i < analytic.size(); ++i)
        if (analytic[i] != 0.0) active.push_back(static_cast<int>(i));
    REQUIRE(active.size() > 20);

    const double h = 1e-7;
    for (int k = 0; k < 30; ++k) {
        const int idx = active[rng.uniform_index(active.size())];
        std::vector<double> plus = sdf, minus = sdf;
        plus[idx] += h;
        minus[idx] -= h;
        const double fd = (scalar(plus) - scalar(minus)) / (2.0 * h);
        CHECK(rel_error(analytic[idx], fd, 1e-9) < 1e-4);
    }
}

TEST_CASE("mt_backward: exact transpose of the forward linearization") {
    const TetGrid grid = build_box_grid(Vec3(-0.3, -0.3, -0.3), Vec3(0.3, 0.3, 0.3), 5);
    Rng rng(5150);
    std::vector<double> sdf(grid.vertices.size());
    for (auto& s : sdf) s = rng.uniform(-0.5, 0.5);
    const MtOutput out = marching_tet(grid, sdf);
    REQUIRE(out.mesh.vertex_count() > 0);

    std::vector<Vec3> u(out.mesh.vertex_count());
    for (auto& v : u) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    std::vector<double> delta(sdf.size());
    for (auto& d : delta) d = rng.normal();

    // u^T J delta via the backward path
    const auto jt_u = mt_backward(out, u);
    double lhs = 0.0;
    for (size_t i = 0; i < delta.size(); ++i) lhs += jt_u[i] * delta[i];

    // via the forward Jacobian rows
    double rhs = 0.0;
    for (int i = 0; i < out.mesh.vertex_count(); ++i) {
        const auto& prov = out.provenance[i];
        rhs += u[i].dot(out.d_pos_d_sa[i]) * delta[prov.edge_a];
        rhs += u[i].dot(out.d_pos_d_sb[i]) * delta[prov.edge_b];
    }
    CHECK(std::abs(lhs - rhs) < 1e-8 * std::max(1.0, std::abs(lhs)));
}

TEST_CASE("marching_tet: exact zeros are tie-broken positive") {
    const TetGrid grid = single_tet();
    // one exact zero: treated as +1e-10, so signs are (-,+,+,+) -> 1 triangle
    const MtOutput out = marching_tet(grid, {-1.0, 0.0, 1.0, 1.0});
    CHECK(out.mesh.face_count() == 1);
    for (int i = 0; i < out.mesh.vertex_count(); ++i) {
        CHECK(out.provenance[i].t > 0.0);
        CHECK(out.provenance[i].t < 1.0);
    }
}
