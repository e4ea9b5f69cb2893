#pragma once

// Shared test fixtures and independent oracles. Everything here must stay
// independent of the implementation paths it is used to check: brute-force
// scans, finite differences and analytic shapes only.

#include "tetrec/mesh.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <vector>

namespace tetrec::testing {

/// Unit icosphere: subdivided icosahedron, vertices normalized to radius r.
inline TriMesh make_icosphere(int subdivisions, double radius = 1.0) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1},
    };
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };
    for (auto& v : verts) v.normalize();

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        std::vector<std::array<int, 3>> next;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            const auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int id = static_cast<int>(verts.size());
            verts.push_back((0.5 * (verts[a] + verts[b])).normalized());
            midpoint[key] = id;
            return id;
        };
        for (const auto& f : faces) {
            const int m01 = mid(f[0], f[1]);
            const int m12 = mid(f[1], f[2]);
            const int m20 = mid(f[2], f[0]);
            next.push_back({f[0], m01, m20});
            next.push_back({f[1], m12, m01});
            next.push_back({f[2], m20, m12});
            next.push_back({m01, m12, m20});
        }
        faces = std::move(next);
    }

    TriMesh mesh;
    mesh.vertices = std::move(verts);
    for (auto& v : mesh.vertices) v *= radius;
    mesh.faces = std::move(faces);
    return mesh;
}

/// Central finite difference of a scalar function of one variable.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Relative error with an absolute floor.
inline double rel_error(double analytic, double numeric, double abs_floor = 1e-12) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
    return std::abs(analytic - numeric) / denom;
}

/// O(N*M) brute-force symmetric chamfer in RGB space; the oracle for the
/// accelerated loss. Uses the same squared-distance expression.
inline double brute_force_chamfer_rgb(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        double total = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                const double dx = p.x() - q.x();
                const double dy = p.y() - q.y();
                const double dz = p.z() - q.z();
                const double d2 = dx * dx + dy * dy + dz * dz;
                if (d2 < best) best = d2;
            }
            total += best;
        }
        return total;
    };
    return one_way(a, b) + one_way(b, a);
}

/// Watertight Moller-Trumbore ray/triangle hit test (used by the independent
/// ray-casting rasterizer oracle).
inline bool ray_hits_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                              const Vec3& c, double& t_out, bool& front_facing) {
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) return false;
    const double inv_det = 1.0 / det;
    const Vec3 s = origin - a;
    const double u = s.dot(p) * inv_det;
    if (u < 0.0 || u > 1.0) return false;
    const Vec3 q = s.cross(e1);
    const double v = dir.dot(q) * inv_det;
    if (v < 0.0 || u + v > 1.0) return false;
    const double t = e2.dot(q) * inv_det;
    if (t <= 1e-9) return false;
    t_out = t;
    front_facing = e1.cross(e2).dot(dir) < 0.0;
    return true;
}

} // namespace tetrec::testing
