#include "tetrec/mesh_query.hpp"

#include "tetrec/errors.hpp"
#include "tetrec/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tetrec {

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Ericson, Real-Time Collision Detection, 5.1.5.
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return a + v * ab;
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return a + w * ac;
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return a + ab * v + ac * w;
}

struct MeshDistanceQuery::Node {
    Vec3 lo, hi;
    int left = -1;   // child node index, or -1 for leaf
    int right = -1;
    int begin = 0;   // leaf triangle range in triangle_order_
    int end = 0;
};

namespace {
double box_distance_sq(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    double d = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double v = p[k] < lo[k] ? lo[k] - p[k] : (p[k] > hi[k] ? p[k] - hi[k] : 0.0);
        d += v * v;
    }
    return d;
}
} // namespace

MeshDistanceQuery::MeshDistanceQuery(const TriMesh& mesh) : mesh_(&mesh) {
    if (mesh.faces.empty()) throw EmptyMesh("distance query over an empty mesh");
    closed_ = mesh.is_closed();
    triangle_order_.resize(mesh.faces.size());
    std::iota(triangle_order_.begin(), triangle_order_.end(), 0);

    std::vector<Vec3> centroids(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& t = mesh.faces[f];
        centroids[f] = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
    }

    struct BuildItem {
        int node;
        int begin, end;
    };
    nodes_.reserve(2 * mesh.faces.size());
    nodes_.push_back({});
    std::vector<BuildItem> stack{{0, 0, static_cast<int>(mesh.faces.size())}};
    constexpr int kLeafSize = 8;

    while (!stack.empty()) {
        const BuildItem item = stack.back();
        stack.pop_back();
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        for (int i = item.begin; i < item.end; ++i) {
            const auto& t = mesh.faces[triangle_order_[i]];
            for (int k = 0; k < 3; ++k) {
                lo = lo.cwiseMin(mesh.vertices[t[k]]);
                hi = hi.cwiseMax(mesh.vertices[t[k]]);
            }
        }
        Node& node = nodes_[item.node];
        node.lo = lo;
        node.hi = hi;
        if (item.end - item.begin <= kLeafSize) {
            node.begin = item.begin;
            node.end = item.end;
            continue;
        }
        const Vec3 extent = hi - lo;
        int axis = 0;
        if (extent[1] > extent[axis]) axis = 1;
        if (extent[2] > extent[axis]) axis = 2;
        const int mid = (item.begin + item.end) / 2;
        std::nth_element(triangle_order_.begin() + item.begin, triangle_order_.begin() + mid,
                         triangle_order_.begin() + item.end, [&](int fa, int fb) {
                             if (centroids[fa][axis] != centroids[fb][axis])
                                 return centroids[fa][axis] < centroids[fb][axis];
                             return fa < fb;
                         });
        const int left = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        const int right = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        nodes_[item.node].left = left;
        nodes_[item.node].right = right;
        stack.push_back({left, item.begin, mid});
        stack.push_back({right, mid, item.end});
    }
}

MeshDistanceQuery::~MeshDistanceQuery() = default;
MeshDistanceQuery::MeshDistanceQuery(MeshDistanceQuery&&) noexcept = default;
MeshDistanceQuery& MeshDistanceQuery::operator=(MeshDistanceQuery&&) noexcept = default;

double MeshDistanceQuery::unsigned_distance(const Vec3& p, Vec3* closest, int* triangle) const {
    double best_sq = std::numeric_limits<double>::infinity();
    Vec3 best_point = Vec3::Zero();
    int best_tri = -1;

    // Small explicit stack ordered by node distance.
    std::vector<std::pair<double, int>> stack;
    stack.reserve(64);
    stack.push_back({box_distance_sq(p, nodes_[0].lo, nodes_[0].hi), 0});
    while (!stack.empty()) {
        const auto [dist_sq, node_idx] = stack.back();
        stack.pop_back();
        if (dist_sq >= best_sq) continue;
        const Node& node = nodes_[node_idx];
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int f = triangle_order_[i];
                const auto& t = mesh_->faces[f];
                const Vec3 q = closest_point_on_triangle(p, mesh_->vertices[t[0]],
                                                         mesh_->vertices[t[1]],
                                                         mesh_->vertices[t[2]]);
                const double d = (p - q).squaredNorm();
                if (d < best_sq || (d == best_sq && f < best_tri)) {
                    best_sq = d;
                    best_point = q;
                    best_tri = f;
                }
            }
            continue;
        }
        const double dl = box_distance_sq(p, nodes_[node.left].lo, nodes_[node.left].hi);
        const double dr = box_distance_sq(p, nodes_[node.right].lo, nodes_[node.right].hi);
        // push farther first so the nearer child is processed next
        if (dl < dr) {
            if (dr < best_sq) stack.push_back({dr, node.right});
            if (dl < best_sq) stack.push_back({dl, node.left});
        } else {
            if (dl < best_sq) stack.push_back({dl, node.left});
            if (dr < best_sq) stack.push_back({dr, node.right});
        }
    }
    if (closest) *closest = best_point;
    if (triangle) *triangle = best_tri;
    return std::sqrt(best_sq);
}

double MeshDistanceQuery::winding_number(const Vec3& p) const {
    // Exact sum of signed solid angles (Van Oosterom & Strackee).
    double total = 0.0;
    for (const auto& t : mesh_->faces) {
        const Vec3 a = mesh_->vertices[t[0]] - p;
        const Vec3 b = mesh_->vertices[t[1]] - p;
        const Vec3 c = mesh_->vertices[t[2]] - p;
        const double la = a.norm(), lb = b.norm(), lc = c.norm();
        const double numerator = a.dot(b.cross(c));
        const double denominator =
            la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
        total += 2.0 * std::atan2(numerator, denominator);
    }
    return total / (4.0 * M_PI);
}

SdfQueryResult signed_distance(const TriMesh& mesh, const std::vector<Vec3>& points) {
    MeshDistanceQuery query(mesh);
    SdfQueryResult result;
    result.open_mesh_heuristic = !query.mesh_is_closed();
    result.samples.resize(points.size());

    parallel_for(static_cast<int64_t>(points.size()), [&](int64_t i) {
        const Vec3& p = points[i];
        Vec3 closest;
        int tri = -1;
        const double d = query.unsigned_distance(p, &closest, &tri);
        bool inside;
        if (!result.open_mesh_heuristic) {
            inside = query.winding_number(p) > 0.5;
        } else {
            // Open mesh: sign from the nearest triangle's normal direction.
            inside = mesh.face_normal(tri).dot(p - closest) < 0.0;
        }
        result.samples[i] = {p, inside ? -d : d};
    });
    return result;
}

} // namespace tetrec
