#include "tetrec/render.hpp"

#include "tetrec/errors.hpp"
#include "tetrec/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace tetrec {

void Camera::validate() const {
    if ((eye - target).squaredNorm() == 0.0) throw PreconditionError("camera eye == target");
    if (!(vertical_fov > 0.0 && vertical_fov < M_PI))
        throw PreconditionError("camera fov out of (0, pi)");
    if (width < 1 || height < 1) throw PreconditionError("camera resolution must be positive");
}

void Camera::frame(Vec3& right, Vec3& up_out, Vec3& back) const {
    const Vec3 forward = (target - eye).normalized();
    right = forward.cross(up).normalized();
    up_out = right.cross(forward);
    back = -forward;
}

Vec3 Camera::to_camera(const Vec3& p) const {
    Vec3 right, up2, back;
    frame(right, up2, back);
    const Vec3 q = p - eye;
    return Vec3(q.dot(right), q.dot(up2), q.dot(back));
}

bool Camera::project(const Vec3& cam, double& sx, double& sy, double& depth) const {
    depth = -cam.z();
    if (depth <= 0.0) return false;
    const double half_h = std::tan(0.5 * vertical_fov);
    const double aspect = static_cast<double>(width) / height;
    const double half_w = half_h * aspect;
    sx = 0.5 * width + (0.5 * width) * (cam.x() / (depth * half_w));
    sy = 0.5 * height - (0.5 * height) * (cam.y() / (depth * half_h));
    return true;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

uint64_t mesh_fingerprint(const TriMesh& mesh) {
    uint64_t h = 0x9e3779b97f4a7c15ULL * (mesh.vertices.size() + 1);
    h ^= 0xbf58476d1ce4e5b9ULL * (mesh.faces.size() + 1);
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const auto& v = mesh.vertices[i];
        uint64_t x = std::bit_cast<uint64_t>(v.x()) ^ (std::bit_cast<uint64_t>(v.y()) << 1) ^
                     (std::bit_cast<uint64_t>(v.z()) << 2);
        h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
}

struct ScreenVertex {
    double x = 0.0, y = 0.0;
    double depth = 0.0;   // positive view depth
    double inv_depth = 0.0;
    Vec3 cam = Vec3::Zero();
    bool valid = false;
};

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

/// 1D squared distance transform (Felzenszwalb & Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n,
            std::vector<int>& v, std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

/// 2D squared Euclidean distance transform of seed pixels (seed -> 0).
std::vector<double> edt_2d(const std::vector<uint8_t>& seed, int h, int w) {
    std::vector<double> grid(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < grid.size(); ++i) grid[i] = seed[i] ? 0.0 : kInf;

    const int n = std::max(h, w);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = grid[static_cast<size_t>(y) * w + x];
        edt_1d(f, d, h, v, z);
        for (int y = 0; y < h; ++y) grid[static_cast<size_t>(y) * w + x] = d[y];
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = grid[static_cast<size_t>(y) * w + x];
        edt_1d(f, d, w, v, z);
        for (int x = 0; x < w; ++x) grid[static_cast<size_t>(y) * w + x] = d[x];
    }
    return grid;
}

struct FaceScreen {
    bool drawable = false; // all vertices in front of near plane and front-facing
    double area2 = 0.0;
    int min_x = 0, max_x = -1, min_y = 0, max_y = -1;
};

struct DistanceFeature {
    double d = 0.0;      // signed screen distance, positive inside
    int type = 0;        // 0 = edge, 1 = vertex
    int a = 0, b = 0;    // local vertex indices of the feature
};

/// Signed distance from pixel P to the screen triangle, positive inside.
DistanceFeature signed_distance_to_triangle(double px, double py, const ScreenVertex* sv,
                                            bool& inside_out) {
    static constexpr int kEdge[3][2] = {{0, 1}, {1, 2}, {2, 0}};
    double best_sq = kInf;
    int best_edge = -1;
    double best_tau = 0.0;
    int sign_neg = 0, sign_pos = 0;
    for (int e = 0; e < 3; ++e) {
        const ScreenVertex& A = sv[kEdge[e][0]];
        const ScreenVertex& B = sv[kEdge[e][1]];
        const double ex = B.x - A.x, ey = B.y - A.y;
        const double pxa = px - A.x, pya = py - A.y;
        const double cr = cross2(ex, ey, pxa, pya);
        if (cr <= 0.0) ++sign_neg;
        if (cr >= 0.0) ++sign_pos;
        const double len_sq = ex * ex + ey * ey;
        double tau = len_sq > 0.0 ? (pxa * ex + pya * ey) / len_sq : 0.0;
        tau = std::clamp(tau, 0.0, 1.0);
        const double cx = A.x + tau * ex, cy = A.y + tau * ey;
        const double dsq = (px - cx) * (px - cx) + (py - cy) * (py - cy);
        if (dsq < best_sq) {
            best_sq = dsq;
            best_edge = e;
            best_tau = tau;
        }
    }
    // Front faces have negative screen area: inside means every edge cross
    // product is <= 0.
    const bool inside = (sign_neg == 3) || (sign_pos == 3);
    inside_out = inside;

    DistanceFeature feature;
    const double dist = std::sqrt(best_sq);
    feature.d = inside ? dist : -dist;
    if (!inside && (best_tau == 0.0 || best_tau == 1.0)) {
        feature.type = 1;
        feature.a = best_tau == 0.0 ? kEdge[best_edge][0] : kEdge[best_edge][1];
        feature.b = feature.a;
    } else {
        feature.type = 0;
        feature.a = kEdge[best_edge][0];
        feature.b = kEdge[best_edge][1];
    }
    return feature;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

RenderBuffers rasterize(const TriMesh& mesh, const Camera& camera, const RasterOptions& options) {
    camera.validate();
    const int H = camera.height, W = camera.width;
    RenderBuffers buf;
    buf.height = H;
    buf.width = W;
    buf.camera = camera;
    buf.options = options;
    buf.position = Image(H, W, 3, 0.0);
    buf.normal = Image(H, W, 3, 0.0);
    buf.albedo = Image(H, W, 3, 0.0);
    buf.mask = Image(H, W, 1, 0.0);
    buf.depth = Image(H, W, 1, kInf);
    buf.bary = Image(H, W, 3, 0.0);
    buf.soft_product = Image(H, W, 1, 1.0);
    buf.face_id.assign(static_cast<size_t>(H) * W, -1);
    buf.mesh_fingerprint = mesh_fingerprint(mesh);

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                buf.normal.at(y, x, c) = options.background_normal[c];
                buf.albedo.at(y, x, c) = options.background_albedo[c];
            }
    if (mesh.faces.empty()) return buf;

    // Project vertices.
    const size_t nv = mesh.vertices.size();
    std::vector<ScreenVertex> screen(nv);
    for (size_t i = 0; i < nv; ++i) {
        ScreenVertex& s = screen[i];
        s.cam = camera.to_camera(mesh.vertices[i]);
        s.depth = -s.cam.z();
        if (s.depth > options.near_clip) {
            camera.project(s.cam, s.x, s.y, s.depth);
            s.inv_depth = 1.0 / s.depth;
            s.valid = true;
        }
    }

    // Camera-space unit vertex normals.
    Vec3 right, up2, back;
    camera.frame(right, up2, back);
    const auto& world_normals = mesh.vertex_normals();
    std::vector<Vec3> cam_normals(nv);
    for (size_t i = 0; i < nv; ++i) {
        const Vec3& n = world_normals[i];
        cam_normals[i] = Vec3(n.dot(right), n.dot(up2), n.dot(back));
    }

    const size_t nf = mesh.faces.size();
    std::vector<FaceScreen> face_screen(nf);
    for (size_t f = 0; f < nf; ++f) {
        const auto& t = mesh.faces[f];
        if (!screen[t[0]].valid || !screen[t[1]].valid || !screen[t[2]].valid) continue;
        const ScreenVertex& a = screen[t[0]];
        const ScreenVertex& b = screen[t[1]];
        const ScreenVertex& c = screen[t[2]];
        const double area2 = cross2(b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
        if (area2 >= 0.0) continue; // back-facing or degenerate
        FaceScreen& fs = face_screen[f];
        fs.drawable = true;
        fs.area2 = area2;
        fs.min_x = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}) - 0.5)));
        fs.max_x = std::min(W - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}) - 0.5)));
        fs.min_y = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
        fs.max_y = std::min(H - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}) - 0.5)));
    }

    // Hard pass, parallel over row strips; faces stay in index order inside a
    // strip so z-ties resolve deterministically.
    const int n_strips = std::min(H, std::max(1, thread_count()));
    const int rows_per = (H + n_strips - 1) / n_strips;
    std::vector<std::vector<int>> strip_faces(n_strips);
    for (size_t f = 0; f < nf; ++f) {
        if (!face_screen[f].drawable) continue;
        const int s0 = face_screen[f].min_y / rows_per;
        const int s1 = face_screen[f].max_y / rows_per;
        for (int s = s0; s <= s1 && s < n_strips; ++s) strip_faces[s].push_back(static_cast<int>(f));
    }

    parallel_for(n_strips, [&](int64_t strip) {
        const int y_begin = static_cast<int>(strip) * rows_per;
        const int y_end = std::min(H, y_begin + rows_per);
        for (int f : strip_faces[strip]) {
            const auto& t = mesh.faces[f];
            const ScreenVertex& A = screen[t[0]];
            const ScreenVertex& B = screen[t[1]];
            const ScreenVertex& C = screen[t[2]];
            const FaceScreen& fs = face_screen[f];
            const double inv_area = 1.0 / fs.area2;
            for (int y = std::max(fs.min_y, y_begin); y <= std::min(fs.max_y, y_end - 1); ++y) {
                const double py = y + 0.5;
                for (int x = fs.min_x; x <= fs.max_x; ++x) {
                    const double px = x + 0.5;
                    const double w0 = cross2(C.x - B.x, C.y - B.y, px - B.x, py - B.y);
                    const double w1 = cross2(A.x - C.x, A.y - C.y, px - C.x, py - C.y);
                    const double w2 = cross2(B.x - A.x, B.y - A.y, px - A.x, py - A.y);
                    if (w0 > 0.0 || w1 > 0.0 || w2 > 0.0) continue; // outside front face
                    const double l0 = w0 * inv_area, l1 = w1 * inv_area, l2 = w2 * inv_area;
                    const double inv_d = l0 * A.inv_depth + l1 * B.inv_depth + l2 * C.inv_depth;
                    const double depth = 1.0 / inv_d;
                    if (depth >= buf.depth.at(y, x, 0)) continue;
                    buf.depth.at(y, x, 0) = depth;
                    buf.face_id[static_cast<size_t>(y) * W + x] = f;
                    // perspective-correct barycentrics
                    const double m0 = l0 * A.inv_depth * depth;
                    const double m1 = l1 * B.inv_depth * depth;
                    const double m2 = l2 * C.inv_depth * depth;
                    buf.bary.at(y, x, 0) = m0;
                    buf.bary.at(y, x, 1) = m1;
                    buf.bary.at(y, x, 2) = m2;
                }
            }
        }
    });

    // Fill covered-pixel channels.
    parallel_for(static_cast<int64_t>(H) * W, [&](int64_t p) {
        const int y = static_cast<int>(p) / W;
        const int x = static_cast<int>(p) % W;
        const int32_t f = buf.face_id[p];
        if (f < 0) return;
        const auto& t = mesh.faces[f];
        const double m0 = buf.bary.at(y, x, 0), m1 = buf.bary.at(y, x, 1),
                     m2 = buf.bary.at(y, x, 2);
        const Vec3 pos = m0 * mesh.vertices[t[0]] + m1 * mesh.vertices[t[1]] +
                         m2 * mesh.vertices[t[2]];
        Vec3 n = m0 * cam_normals[t[0]] + m1 * cam_normals[t[1]] + m2 * cam_normals[t[2]];
        const double len = n.norm();
        if (len > 0.0) n /= len;
        for (int c = 0; c < 3; ++c) {
            buf.position.at(y, x, c) = pos[c];
            buf.normal.at(y, x, c) = n[c];
        }
    });

    // Soft mask: exact SoftRas product in a band around the silhouette,
    // saturated to 0/1 outside the band where the sigmoid has flattened out.
    const double band = 6.0 * options.sigma_px + 2.0;
    std::vector<uint8_t> covered(static_cast<size_t>(H) * W), uncovered(covered.size());
    for (size_t p = 0; p < covered.size(); ++p) {
        covered[p] = buf.face_id[p] >= 0;
        uncovered[p] = !covered[p];
    }
    const auto dt_to_covered = edt_2d(covered, H, W);
    const auto dt_to_uncovered = edt_2d(uncovered, H, W);
    std::vector<uint8_t> in_band(covered.size());
    for (size_t p = 0; p < covered.size(); ++p) {
        const double dist =
            covered[p] ? std::sqrt(dt_to_uncovered[p]) : std::sqrt(dt_to_covered[p]);
        in_band[p] = dist <= band;
        if (!in_band[p]) {
            buf.mask.data[p] = covered[p] ? 1.0 : 0.0;
            buf.soft_product.data[p] = covered[p] ? 0.0 : 1.0;
        }
    }

    const int pad = static_cast<int>(std::ceil(band));
    for (size_t f = 0; f < nf; ++f) {
        if (!face_screen[f].drawable) continue;
        const auto& t = mesh.faces[f];
        ScreenVertex sv[3] = {screen[t[0]], screen[t[1]], screen[t[2]]};
        const FaceScreen& fs = face_screen[f];
        const int x0 = std::max(0, fs.min_x - pad), x1 = std::min(W - 1, fs.max_x + pad);
        const int y0 = std::max(0, fs.min_y - pad), y1 = std::min(H - 1, fs.max_y + pad);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const size_t p = static_cast<size_t>(y) * W + x;
                if (!in_band[p]) continue;
                bool inside = false;
                const auto feat =
                    signed_distance_to_triangle(x + 0.5, y + 0.5, sv, inside);
                const double s = sigmoid(feat.d / options.sigma_px);
                if (s < 1e-12) continue;
                buf.soft_product.data[p] *= (1.0 - s);
            }
    }
    for (size_t p = 0; p < covered.size(); ++p)
        if (in_band[p]) buf.mask.data[p] = 1.0 - buf.soft_product.data[p];

    return buf;
}

RenderGrads rasterize_backward(const RenderBuffers& buf, const TriMesh& mesh,
                               const RenderUpstream& upstream) {
    if (buf.mesh_fingerprint != mesh_fingerprint(mesh))
        throw StaleBuffers("render buffers were produced from a different mesh");
    const Camera& camera = buf.camera;
    const int H = buf.height, W = buf.width;
    auto check_shape = [&](const Image& img, int ch, const char* name) {
        if (img.size() == 0) return false;
        if (img.height != H || img.width != W || img.channels != ch)
            throw DimensionMismatch(std::string("upstream ") + name + " has wrong shape");
        return true;
    };
    const bool has_mask = check_shape(upstream.d_mask, 1, "mask");
    const bool has_normal = check_shape(upstream.d_normal, 3, "normal");
    const bool has_position = check_shape(upstream.d_position, 3, "position");

    RenderGrads grads;
    grads.d_vertices.assign(mesh.vertices.size(), Vec3::Zero());
    if (mesh.faces.empty()) return grads;

    const size_t nv = mesh.vertices.size();
    std::vector<ScreenVertex> screen(nv);
    for (size_t i = 0; i < nv; ++i) {
        ScreenVertex& s = screen[i];
        s.cam = camera.to_camera(mesh.vertices[i]);
        s.depth = -s.cam.z();
        if (s.depth > buf.options.near_clip) {
            camera.project(s.cam, s.x, s.y, s.depth);
            s.inv_depth = 1.0 / s.depth;
            s.valid = true;
        }
    }
    Vec3 right, up2, back;
    camera.frame(right, up2, back);
    const auto& world_normals = mesh.vertex_normals();
    std::vector<Vec3> cam_normals(nv);
    for (size_t i = 0; i < nv; ++i) {
        const Vec3& n = world_normals[i];
        cam_normals[i] = Vec3(n.dot(right), n.dot(up2), n.dot(back));
    }

    std::vector<Vec3> cam_normal_grads(nv, Vec3::Zero());
    std::vector<Vec3> screen_grads(nv, Vec3::Zero()); // x, y components used
    std::vector<double> depth_grads(nv, 0.0);

    // Interior channels. The pixel-to-face assignment is fixed (no visibility
    // gradients), but the perspective-correct barycentrics are differentiated
    // w.r.t. the projected vertices, so attribute gradients see the full
    // interpolation Jacobian.
    if (has_normal || has_position) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const int32_t f = buf.face_at(y, x);
                if (f < 0) {
                    if (has_normal)
                        for (int c = 0; c < 3; ++c)
                            grads.d_background_normal[c] += upstream.d_normal.at(y, x, c);
                    continue;
                }
                const auto& t = mesh.faces[f];
                const double m[3] = {buf.bary.at(y, x, 0), buf.bary.at(y, x, 1),
                                     buf.bary.at(y, x, 2)};

                double g_mu[3] = {0.0, 0.0, 0.0};
                bool any_grad = false;
                if (has_position) {
                    const Vec3 u(upstream.d_position.at(y, x, 0), upstream.d_position.at(y, x, 1),
                                 upstream.d_position.at(y, x, 2));
                    if (u.squaredNorm() > 0.0) {
                        any_grad = true;
                        for (int k = 0; k < 3; ++k) {
                            grads.d_vertices[t[k]] += m[k] * u; // direct term (attr = v)
                            g_mu[k] += u.dot(mesh.vertices[t[k]]);
                        }
                    }
                }
                if (has_normal) {
                    const Vec3 u(upstream.d_normal.at(y, x, 0), upstream.d_normal.at(y, x, 1),
                                 upstream.d_normal.at(y, x, 2));
                    if (u.squaredNorm() > 0.0) {
                        Vec3 raw = m[0] * cam_normals[t[0]] + m[1] * cam_normals[t[1]] +
                                   m[2] * cam_normals[t[2]];
                        const double len = raw.norm();
                        if (len > 0.0) {
                            any_grad = true;
                            const Vec3 n = raw / len;
                            const Vec3 g = (u - n * n.dot(u)) / len;
                            for (int k = 0; k < 3; ++k) {
                                cam_normal_grads[t[k]] += m[k] * g;
                                g_mu[k] += g.dot(cam_normals[t[k]]);
                            }
                        }
                    }
                }
                if (!any_grad) continue;

                // mu_i = (lambda_i / d_i) / S with S = sum_j lambda_j / d_j
                const ScreenVertex* sv[3] = {&screen[t[0]], &screen[t[1]], &screen[t[2]]};
                const double px = x + 0.5, py = y + 0.5;
                double w_edge[3], area2;
                {
                    const auto& A = *sv[0];
                    const auto& B = *sv[1];
                    const auto& C = *sv[2];
                    w_edge[0] = cross2(C.x - B.x, C.y - B.y, px - B.x, py - B.y);
                    w_edge[1] = cross2(A.x - C.x, A.y - C.y, px - C.x, py - C.y);
                    w_edge[2] = cross2(B.x - A.x, B.y - A.y, px - A.x, py - A.y);
                    area2 = cross2(B.x - A.x, B.y - A.y, C.x - A.x, C.y - A.y);
                }
                if (area2 == 0.0) continue;
                double lambda[3], beta[3], S = 0.0;
                for (int k = 0; k < 3; ++k) {
                    lambda[k] = w_edge[k] / area2;
                    beta[k] = lambda[k] * sv[k]->inv_depth;
                    S += beta[k];
                }
                if (S == 0.0) continue;
                const double mu[3] = {beta[0] / S, beta[1] / S, beta[2] / S};
                double g_dot_mu = 0.0;
                for (int k = 0; k < 3; ++k) g_dot_mu += mu[k] * g_mu[k];
                double g_beta[3], g_lambda[3];
                for (int k = 0; k < 3; ++k) {
                    g_beta[k] = (g_mu[k] - g_dot_mu) / S;
                    g_lambda[k] = g_beta[k] * sv[k]->inv_depth;
                    // beta_k also depends on the vertex depth
                    depth_grads[t[k]] +=
                        g_beta[k] * (-lambda[k] * sv[k]->inv_depth * sv[k]->inv_depth);
                }

                // lambda partials w.r.t. the three screen positions:
                // w_i = cross2(v_{i+2} - v_{i+1}, P - v_{i+1})
                const double inv_area = 1.0 / area2;
                for (int i = 0; i < 3; ++i) {
                    if (g_lambda[i] == 0.0) continue;
                    const int j = (i + 1) % 3;
                    const int k = (i + 2) % 3;
                    // dw_i/dv_j, dw_i/dv_k (dw_i/dv_i = 0)
                    const double dwi_dj_x = sv[k]->y - py;
                    const double dwi_dj_y = px - sv[k]->x;
                    const double dwi_dk_x = py - sv[j]->y;
                    const double dwi_dk_y = sv[j]->x - px;
                    // darea2/dv_n = (v_{n+1}.y - v_{n+2}.y, v_{n+2}.x - v_{n+1}.x)
                    for (int n = 0; n < 3; ++n) {
                        const int n1 = (n + 1) % 3, n2 = (n + 2) % 3;
                        const double da_x = sv[n1]->y - sv[n2]->y;
                        const double da_y = sv[n2]->x - sv[n1]->x;
                        double dw_x = 0.0, dw_y = 0.0;
                        if (n == j) {
                            dw_x = dwi_dj_x;
                            dw_y = dwi_dj_y;
                        } else if (n == k) {
                            dw_x = dwi_dk_x;
                            dw_y = dwi_dk_y;
                        }
                        const double dl_x = (dw_x - lambda[i] * da_x) * inv_area;
                        const double dl_y = (dw_y - lambda[i] * da_y) * inv_area;
                        screen_grads[t[n]][0] += g_lambda[i] * dl_x;
                        screen_grads[t[n]][1] += g_lambda[i] * dl_y;
                    }
                }
            }
    }

    // Soft-mask gradients: dm/dd_f = Q * sigma_f / sigma_px at every band
    // pixel; the screen-distance derivative lands on the nearest edge or
    // vertex feature, then chains through the projection into world space.
    if (has_mask) {
        const double band = 6.0 * buf.options.sigma_px + 2.0;
        const int pad = static_cast<int>(std::ceil(band));
        for (size_t f = 0; f < mesh.faces.size(); ++f) {
            const auto& t = mesh.faces[f];
            if (!screen[t[0]].valid || !screen[t[1]].valid || !screen[t[2]].valid) continue;
            const ScreenVertex& A = screen[t[0]];
            const ScreenVertex& B = screen[t[1]];
            const ScreenVertex& C = screen[t[2]];
            const double area2 = cross2(B.x - A.x, B.y - A.y, C.x - A.x, C.y - A.y);
            if (area2 >= 0.0) continue;
            ScreenVertex sv[3] = {A, B, C};
            const int min_x =
                std::max(0, static_cast<int>(std::floor(std::min({A.x, B.x, C.x}) - 0.5)) - pad);
            const int max_x = std::min(
                W - 1, static_cast<int>(std::ceil(std::max({A.x, B.x, C.x}) - 0.5)) + pad);
            const int min_y =
                std::max(0, static_cast<int>(std::floor(std::min({A.y, B.y, C.y}) - 0.5)) - pad);
            const int max_y = std::min(
                H - 1, static_cast<int>(std::ceil(std::max({A.y, B.y, C.y}) - 0.5)) + pad);
            for (int y = min_y; y <= max_y; ++y)
                for (int x = min_x; x <= max_x; ++x) {
                    const size_t p = static_cast<size_t>(y) * W + x;
                    const double um = upstream.d_mask.data[p];
                    if (um == 0.0) continue;
                    const double Q = buf.soft_product.data[p];
                    if (Q == 0.0) continue;
                    // Outside the band the mask saturates; DT-based band
                    // membership is implied by Q in {0,1} handling above,
                    // but uncovered far pixels keep Q == 1: the sigmoid
                    // below is ~0 there, so the contribution vanishes.
                    bool inside = false;
                    const auto feat =
                        signed_distance_to_triangle(x + 0.5, y + 0.5, sv, inside);
                    const double s = sigmoid(feat.d / buf.options.sigma_px);
                    if (s < 1e-12) continue;
                    const double g_d = um * Q * s / buf.options.sigma_px;
                    if (feat.type == 1) {
                        // vertex feature: d = -|P - V|
                        const ScreenVertex& V = sv[feat.a];
                        const double rx = (x + 0.5) - V.x, ry = (y + 0.5) - V.y;
                        const double len = std::sqrt(rx * rx + ry * ry);
                        if (len > 0.0) {
                            screen_grads[t[feat.a]][0] += g_d * rx / len;
                            screen_grads[t[feat.a]][1] += g_d * ry / len;
                        }
                    } else {
                        // edge feature: signed line distance, orient makes
                        // inside positive (front faces: cross <= 0 inside)
                        const ScreenVertex& Ae = sv[feat.a];
                        const ScreenVertex& Be = sv[feat.b];
                        const double ex = Be.x - Ae.x, ey = Be.y - Ae.y;
                        const double pxa = (x + 0.5) - Ae.x, pya = (y + 0.5) - Ae.y;
                        const double elen = std::sqrt(ex * ex + ey * ey);
                        if (elen == 0.0) continue;
                        const double cr = cross2(ex, ey, pxa, pya);
                        const double orient = -1.0; // front faces wind negatively
                        // d = orient * cr / |e|
                        const double dA_x = orient * ((-pya + ey) / elen + cr * (-ex) / (elen * elen * elen) * -1.0);
                        const double dA_y = orient * ((pxa - ex) / elen + cr * (-ey) / (elen * elen * elen) * -1.0);
                        const double dB_x = orient * (pya / elen - cr * ex / (elen * elen * elen));
                        const double dB_y = orient * (-pxa / elen - cr * ey / (elen * elen * elen));
                        screen_grads[t[feat.a]][0] += g_d * dA_x;
                        screen_grads[t[feat.a]][1] += g_d * dA_y;
                        screen_grads[t[feat.b]][0] += g_d * dB_x;
                        screen_grads[t[feat.b]][1] += g_d * dB_y;
                    }
                }
        }
    }

    // Chain camera-space normal gradients into world-space position space.
    bool any_normal_grad = false;
    for (const auto& g : cam_normal_grads)
        if (g.squaredNorm() > 0.0) any_normal_grad = true;
    if (any_normal_grad) {
        std::vector<Vec3> world_normal_grads(nv);
        for (size_t i = 0; i < nv; ++i) {
            const Vec3& g = cam_normal_grads[i];
            world_normal_grads[i] = g.x() * right + g.y() * up2 + g.z() * back;
        }
        vertex_normals_backward(mesh, world_normal_grads, grads.d_vertices);
    }

    // Chain screen-space and depth gradients through the projection.
    const double half_h = std::tan(0.5 * camera.vertical_fov);
    const double aspect = static_cast<double>(W) / H;
    const double half_w = half_h * aspect;
    const double cx = 0.5 * W / half_w;
    const double cy = 0.5 * H / half_h;
    for (size_t i = 0; i < nv; ++i) {
        const Vec3& g = screen_grads[i];
        const ScreenVertex& s = screen[i];
        if (!s.valid) continue;
        if (g.x() != 0.0 || g.y() != 0.0) {
            const double d = s.depth;
            const double gx_cam = g.x() * cx / d;
            const double gy_cam = -g.y() * cy / d;
            const double gz_cam =
                g.x() * cx * s.cam.x() / (d * d) - g.y() * cy * s.cam.y() / (d * d);
            grads.d_vertices[i] += gx_cam * right + gy_cam * up2 + gz_cam * back;
        }
        // depth = -z_cam, z_cam = (v - eye) . back
        if (depth_grads[i] != 0.0) grads.d_vertices[i] += depth_grads[i] * (-back);
    }
    return grads;
}

AlbedoRender query_albedo(const FieldNet& color_net, const RenderBuffers& buf,
                          const TriMesh& mesh, const std::vector<Vec3>* canonical_vertices) {
    if (canonical_vertices && canonical_vertices->size() != mesh.vertices.size())
        throw CorrespondenceMismatch("canonical vertex count (" +
                                     std::to_string(canonical_vertices->size()) +
                                     ") != mesh vertex count (" +
                                     std::to_string(mesh.vertices.size()) + ")");
    if (color_net.output_dim() != 3)
        throw ShapeMismatch("albedo field must have output_dim == 3");

    AlbedoRender out;
    out.albedo = Image(buf.height, buf.width, 3, 0.0);
    for (int y = 0; y < buf.height; ++y)
        for (int x = 0; x < buf.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.albedo.at(y, x, c) = buf.options.background_albedo[c];

    const std::vector<Vec3>& canon =
        canonical_vertices ? *canonical_vertices : mesh.vertices;
    std::vector<Vec3> points;
    for (int y = 0; y < buf.height; ++y)
        for (int x = 0; x < buf.width; ++x) {
            const int32_t f = buf.face_at(y, x);
            if (f < 0) continue;
            const auto& t = mesh.faces[f];
            const Vec3 p = buf.bary.at(y, x, 0) * canon[t[0]] +
                           buf.bary.at(y, x, 1) * canon[t[1]] +
                           buf.bary.at(y, x, 2) * canon[t[2]];
            points.push_back(p);
            out.covered_pixels.push_back(y * buf.width + x);
        }

    if (!points.empty()) {
        const auto colors = color_net.forward(points, &out.cache);
        for (size_t i = 0; i < points.size(); ++i) {
            const int p = out.covered_pixels[i];
            for (int c = 0; c < 3; ++c) out.albedo.data[3 * p + c] = colors[3 * i + c];
        }
    }
    return out;
}

Vec3 albedo_backward(FieldNet& color_net, const AlbedoRender& render,
                     const Image& upstream_albedo) {
    if (upstream_albedo.height != render.albedo.height ||
        upstream_albedo.width != render.albedo.width || upstream_albedo.channels != 3)
        throw DimensionMismatch("upstream albedo shape mismatch");
    Vec3 bg_grad = Vec3::Zero();

    std::vector<uint8_t> is_covered(render.albedo.pixel_count(), 0);
    for (int p : render.covered_pixels) is_covered[p] = 1;
    for (size_t p = 0; p < is_covered.size(); ++p)
        if (!is_covered[p])
            for (int c = 0; c < 3; ++c) bg_grad[c] += upstream_albedo.data[3 * p + c];

    if (!render.covered_pixels.empty()) {
        std::vector<double> upstream(render.covered_pixels.size() * 3);
        for (size_t i = 0; i < render.covered_pixels.size(); ++i)
            for (int c = 0; c < 3; ++c)
                upstream[3 * i + c] = upstream_albedo.data[3 * render.covered_pixels[i] + c];
        color_net.backward(render.cache, upstream);
    }
    return bg_grad;
}

std::vector<bool> visibility_mask(const TriMesh& mesh, const Camera& camera,
                                  const std::vector<Vec3>& query_points, double epsilon_z) {
    std::vector<bool> visible(query_points.size(), false);
    if (mesh.faces.empty()) return visible;
    RasterOptions opts;
    const RenderBuffers buf = rasterize(mesh, camera, opts);
    for (size_t i = 0; i < query_points.size(); ++i) {
        const Vec3 cam = camera.to_camera(query_points[i]);
        double sx, sy, depth;
        if (!camera.project(cam, sx, sy, depth)) continue;
        const int x = static_cast<int>(std::floor(sx));
        const int y = static_cast<int>(std::floor(sy));
        if (x < 0 || x >= buf.width || y < 0 || y >= buf.height) continue;
        visible[i] = depth <= buf.depth.at(y, x, 0) + epsilon_z;
    }
    return visible;
}

Image normal_to_rgb(const Image& normal_buffer) {
    Image rgb = normal_buffer;
    for (auto& v : rgb.data) v = 0.5 * (v + 1.0);
    return rgb;
}

} // namespace tetrec
