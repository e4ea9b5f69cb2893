#include "tetrec/losses.hpp"

#include "tetrec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tetrec {

void LossWeights::validate() const {
    for (double w : {lambda_sil, lambda_sds, lambda_norm_base, lambda_lap, lambda_recon,
                     lambda_cd, lambda_mse})
        if (w < 0.0) throw PreconditionError("loss weights must be >= 0");
}

void LossReport::add(const std::string& name, double value, double weight) {
    terms.emplace_back(name, value);
    weighted.emplace_back(name, weight * value);
    total += weight * value;
}

std::vector<uint8_t> binary_edge_map(const Image& mask, double threshold) {
    const int h = mask.height, w = mask.width;
    std::vector<uint8_t> edges(static_cast<size_t>(h) * w, 0);
    auto in_set = [&](int y, int x) {
        if (y < 0 || y >= h || x < 0 || x >= w) return false;
        return mask.at(y, x, 0) >= threshold;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!in_set(y, x)) continue;
            if (!in_set(y - 1, x) || !in_set(y + 1, x) || !in_set(y, x - 1) || !in_set(y, x + 1))
                edges[static_cast<size_t>(y) * w + x] = 1;
        }
    return edges;
}

std::vector<double> l1_distance_transform(const std::vector<uint8_t>& seeds, int h, int w) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> d(static_cast<size_t>(h) * w, kInf);
    for (size_t i = 0; i < seeds.size(); ++i)
        if (seeds[i]) d[i] = 0.0;
    // forward pass
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double& v = d[static_cast<size_t>(y) * w + x];
            if (y > 0) v = std::min(v, d[static_cast<size_t>(y - 1) * w + x] + 1.0);
            if (x > 0) v = std::min(v, d[static_cast<size_t>(y) * w + x - 1] + 1.0);
        }
    // backward pass
    for (int y = h - 1; y >= 0; --y)
        for (int x = w - 1; x >= 0; --x) {
            double& v = d[static_cast<size_t>(y) * w + x];
            if (y + 1 < h) v = std::min(v, d[static_cast<size_t>(y + 1) * w + x] + 1.0);
            if (x + 1 < w) v = std::min(v, d[static_cast<size_t>(y) * w + x + 1] + 1.0);
        }
    return d;
}

SilhouetteLoss silhouette_loss(const Image& rendered_mask, const Image& target_mask) {
    if (!rendered_mask.same_shape(target_mask) || rendered_mask.channels != 1)
        throw DimensionMismatch("silhouette masks must share an H x W x 1 shape");
    const int h = rendered_mask.height, w = rendered_mask.width;
    const size_t n = rendered_mask.pixel_count();

    SilhouetteLoss loss;
    loss.d_mask = Image(h, w, 1, 0.0);

    for (size_t p = 0; p < n; ++p) {
        const double diff = rendered_mask.data[p] - target_mask.data[p];
        loss.mse_term += diff * diff;
        loss.d_mask.data[p] = 2.0 * diff / static_cast<double>(n);
    }
    loss.mse_term /= static_cast<double>(n);

    const auto target_edges = binary_edge_map(target_mask);
    bool target_has_edges = false;
    for (auto e : target_edges) target_has_edges |= (e != 0);
    if (!target_has_edges) return loss; // no boundary to compare against

    const auto dt = l1_distance_transform(target_edges, h, w);
    const auto rendered_edges = binary_edge_map(rendered_mask);
    for (size_t p = 0; p < n; ++p)
        if (rendered_edges[p]) loss.edge_term += dt[p];

    // Differentiable surrogate: edge density of the soft mask, 4 m (1 - m),
    // weighted by the target edge distance field.
    for (size_t p = 0; p < n; ++p) {
        const double m = rendered_mask.data[p];
        loss.soft_edge_term += dt[p] * 4.0 * m * (1.0 - m);
        loss.d_mask.data[p] += dt[p] * 4.0 * (1.0 - 2.0 * m);
    }
    return loss;
}

MaskedImageLoss normal_reg_loss(const Image& rendered_normals, const Image& target_normals,
                                const Image& valid_mask) {
    if (!rendered_normals.same_shape(target_normals) || rendered_normals.channels != 3)
        throw DimensionMismatch("normal images must share an H x W x 3 shape");
    if (valid_mask.height != rendered_normals.height || valid_mask.width != rendered_normals.width ||
        valid_mask.channels != 1)
        throw DimensionMismatch("valid mask must be H x W x 1");

    MaskedImageLoss loss;
    loss.grad = Image(rendered_normals.height, rendered_normals.width, 3, 0.0);
    size_t count = 0;
    for (size_t p = 0; p < valid_mask.pixel_count(); ++p)
        if (valid_mask.data[p] >= 0.5) ++count;
    if (count == 0) {
        loss.empty_mask = true;
        return loss;
    }
    for (size_t p = 0; p < valid_mask.pixel_count(); ++p) {
        if (valid_mask.data[p] < 0.5) continue;
        for (int c = 0; c < 3; ++c) {
            const double diff = rendered_normals.data[3 * p + c] - target_normals.data[3 * p + c];
            loss.value += diff * diff;
            loss.grad.data[3 * p + c] = 2.0 * diff / static_cast<double>(count);
        }
    }
    loss.value /= static_cast<double>(count);
    return loss;
}

MaskedImageLoss occlusion_recon_loss(const Image& rendered_albedo, const Image& input_image,
                                     const Image& occ_mask, double lambda_mse) {
    if (!rendered_albedo.same_shape(input_image) || rendered_albedo.channels != 3)
        throw DimensionMismatch("albedo images must share an H x W x 3 shape");
    if (occ_mask.height != rendered_albedo.height || occ_mask.width != rendered_albedo.width ||
        occ_mask.channels != 1)
        throw DimensionMismatch("occlusion mask must be H x W x 1");

    MaskedImageLoss loss;
    loss.grad = Image(rendered_albedo.height, rendered_albedo.width, 3, 0.0);
    double weight_sum = 0.0;
    for (size_t p = 0; p < occ_mask.pixel_count(); ++p) weight_sum += occ_mask.data[p];
    if (weight_sum == 0.0) {
        loss.empty_mask = true;
        return loss;
    }
    for (size_t p = 0; p < occ_mask.pixel_count(); ++p) {
        const double m = occ_mask.data[p];
        if (m == 0.0) continue;
        for (int c = 0; c < 3; ++c) {
            const double diff = rendered_albedo.data[3 * p + c] - input_image.data[3 * p + c];
            loss.value += m * diff * diff;
            loss.grad.data[3 * p + c] = lambda_mse * 2.0 * m * diff / weight_sum;
        }
    }
    loss.value = lambda_mse * loss.value / weight_sum;
    return loss;
}

namespace {

/// Exact nearest-neighbour search over a uniform grid in the RGB cube.
/// Distances use the same expression as a brute-force scan, so the minimum is
/// bit-identical; ties resolve to the smallest point index.
class ColorGridIndex {
public:
    explicit ColorGridIndex(const std::vector<Vec3>& points) : points_(points) {
        const double m = static_cast<double>(points.size());
        res_ = std::clamp(static_cast<int>(std::cbrt(m / 2.0)) + 1, 1, 64);
        cells_.resize(static_cast<size_t>(res_) * res_ * res_);
        for (size_t i = 0; i < points.size(); ++i) cells_[cell_of(points[i])].push_back(i);
    }

    std::pair<double, size_t> nearest(const Vec3& q) const {
        double best = std::numeric_limits<double>::infinity();
        size_t best_idx = 0;
        const int cx = coord(q.x()), cy = coord(q.y()), cz = coord(q.z());
        const double cell = 1.0 / res_;
        for (int radius = 0; radius < res_; ++radius) {
            // Shell of cells at Chebyshev distance `radius`.
            for (int dx = -radius; dx <= radius; ++dx)
                for (int dy = -radius; dy <= radius; ++dy)
                    for (int dz = -radius; dz <= radius; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != radius)
                            continue;
                        const int x = cx + dx, y = cy + dy, z = cz + dz;
                        if (x < 0 || x >= res_ || y < 0 || y >= res_ || z < 0 || z >= res_)
                            continue;
                        for (size_t idx :
                             cells_[(static_cast<size_t>(x) * res_ + y) * res_ + z]) {
                            const double d2 = squared_distance(q, points_[idx]);
                            if (d2 < best || (d2 == best && idx < best_idx)) {
                                best = d2;
                                best_idx = idx;
                            }
                        }
                    }
            // Cells in ring k+1 or farther are at least k * cell away, so the
            // current best cannot be beaten once it is within that bound.
            if (best < std::numeric_limits<double>::infinity()) {
                const double safe = static_cast<double>(radius) * cell;
                if (best <= safe * safe) break;
            }
        }
        return {best, best_idx};
    }

    static double squared_distance(const Vec3& a, const Vec3& b) {
        const double dx = a.x() - b.x();
        const double dy = a.y() - b.y();
        const double dz = a.z() - b.z();
        return dx * dx + dy * dy + dz * dz;
    }

private:
    int coord(double v) const {
        return std::clamp(static_cast<int>(v * res_), 0, res_ - 1);
    }
    size_t cell_of(const Vec3& p) const {
        return (static_cast<size_t>(coord(p.x())) * res_ + coord(p.y())) * res_ + coord(p.z());
    }

    const std::vector<Vec3>& points_;
    int res_ = 1;
    std::vector<std::vector<size_t>> cells_;
};

} // namespace

ChamferRgbLoss chamfer_rgb_loss(const std::vector<Vec3>& render_pixels,
                                const std::vector<Vec3>& input_pixels) {
    if (render_pixels.empty() || input_pixels.empty())
        throw EmptySet("chamfer_rgb_loss requires two nonempty pixel sets");

    ChamferRgbLoss loss;
    loss.d_render.assign(render_pixels.size(), Vec3::Zero());

    const ColorGridIndex input_index(input_pixels);
    const ColorGridIndex render_index(render_pixels);

    // Each direction accumulates separately so the total is symmetric in the
    // two arguments down to the last bit.
    double render_to_input = 0.0;
    for (size_t i = 0; i < render_pixels.size(); ++i) {
        const auto [d2, j] = input_index.nearest(render_pixels[i]);
        render_to_input += d2;
        loss.d_render[i] += 2.0 * (render_pixels[i] - input_pixels[j]);
    }
    double input_to_render = 0.0;
    for (size_t j = 0; j < input_pixels.size(); ++j) {
        const auto [d2, i] = render_index.nearest(input_pixels[j]);
        input_to_render += d2;
        loss.d_render[i] += 2.0 * (render_pixels[i] - input_pixels[j]);
    }
    loss.value = render_to_input + input_to_render;
    return loss;
}

double lambda_norm_schedule(int t, int t_coarse, int t_fine, double base) {
    if (t < 0 || t >= t_coarse + t_fine)
        throw OutOfRange("lambda_norm_schedule: t out of [0, t_coarse + t_fine)");
    if (t < t_coarse)
        return 0.5 * base * (1.0 + std::cos(M_PI * static_cast<double>(t) / t_coarse));
    return 0.5 * base * (1.0 + std::cos(M_PI * static_cast<double>(t - t_coarse) / t_fine));
}

} // namespace tetrec
