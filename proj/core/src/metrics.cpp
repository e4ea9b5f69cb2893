#include "tetrec/metrics.hpp"

#include "tetrec/errors.hpp"
#include "tetrec/mesh_query.hpp"
#include "tetrec/parallel.hpp"
#include "tetrec/render.hpp"

#include <algorithm>
#include <cmath>

namespace tetrec {

std::vector<Vec3> sample_surface(const TriMesh& mesh, int n, Rng& rng) {
    if (mesh.faces.empty()) throw EmptyMesh("cannot sample an empty mesh");
    std::vector<double> cumulative(mesh.faces.size());
    double total = 0.0;
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        total += mesh.face_area(static_cast<int>(f));
        cumulative[f] = total;
    }
    std::vector<Vec3> points;
    points.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        const size_t f = std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                         cumulative.begin();
        const auto& t = mesh.faces[std::min(f, mesh.faces.size() - 1)];
        double r1 = std::sqrt(rng.uniform());
        double r2 = rng.uniform();
        const double w0 = 1.0 - r1;
        const double w1 = r1 * (1.0 - r2);
        const double w2 = r1 * r2;
        points.push_back(w0 * mesh.vertices[t[0]] + w1 * mesh.vertices[t[1]] +
                         w2 * mesh.vertices[t[2]]);
    }
    return points;
}

namespace {

double mean_surface_distance(const std::vector<Vec3>& points, const MeshDistanceQuery& query) {
    return parallel_sum(static_cast<int64_t>(points.size()),
                        [&](int64_t i) { return query.unsigned_distance(points[i]); }) /
           static_cast<double>(points.size());
}

} // namespace

EvalReport eval_meshes(const TriMesh& recon, const TriMesh& truth, int n_samples, uint64_t seed,
                       int image_size) {
    if (recon.faces.empty() || truth.faces.empty())
        throw EmptyMesh("eval_meshes requires two nonempty meshes");

    EvalReport report;
    Rng rng(seed);
    Rng rng_truth = rng.fork(1);
    const auto recon_samples = sample_surface(recon, n_samples, rng);
    const auto truth_samples = sample_surface(truth, n_samples, rng_truth);
    MeshDistanceQuery recon_query(recon);
    MeshDistanceQuery truth_query(truth);
    const double d_rt = mean_surface_distance(recon_samples, truth_query);
    const double d_tr = mean_surface_distance(truth_samples, recon_query);
    report.chamfer = 0.5 * (d_rt + d_tr);
    report.p2s = d_tr;

    // Normal consistency: render both meshes around the vertical axis and
    // average the per-pixel normal difference over the coverage union.
    const Vec3 lo = recon.bbox_min().cwiseMin(truth.bbox_min());
    const Vec3 hi = recon.bbox_max().cwiseMax(truth.bbox_max());
    const Vec3 center = 0.5 * (lo + hi);
    const double radius = 0.5 * (hi - lo).norm();
    const double fov = 45.0 * M_PI / 180.0;
    const double cam_r = std::max(2.5 * radius / std::tan(0.5 * fov), 1e-3);

    double err_sum = 0.0;
    int64_t err_count = 0;
    for (int k = 0; k < 4; ++k) {
        const double az = k * 90.0 * M_PI / 180.0;
        Camera cam;
        cam.width = cam.height = image_size;
        cam.vertical_fov = fov;
        cam.target = center;
        cam.eye = center + cam_r * Vec3(std::sin(az), 0.0, std::cos(az));
        cam.azimuth = az;
        const RenderBuffers br = rasterize(recon, cam);
        const RenderBuffers bt = rasterize(truth, cam);
        for (size_t p = 0; p < br.face_id.size(); ++p) {
            if (br.face_id[p] < 0 && bt.face_id[p] < 0) continue;
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double diff = br.normal.data[3 * p + c] - bt.normal.data[3 * p + c];
                d2 += diff * diff;
            }
            err_sum += std::sqrt(d2);
            ++err_count;
        }
    }
    report.normal_error = err_count ? err_sum / static_cast<double>(err_count) : 0.0;
    return report;
}

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw DimensionMismatch("psnr image shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> gaussian_kernel_11() {
    std::vector<double> k(11);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double x = i - 5;
        k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

} // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw DimensionMismatch("ssim image shape mismatch");
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;
    const int h = a.height, w = a.width, ch = a.channels;

    if (h < 11 || w < 11) {
        // Global-statistics fallback for tiny images.
        double score = 0.0;
        for (int c = 0; c < ch; ++c) {
            double ma = 0, mb = 0;
            const size_t n = a.pixel_count();
            for (size_t p = 0; p < n; ++p) {
                ma += a.data[p * ch + c];
                mb += b.data[p * ch + c];
            }
            ma /= n;
            mb /= n;
            double va = 0, vb = 0, cov = 0;
            for (size_t p = 0; p < n; ++p) {
                const double da = a.data[p * ch + c] - ma;
                const double db = b.data[p * ch + c] - mb;
                va += da * da;
                vb += db * db;
                cov += da * db;
            }
            va /= n - 1;
            vb /= n - 1;
            cov /= n - 1;
            score += ((2 * ma * mb + C1) * (2 * cov + C2)) /
                     ((ma * ma + mb * mb + C1) * (va + vb + C2));
        }
        return score / ch;
    }

    const auto kernel = gaussian_kernel_11();
    auto blur = [&](const std::vector<double>& src, std::vector<double>& dst) {
        // separable 11x11, valid region handled by the caller crop
        std::vector<double> tmp(src.size(), 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = 5; x < w - 5; ++x) {
                double acc = 0.0;
                for (int k = -5; k <= 5; ++k)
                    acc += kernel[k + 5] * src[static_cast<size_t>(y) * w + x + k];
                tmp[static_cast<size_t>(y) * w + x] = acc;
            }
        dst.assign(src.size(), 0.0);
        for (int y = 5; y < h - 5; ++y)
            for (int x = 5; x < w - 5; ++x) {
                double acc = 0.0;
                for (int k = -5; k <= 5; ++k)
                    acc += kernel[k + 5] * tmp[static_cast<size_t>(y + k) * w + x];
                dst[static_cast<size_t>(y) * w + x] = acc;
            }
    };

    double total = 0.0;
    for (int c = 0; c < ch; ++c) {
        std::vector<double> pa(static_cast<size_t>(h) * w), pb(pa.size());
        for (size_t p = 0; p < pa.size(); ++p) {
            pa[p] = a.data[p * ch + c];
            pb[p] = b.data[p * ch + c];
        }
        std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
        for (size_t p = 0; p < pa.size(); ++p) {
            aa[p] = pa[p] * pa[p];
            bb[p] = pb[p] * pb[p];
            ab[p] = pa[p] * pb[p];
        }
        std::vector<double> mu_a, mu_b, m_aa, m_bb, m_ab;
        blur(pa, mu_a);
        blur(pb, mu_b);
        blur(aa, m_aa);
        blur(bb, m_bb);
        blur(ab, m_ab);
        double acc = 0.0;
        int64_t count = 0;
        for (int y = 5; y < h - 5; ++y)
            for (int x = 5; x < w - 5; ++x) {
                const size_t p = static_cast<size_t>(y) * w + x;
                const double va = m_aa[p] - mu_a[p] * mu_a[p];
                const double vb = m_bb[p] - mu_b[p] * mu_b[p];
                const double cov = m_ab[p] - mu_a[p] * mu_b[p];
                acc += ((2 * mu_a[p] * mu_b[p] + C1) * (2 * cov + C2)) /
                       ((mu_a[p] * mu_a[p] + mu_b[p] * mu_b[p] + C1) * (va + vb + C2));
                ++count;
            }
        total += acc / static_cast<double>(count);
    }
    return total / ch;
}

EvalReport eval_images(const std::vector<Image>& renders, const std::vector<Image>& truths) {
    if (renders.size() != truths.size() || renders.empty())
        throw DimensionMismatch("eval_images needs matched nonempty image lists");
    EvalReport report;
    for (size_t i = 0; i < renders.size(); ++i) {
        report.psnr += psnr(renders[i], truths[i]);
        report.ssim += ssim(renders[i], truths[i]);
    }
    report.psnr /= static_cast<double>(renders.size());
    report.ssim /= static_cast<double>(renders.size());
    return report;
}

} // namespace tetrec
