#pragma once

#include "tetrec/image.hpp"
#include "tetrec/mesh.hpp"

#include <string>
#include <vector>

namespace tetrec {

struct LossWeights {
    double lambda_sil = 1e4;
    double lambda_sds = 1.0;
    double lambda_norm_base = 1e4;
    double lambda_lap = 1e4;
    double lambda_recon = 2e4;
    double lambda_cd = 1e6;
    double lambda_mse = 1.0; // inner MSE weight of L_recon

    void validate() const;
};

/// Per-term loss values for one iteration, serialized to the JSONL log.
/// total must equal the weighted sum of terms.
struct LossReport {
    std::vector<std::pair<std::string, double>> terms; // unweighted values
    std::vector<std::pair<std::string, double>> weighted;
    double total = 0.0;
    std::vector<std::string> gradient_destinations;

    void add(const std::string& name, double value, double weight);
};

/// Silhouette loss: pixel MSE plus a one-directional edge term (L1 distance
/// from every rendered boundary pixel to the nearest target boundary pixel,
/// computed with an exact L1 distance transform of the target edge map).
///
/// The reported edge_term uses the hard rendered boundary. Gradients use a
/// differentiable surrogate (the distance field weighted by the soft edge
/// density 4 m (1-m)); soft_edge_term is the surrogate's value so the whole
/// gradient is finite-difference checkable via soft_total().
struct SilhouetteLoss {
    double mse_term = 0.0;
    double edge_term = 0.0;
    double soft_edge_term = 0.0;
    Image d_mask; // d(soft_total)/d(rendered mask)

    double total() const { return mse_term + edge_term; }
    double soft_total() const { return mse_term + soft_edge_term; }
};

SilhouetteLoss silhouette_loss(const Image& rendered_mask, const Image& target_mask);

/// Masked image MSE (per-pixel channel sum, mean over counted pixels).
struct MaskedImageLoss {
    double value = 0.0;
    Image grad;              // w.r.t. the rendered image
    bool empty_mask = false; // warning flag: no valid pixels
};

MaskedImageLoss normal_reg_loss(const Image& rendered_normals, const Image& target_normals,
                                const Image& valid_mask);

MaskedImageLoss occlusion_recon_loss(const Image& rendered_albedo, const Image& input_image,
                                     const Image& occ_mask, double lambda_mse);

/// Symmetric chamfer distance between RGB point sets (sum of squared
/// nearest-neighbour distances, both directions). Gradients flow to the
/// render pixels only. The nearest-neighbour search uses an exact uniform
/// color-grid index; results are bit-identical to brute force.
struct ChamferRgbLoss {
    double value = 0.0;
    std::vector<Vec3> d_render; // per render pixel
};

ChamferRgbLoss chamfer_rgb_loss(const std::vector<Vec3>& render_pixels,
                                const std::vector<Vec3>& input_pixels);

/// Two-round cosine annealing of the normal-regularizer weight.
/// t in [0, t_coarse + t_fine), else OutOfRange.
double lambda_norm_schedule(int t, int t_coarse, int t_fine, double base);

/// 4-neighbourhood binary boundary of a {0,1} mask (pixels of the set with a
/// neighbour outside it; image border counts as outside).
std::vector<uint8_t> binary_edge_map(const Image& mask, double threshold = 0.5);

/// Exact L1 distance to the nearest seed pixel (two-pass chamfer transform).
std::vector<double> l1_distance_transform(const std::vector<uint8_t>& seeds, int h, int w);

} // namespace tetrec
