#pragma once

#include "tetrec/image.hpp"
#include "tetrec/mesh.hpp"
#include "tetrec/rng.hpp"

#include <vector>

namespace tetrec {

struct EvalReport {
    double chamfer = 0.0;      // bi-directional point-to-surface (mean of both)
    double p2s = 0.0;          // truth -> recon
    double normal_error = 0.0; // mean per-pixel L2 over 4 azimuths
    double psnr = 0.0;
    double ssim = 0.0;
};

/// Area-weighted surface samples (deterministic for a fixed rng state).
std::vector<Vec3> sample_surface(const TriMesh& mesh, int n, Rng& rng);

/// 3D metrics. chamfer = (mean d(recon->truth) + mean d(truth->recon)) / 2,
/// p2s = mean d(truth->recon); normal_error renders both meshes from 4
/// azimuths (0/90/180/270 deg) and averages the per-pixel normal L2
/// difference over the union of coverage.
EvalReport eval_meshes(const TriMesh& recon, const TriMesh& truth, int n_samples = 20000,
                       uint64_t seed = 7, int image_size = 128);

/// PSNR on [0,1] images (capped at 99 dB for identical inputs).
double psnr(const Image& a, const Image& b);

/// SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=1.
double ssim(const Image& a, const Image& b);

/// 2D metrics averaged over image pairs.
EvalReport eval_images(const std::vector<Image>& renders, const std::vector<Image>& truths);

} // namespace tetrec
