#pragma once

#include <string>
#include <vector>

#include "despeckle/imageio.hpp"
#include "despeckle/volume.hpp"

namespace despeckle {

using EdgeMap = Mask;  // nonzero = edge pixel

struct SsimOptions {
    int window = 11;      // odd
    double sigma = 1.5;   // Gaussian weighting inside the window
    double k1 = 0.01;
    double k2 = 0.03;
};

struct CannyOptions {
    double sigma = 1.4142135623730951;  // pre-smoothing
    double high_percentile = 0.7;       // of the nonzero gradient magnitudes
    double low_ratio = 0.4;             // low = low_ratio * high
};

struct MetricsReport {
    std::string region;
    double psnr_db = 0.0;  // +infinity when the images are identical
    double ssim = 0.0;
    double fom = 0.0;
};

// 10*log10(MAX^2/MSE); identical images return +infinity.
double psnr(const RawImage& recon, const RawImage& ref);

// Mean per-window structural similarity over all fully contained windows.
double ssim(const RawImage& recon, const RawImage& ref, const SsimOptions& opts = {});

// Gaussian blur, Sobel gradients, non-maximum suppression, percentile-based
// hysteresis.  Deterministic for fixed options.
EdgeMap canny(const RawImage& img, const CannyOptions& opts = {});

// Exact squared Euclidean distance to the nearest edge pixel (lower-envelope
// transform).  A map with no edges yields a large finite sentinel everywhere.
Matrix squared_edt(const EdgeMap& edges);

// Pratt figure of merit of the detected edges against the reference ones.
double fom(const EdgeMap& recon_edges, const EdgeMap& ref_edges, double gamma = 1.0 / 9.0);

// Whole-image report first, then one per ROI (metrics computed on the crops).
std::vector<MetricsReport> evaluate(const RawImage& recon, const RawImage& ref,
                                    const std::vector<RoiRect>& rois);

// Stable schema: image,region,psnr_db,ssim,fom — one row per report.
std::string metrics_csv(const std::string& image_label,
                        const std::vector<MetricsReport>& reports);

}  // namespace despeckle
