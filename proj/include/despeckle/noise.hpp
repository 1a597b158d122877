#pragma once

#include <vector>

#include "despeckle/volume.hpp"

namespace despeckle {

// Windows for the two-stage local noise estimate and the spline smoothing knob.
struct NoiseOptions {
    int mad_window = 9;     // inner window N1, odd
    int mode_window = 15;   // outer window N2, odd, > N1
    double mode_bin = 0.01; // histogram bin width in log units
    double spline_p = 0.5;  // smoothing parameter in (0, 1]; 1 = no smoothing
};

// Robust sigma over the window centered at (row, col): 1.4826 * MAD.
// The window is clamped to the grid (replicate padding), so every center is valid.
double mad_sigma(const ImageGrid& grid, int row, int col, int window);

// Center of the most populated fixed-width histogram bin; ties go to the
// smaller bin.  Throws on an empty list or on negative/non-finite candidates.
double mode_sigma(const std::vector<double>& candidates, double bin_width);

// Separable natural cubic smoothing spline, rows first, then columns.
// p = 1 returns the input; smaller p smooths harder (p -> 0 tends to the
// per-line linear fit).
Matrix smooth_spline_field(const Matrix& field, double p);

// Per-frame, per-pixel noise std in log units: MAD over every N1 sub-window
// fully contained in the N2 neighborhood, mode of those, then spline
// smoothing.  Pixels where mask == 0 inherit the nearest valid estimate
// before smoothing; an empty (0x0) mask means all pixels are valid.
SigmaMap estimate_sigma(const LogVolume& volume, const Mask& mask,
                        const NoiseOptions& opts = {});

}  // namespace despeckle
