#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "despeckle/volume.hpp"

namespace despeckle {

struct RegistrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Translation in pixels plus rotation (degrees) about the image center.
// Content-forward convention: applying the transform moves image content by
// (+dx, +dy) and rotates it by +theta.
struct RigidTransform {
    double dx = 0.0;
    double dy = 0.0;
    double theta_deg = 0.0;
};

struct RegistrationOptions {
    double max_translation = 20.0;  // pixels
    double max_rotation = 5.0;      // degrees
    int pyramid_levels = 3;
    double tol = 1e-6;  // relative SSD change per sweep
    int max_sweeps = 50;
};

RigidTransform inverse(const RigidTransform& t);

// Source coordinates that target pixel (row, col) samples under t.
void inverse_map(const RigidTransform& t, int rows, int cols, double row, double col,
                 double& src_row, double& src_col);

// Bilinear lookup with coordinates clamped to the image rectangle.
double bilinear_clamped(const Matrix& values, double row, double col);

struct WarpResult {
    ImageGrid image;
    Mask valid;  // 1 where the sample fell inside the source rectangle
};

WarpResult warp(const ImageGrid& img, const RigidTransform& t);

// Mean of squared differences over valid pixels.
double ssd(const ImageGrid& a, const ImageGrid& b, const Mask& valid);

RigidTransform register_pair(const ImageGrid& moving, const ImageGrid& fixed,
                             const RegistrationOptions& opts = {});

struct StackRegistration {
    std::vector<RigidTransform> transforms;  // per frame; identity at the reference
    LogVolume registered;
    Mask valid;  // jointly valid region across all warped frames
    int reference_index = 0;
};

// reference_index < 0 selects the middle frame.
StackRegistration register_stack(const std::vector<ImageGrid>& frames, int reference_index = -1,
                                 const RegistrationOptions& opts = {});

void write_transforms(const std::vector<RigidTransform>& transforms, const std::string& path);
std::vector<RigidTransform> read_transforms(const std::string& path);

}  // namespace despeckle
