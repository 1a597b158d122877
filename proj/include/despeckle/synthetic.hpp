#pragma once

#include <cstdint>
#include <vector>

#include "despeckle/imageio.hpp"
#include "despeckle/registration.hpp"
#include "despeckle/volume.hpp"

namespace despeckle {

// Minimal PCG32 (O'Neill's pcg32_random_r) plus the explicit samplers the
// fixtures need.  std:: distributions are not bit-stable across standard
// libraries, and fixtures must reproduce byte-exactly from a seed.
class Pcg32 {
  public:
    Pcg32(std::uint64_t seed, std::uint64_t stream = 0);
    std::uint32_t next();
    double uniform();            // [0, 1)
    double uniform_open();       // (0, 1)
    double normal();             // standard normal, Box-Muller
    double gamma(double shape);  // Gamma(shape, 1), Marsaglia-Tsang

  private:
    std::uint64_t state_;
    std::uint64_t inc_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

double digamma(double x);
double trigamma(double x);

struct PhantomSpec {
    struct Layer {
        double base_row = 0.0;   // boundary curve: base_row + amp * sin(2*pi*col/period + phase)
        double amplitude = 0.0;
        double period = 0.0;     // defaults to the image width when <= 0
        double phase = 0.0;
        double intensity = 0.0;  // fill value from this boundary down to the next
    };
    struct Lesion {
        double center_row = 0.0;
        double center_col = 0.0;
        double radius = 0.0;
        double delta = 0.0;  // added to the underlying intensity inside the disk
    };
    int rows = 0;
    int cols = 0;
    double background = 40.0;
    std::vector<Layer> layers;  // ordered top to bottom
    std::vector<Lesion> lesions;
};

RawImage phantom(const PhantomSpec& spec);

// The layered retina-like phantom the regression fixtures use (three wavy
// bands over background plus one bright lesion).  Needs rows >= 45 so the
// band boundaries cannot cross.
PhantomSpec default_phantom(int rows, int cols);

struct SpeckleSpec {
    int frames = 8;
    double gamma_looks = 4.0;     // Gamma shape L_g; the noise law has mean 1
    double max_jitter_px = 0.0;   // per-frame rigid jitter bounds; the middle
    double max_jitter_deg = 0.0;  // frame stays at the nominal position
    std::uint64_t seed = 1;
};

struct SpeckleStack {
    std::vector<RawImage> frames;
    std::vector<RigidTransform> true_transforms;
    double sigma_log = 0.0;  // sqrt(trigamma(L_g)), the analytic log-domain noise std
};

SpeckleStack speckle_stack(const RawImage& truth, const SpeckleSpec& spec);

}  // namespace despeckle
