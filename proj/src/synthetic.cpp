#include "despeckle/synthetic.hpp"

#include <cmath>
#include <stdexcept>

namespace despeckle {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Pcg32::Pcg32(std::uint64_t seed, std::uint64_t stream) {
    state_ = 0;
    inc_ = (stream << 1) | 1u;
    next();
    state_ += seed;
    next();
}

std::uint32_t Pcg32::next() {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18) ^ old) >> 27);
    const std::uint32_t rot = static_cast<std::uint32_t>(old >> 59);
    return (xorshifted >> rot) | (xorshifted << ((32 - rot) & 31));
}

double Pcg32::uniform() { return next() * (1.0 / 4294967296.0); }

double Pcg32::uniform_open() { return (next() + 0.5) * (1.0 / 4294967296.0); }

double Pcg32::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open(), u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
}

double Pcg32::gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("gamma shape must be positive");
    if (shape < 1.0) {
        // Boost: Gamma(a) = Gamma(a+1) * U^(1/a)
        const double u = uniform_open();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double digamma(double x) {
    if (x <= 0.0) throw std::invalid_argument("digamma defined here for x > 0 only");
    double r = 0.0;
    while (x < 12.0) {  // recurrence psi(x) = psi(x+1) - 1/x
        r -= 1.0 / x;
        x += 1.0;
    }
    const double xi = 1.0 / x, xi2 = xi * xi;
    // asymptotic series
    return r + std::log(x) - 0.5 * xi -
           xi2 * (1.0 / 12.0 - xi2 * (1.0 / 120.0 - xi2 * (1.0 / 252.0 - xi2 / 240.0)));
}

double trigamma(double x) {
    if (x <= 0.0) throw std::invalid_argument("trigamma defined here for x > 0 only");
    double r = 0.0;
    while (x < 12.0) {  // recurrence psi'(x) = psi'(x+1) + 1/x^2
        r += 1.0 / (x * x);
        x += 1.0;
    }
    const double xi = 1.0 / x, xi2 = xi * xi;
    return r + xi * (1.0 + xi * (0.5 + xi * (1.0 / 6.0 - xi2 * (1.0 / 30.0 - xi2 * (1.0 / 42.0 -
                                                                                    xi2 / 30.0)))));
}

RawImage phantom(const PhantomSpec& spec) {
    if (spec.rows < 2 || spec.cols < 2)
        throw std::invalid_argument("phantom needs at least 2x2 geometry");
    if (spec.background < 1.0 || spec.background > 255.0)
        throw std::invalid_argument("phantom background intensity must lie in [1, 255]");

    const int m = spec.rows, n = spec.cols;
    auto boundary_row = [&](const PhantomSpec::Layer& l, int col) {
        const double period = l.period > 0.0 ? l.period : double(n);
        return static_cast<int>(
            std::floor(l.base_row + l.amplitude * std::sin(2.0 * kPi * col / period + l.phase)));
    };

    // Boundaries are ordered top to bottom and must not cross.
    for (size_t i = 0; i + 1 < spec.layers.size(); ++i)
        for (int c = 0; c < n; ++c)
            if (boundary_row(spec.layers[i + 1], c) < boundary_row(spec.layers[i], c))
                throw std::invalid_argument("phantom layers " + std::to_string(i) + " and " +
                                            std::to_string(i + 1) + " overlap at column " +
                                            std::to_string(c));
    for (const auto& l : spec.layers)
        if (l.intensity < 1.0 || l.intensity > 255.0)
            throw std::invalid_argument("phantom layer intensity must lie in [1, 255]");

    Matrix img = Matrix::Constant(m, n, spec.background);
    for (int c = 0; c < n; ++c) {
        for (size_t i = 0; i < spec.layers.size(); ++i) {
            const int top = std::clamp(boundary_row(spec.layers[i], c), 0, m);
            const int bottom = i + 1 < spec.layers.size()
                                   ? std::clamp(boundary_row(spec.layers[i + 1], c), 0, m)
                                   : m;
            for (int r = top; r < bottom; ++r) img(r, c) = spec.layers[i].intensity;
        }
    }
    for (const auto& les : spec.lesions) {
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < m; ++r) {
                const double d2 = (r - les.center_row) * (r - les.center_row) +
                                  (c - les.center_col) * (c - les.center_col);
                if (d2 < les.radius * les.radius) img(r, c) += les.delta;
            }
    }

    RawImage out;
    out.rows = m;
    out.cols = n;
    out.bit_depth = 8;
    out.pixels.resize(m, n);
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < m; ++r)
            out.pixels(r, c) =
                static_cast<std::uint16_t>(std::round(std::clamp(img(r, c), 1.0, 255.0)));
    return out;
}

PhantomSpec default_phantom(int rows, int cols) {
    if (rows < 45)
        throw std::invalid_argument("default_phantom needs rows >= 45, got " +
                                    std::to_string(rows));
    PhantomSpec spec;
    spec.rows = rows;
    spec.cols = cols;
    spec.background = 40.0;
    spec.layers = {
        {rows * 0.25, 6.0, 0.0, 0.0, 140.0},
        {rows * 0.50, 5.0, 0.0, 1.3, 90.0},
        {rows * 0.75, 4.0, 0.0, 2.1, 180.0},
    };
    spec.lesions = {{rows * 0.4, cols * 0.6, rows * 0.06, 80.0}};
    return spec;
}

SpeckleStack speckle_stack(const RawImage& truth, const SpeckleSpec& spec) {
    validate(truth);
    if (spec.frames < 2) throw std::invalid_argument("speckle_stack needs k >= 2 frames");
    if (spec.gamma_looks <= 0.0) throw std::invalid_argument("speckle_stack needs L_g > 0");

    const int m = truth.rows, n = truth.cols;
    const double maxval = truth.max_value();
    const Matrix truth_values = truth.pixels.cast<double>();

    SpeckleStack out;
    out.sigma_log = std::sqrt(trigamma(spec.gamma_looks));

    Pcg32 jitter_rng(spec.seed, 0);
    for (int f = 0; f < spec.frames; ++f) {
        RigidTransform t;
        // The middle frame anchors the nominal scan position (it is also the
        // default registration reference), so recovering the stack leaves the
        // result in the ground-truth geometry.
        if (f != spec.frames / 2) {
            if (spec.max_jitter_px > 0.0) {
                t.dx = (2.0 * jitter_rng.uniform() - 1.0) * spec.max_jitter_px;
                t.dy = (2.0 * jitter_rng.uniform() - 1.0) * spec.max_jitter_px;
            }
            if (spec.max_jitter_deg > 0.0)
                t.theta_deg = (2.0 * jitter_rng.uniform() - 1.0) * spec.max_jitter_deg;
        }
        out.true_transforms.push_back(t);
    }

    for (int f = 0; f < spec.frames; ++f) {
        Pcg32 rng(spec.seed, static_cast<std::uint64_t>(f) + 1);  // per-frame stream
        const RigidTransform& t = out.true_transforms[f];
        RawImage frame;
        frame.rows = m;
        frame.cols = n;
        frame.bit_depth = truth.bit_depth;
        frame.pixels.resize(m, n);
        // Column-major pixel order so the noise stream is layout-stable.
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < m; ++r) {
                double sr, sc;
                inverse_map(t, m, n, r, c, sr, sc);
                const double clean = bilinear_clamped(truth_values, sr, sc);
                const double noise = rng.gamma(spec.gamma_looks) / spec.gamma_looks;  // mean 1
                frame.pixels(r, c) = static_cast<std::uint16_t>(
                    std::round(std::clamp(clean * noise, 0.0, maxval)));
            }
        out.frames.push_back(std::move(frame));
    }
    return out;
}

}  // namespace despeckle
