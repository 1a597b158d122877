#include "despeckle/registration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace despeckle {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

RigidTransform inverse(const RigidTransform& t) {
    // Content map: u -> R(u - c) + c + t.  Its inverse is another rigid
    // transform with angle -theta and translation -R(-theta)*t.
    const double a = -t.theta_deg * kPi / 180.0;
    RigidTransform inv;
    inv.theta_deg = -t.theta_deg;
    inv.dx = -(std::cos(a) * t.dx - std::sin(a) * t.dy);
    inv.dy = -(std::sin(a) * t.dx + std::cos(a) * t.dy);
    return inv;
}

void inverse_map(const RigidTransform& t, int rows, int cols, double row, double col,
                 double& src_row, double& src_col) {
    const double cx = (cols - 1) / 2.0, cy = (rows - 1) / 2.0;
    const double a = -t.theta_deg * kPi / 180.0;  // undo the content rotation
    const double x = col - cx - t.dx, y = row - cy - t.dy;
    src_col = cx + std::cos(a) * x - std::sin(a) * y;
    src_row = cy + std::sin(a) * x + std::cos(a) * y;
}

double bilinear_clamped(const Matrix& values, double row, double col) {
    const int m = static_cast<int>(values.rows()), n = static_cast<int>(values.cols());
    row = std::clamp(row, 0.0, double(m - 1));
    col = std::clamp(col, 0.0, double(n - 1));
    const int i0 = std::min(static_cast<int>(row), m - 2 >= 0 ? m - 2 : 0);
    const int j0 = std::min(static_cast<int>(col), n - 2 >= 0 ? n - 2 : 0);
    const int i1 = std::min(i0 + 1, m - 1), j1 = std::min(j0 + 1, n - 1);
    const double fi = row - i0, fj = col - j0;
    return (1 - fi) * (1 - fj) * values(i0, j0) + (1 - fi) * fj * values(i0, j1) +
           fi * (1 - fj) * values(i1, j0) + fi * fj * values(i1, j1);
}

WarpResult warp(const ImageGrid& img, const RigidTransform& t) {
    validate(img);
    WarpResult out;
    out.image.rows = img.rows;
    out.image.cols = img.cols;
    out.image.values = Matrix::Zero(img.rows, img.cols);
    out.valid = Mask::Zero(img.rows, img.cols);
    for (int j = 0; j < img.cols; ++j) {
        for (int i = 0; i < img.rows; ++i) {
            double sr, sc;
            inverse_map(t, img.rows, img.cols, i, j, sr, sc);
            if (sr >= 0.0 && sr <= img.rows - 1 && sc >= 0.0 && sc <= img.cols - 1) {
                out.image.values(i, j) = bilinear_clamped(img.values, sr, sc);
                out.valid(i, j) = 1;
            }
        }
    }
    return out;
}

double ssd(const ImageGrid& a, const ImageGrid& b, const Mask& valid) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("ssd: geometry mismatch");
    if (valid.rows() != a.rows || valid.cols() != a.cols)
        throw std::invalid_argument("ssd: mask geometry mismatch");
    double sum = 0.0;
    long count = 0;
    for (int j = 0; j < a.cols; ++j)
        for (int i = 0; i < a.rows; ++i)
            if (valid(i, j)) {
                const double d = a.values(i, j) - b.values(i, j);
                sum += d * d;
                ++count;
            }
    if (count == 0) throw std::invalid_argument("ssd: empty mask, no overlapping pixels");
    return sum / double(count);
}

namespace {

ImageGrid downsample2(const ImageGrid& img) {
    ImageGrid out;
    out.rows = (img.rows + 1) / 2;
    out.cols = (img.cols + 1) / 2;
    out.values.resize(out.rows, out.cols);
    for (int j = 0; j < out.cols; ++j) {
        for (int i = 0; i < out.rows; ++i) {
            double s = 0.0;
            int c = 0;
            for (int di = 0; di < 2; ++di)
                for (int dj = 0; dj < 2; ++dj) {
                    const int ii = 2 * i + di, jj = 2 * j + dj;
                    if (ii < img.rows && jj < img.cols) {
                        s += img.values(ii, jj);
                        ++c;
                    }
                }
            out.values(i, j) = s / c;
        }
    }
    return out;
}

// SSD of warp(moving, t) against fixed, both resampled at cell centers
// (half-pixel lattice).  Pushing *both* frames through the interpolator keeps
// the comparison fair: sampling the fixed frame on its own integer grid leaves
// its noise untouched while interpolation smooths the moving frame's noise at
// every non-integer shift, which digs spurious SSD valleys at fractional
// offsets -- and a spike at exact alignment -- whenever the frames carry
// independent noise.  On the cell-center lattice a zero transform interpolates
// both frames identically, so true alignment is a genuine minimum.  Returns
// +inf when nothing overlaps so the line search can treat out-of-overlap
// transforms as simply bad.
double warp_cost(const ImageGrid& moving, const ImageGrid& fixed, const RigidTransform& t) {
    double sum = 0.0;
    long count = 0;
    for (int j = 0; j + 1 < moving.cols; ++j) {
        for (int i = 0; i + 1 < moving.rows; ++i) {
            double sr, sc;
            inverse_map(t, moving.rows, moving.cols, i + 0.5, j + 0.5, sr, sc);
            if (sr >= 0.0 && sr <= moving.rows - 1 && sc >= 0.0 && sc <= moving.cols - 1) {
                const double d = bilinear_clamped(moving.values, sr, sc) -
                                 bilinear_clamped(fixed.values, i + 0.5, j + 0.5);
                sum += d * d;
                ++count;
            }
        }
    }
    if (count == 0) return std::numeric_limits<double>::infinity();
    return sum / double(count);
}

// Golden-section minimization within a bracket known to hold the minimum.
double golden_min(const std::function<double(double)>& f, double lo, double hi, double xtol) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > xtol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    return (a + b) / 2.0;
}

// Line search along one coordinate.  The SSD slice is not unimodal -- shallow
// ripples from residual noise correlation ride on the structural bowl -- so an
// even scan locates the winning bracket first and golden-section only polishes
// inside it.
double line_min(const std::function<double(double)>& f, double lo, double hi) {
    const double range = hi - lo;
    const int n = std::clamp(2 * int(std::lround(range / 0.4)) + 1, 7, 21);
    double best_x = lo, best_f = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
        const double x = lo + range * k / (n - 1);
        const double fx = f(x);
        if (fx < best_f) {
            best_f = fx;
            best_x = x;
        }
    }
    const double h = range / (n - 1);
    const double a = std::max(lo, best_x - h), b = std::min(hi, best_x + h);
    return golden_min(f, a, b, 1e-4 * (b - a) + 1e-6);
}

// Gaussian prefilter (replicate borders) applied to both cost images, never
// to the data the caller finally warps.  Bilinear interpolation on blocky
// content biases the SSD minimum by a fraction of a pixel; after smoothing the
// interpolant is faithful.  Blurring also correlates neighboring noise
// samples, which flattens what remains of the interpolated-noise variance
// modulation across fractional shifts.
ImageGrid prefilter(const ImageGrid& img) {
    constexpr double kSigma = 1.5;
    constexpr int kRadius = 4;
    double w[2 * kRadius + 1], wsum = 0.0;
    for (int k = -kRadius; k <= kRadius; ++k) {
        w[k + kRadius] = std::exp(-0.5 * k * k / (kSigma * kSigma));
        wsum += w[k + kRadius];
    }
    for (double& x : w) x /= wsum;

    ImageGrid out;
    out.rows = img.rows;
    out.cols = img.cols;
    Matrix tmp(img.rows, img.cols);
    for (int j = 0; j < img.cols; ++j)
        for (int i = 0; i < img.rows; ++i) {
            double s = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k)
                s += w[k + kRadius] * img.values(i, std::clamp(j + k, 0, img.cols - 1));
            tmp(i, j) = s;
        }
    out.values.resize(img.rows, img.cols);
    for (int j = 0; j < img.cols; ++j)
        for (int i = 0; i < img.rows; ++i) {
            double s = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k)
                s += w[k + kRadius] * tmp(std::clamp(i + k, 0, img.rows - 1), j);
            out.values(i, j) = s;
        }
    return out;
}

// Exhaustive seed over the whole search box at the coarsest level.  SSD on
// structured content is multimodal (a small rotation looks locally like a
// shift), so the descent below needs to start in the right basin.
RigidTransform grid_seed(const ImageGrid& moving, const ImageGrid& fixed, double bound_t,
                         double bound_r) {
    RigidTransform best;
    double best_cost = std::numeric_limits<double>::infinity();
    const double ts = std::min(1.0, bound_t), rs = std::min(1.0, bound_r);
    for (double th = -bound_r; th <= bound_r + 1e-9; th += rs)
        for (double dy = -bound_t; dy <= bound_t + 1e-9; dy += ts)
            for (double dx = -bound_t; dx <= bound_t + 1e-9; dx += ts) {
                const double c = warp_cost(moving, fixed, RigidTransform{dx, dy, th});
                if (c < best_cost) {
                    best_cost = c;
                    best = RigidTransform{dx, dy, th};
                }
            }
    if (!std::isfinite(best_cost))
        throw RegistrationError("registration failed: no overlap anywhere in the search box");
    return best;
}

RigidTransform refine_level(const ImageGrid& moving, const ImageGrid& fixed, RigidTransform t,
                            double win_t, double win_r, const RegistrationOptions& opts,
                            double bound_t) {
    double prev = warp_cost(moving, fixed, t);
    if (!std::isfinite(prev))
        throw RegistrationError("registration failed: no overlap at the starting transform");
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        double* coords[3] = {&t.dx, &t.dy, &t.theta_deg};
        const double wins[3] = {win_t, win_t, win_r};
        const double bounds[3] = {bound_t, bound_t, opts.max_rotation};
        for (int c = 0; c < 3; ++c) {
            const double lo = std::max(*coords[c] - wins[c], -bounds[c]);
            const double hi = std::min(*coords[c] + wins[c], bounds[c]);
            if (hi <= lo) continue;
            *coords[c] = line_min(
                [&](double v) {
                    RigidTransform probe = t;
                    *(c == 0 ? &probe.dx : c == 1 ? &probe.dy : &probe.theta_deg) = v;
                    return warp_cost(moving, fixed, probe);
                },
                lo, hi);
        }
        const double cur = warp_cost(moving, fixed, t);
        if (prev - cur <= opts.tol * std::max(prev, 1e-30)) break;
        prev = cur;
        win_t = std::max(win_t / 2.0, 0.75);
        win_r = std::max(win_r / 2.0, 0.25);
    }
    return t;
}

}  // namespace

RigidTransform register_pair(const ImageGrid& moving, const ImageGrid& fixed,
                             const RegistrationOptions& opts) {
    validate(moving);
    validate(fixed);
    if (moving.rows != fixed.rows || moving.cols != fixed.cols)
        throw std::invalid_argument("register_pair: geometry mismatch");
    if (opts.max_translation <= 0 || opts.max_rotation <= 0 || opts.pyramid_levels < 1)
        throw std::invalid_argument("register_pair: bounds and pyramid levels must be positive");

    std::vector<ImageGrid> pyr_m{prefilter(moving)}, pyr_f{prefilter(fixed)};
    for (int l = 1; l < opts.pyramid_levels; ++l) {
        if (pyr_m.back().rows < 8 || pyr_m.back().cols < 8) break;  // stop shrinking tiny images
        pyr_m.push_back(downsample2(pyr_m.back()));
        pyr_f.push_back(downsample2(pyr_f.back()));
    }

    RigidTransform t;
    for (int l = static_cast<int>(pyr_m.size()) - 1; l >= 0; --l) {
        const double scale = double(1 << l);
        const double bound_t = opts.max_translation / scale;
        const bool coarsest = (l == static_cast<int>(pyr_m.size()) - 1);
        if (coarsest) t = grid_seed(pyr_m[l], pyr_f[l], bound_t, opts.max_rotation);
        const double win_t = coarsest ? 1.5 : 2.5;
        const double win_r = coarsest ? 1.25 : 1.0;
        t = refine_level(pyr_m[l], pyr_f[l], t, win_t, win_r, opts, bound_t);
        if (l > 0) {
            t.dx *= 2.0;
            t.dy *= 2.0;
        }
    }
    return t;
}

StackRegistration register_stack(const std::vector<ImageGrid>& frames, int reference_index,
                                 const RegistrationOptions& opts) {
    if (frames.size() < 2)
        throw std::invalid_argument("register_stack needs k >= 2 frames, got " +
                                    std::to_string(frames.size()));
    const int k = static_cast<int>(frames.size());
    if (reference_index < 0) reference_index = k / 2;
    if (reference_index >= k)
        throw std::invalid_argument("register_stack: reference index out of range");

    StackRegistration out;
    out.reference_index = reference_index;
    out.transforms.resize(k);
    out.valid = Mask::Ones(frames[0].rows, frames[0].cols);

    std::vector<ImageGrid> warped(k);
    for (int f = 0; f < k; ++f) {
        if (f == reference_index) {
            out.transforms[f] = RigidTransform{};
            warped[f] = frames[f];
            continue;
        }
        try {
            out.transforms[f] = register_pair(frames[f], frames[reference_index], opts);
        } catch (const RegistrationError& e) {
            throw RegistrationError("frame " + std::to_string(f) + ": " + e.what());
        }
        WarpResult w = warp(frames[f], out.transforms[f]);
        // Fill the out-of-frame sliver by edge replication so the stacked
        // volume has no zero holes; out.valid still records the honest
        // jointly-observed region.
        for (int j = 0; j < frames[f].cols; ++j)
            for (int i = 0; i < frames[f].rows; ++i)
                if (!w.valid(i, j)) {
                    double sr, sc;
                    inverse_map(out.transforms[f], frames[f].rows, frames[f].cols, i, j, sr, sc);
                    w.image.values(i, j) = bilinear_clamped(frames[f].values, sr, sc);
                }
        warped[f] = std::move(w.image);
        out.valid = out.valid.cwiseProduct(w.valid);
    }
    if (out.valid.cast<int>().sum() == 0)
        throw RegistrationError("register_stack: jointly valid region is empty");
    out.registered = stack_frames(warped);
    return out;
}

void write_transforms(const std::vector<RigidTransform>& transforms, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "# frame dx dy theta_deg\n";
    char buf[128];
    for (size_t f = 0; f < transforms.size(); ++f) {
        std::snprintf(buf, sizeof buf, "%zu %.9f %.9f %.9f\n", f, transforms[f].dx,
                      transforms[f].dy, transforms[f].theta_deg);
        out << buf;
    }
}

std::vector<RigidTransform> read_transforms(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open transforms file '" + path + "'");
    std::vector<RigidTransform> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        size_t idx;
        RigidTransform t;
        if (!(ss >> idx >> t.dx >> t.dy >> t.theta_deg))
            throw std::runtime_error("malformed transform line in '" + path + "': " + line);
        if (idx != out.size())
            throw std::runtime_error("transform indices out of order in '" + path + "'");
        out.push_back(t);
    }
    return out;
}

}  // namespace despeckle
