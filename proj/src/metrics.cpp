#include "despeckle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <stdexcept>

namespace despeckle {

namespace {

constexpr double kEdtInf = 1e20;

void check_pair(const RawImage& a, const RawImage& b) {
    validate(a);
    validate(b);
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("metric images differ in geometry");
    if (a.bit_depth != b.bit_depth)
        throw std::invalid_argument("metric images differ in bit depth");
}

Matrix gaussian_blur(const Matrix& x, double sigma) {
    const int radius = int(std::ceil(3.0 * sigma));
    Eigen::VectorXd kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i)
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel /= kernel.sum();

    const int m = int(x.rows()), n = int(x.cols());
    Matrix tmp(m, n), out(m, n);
    for (int c = 0; c < n; ++c)  // vertical pass
        for (int r = 0; r < m; ++r) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * x(std::clamp(r + i, 0, m - 1), c);
            tmp(r, c) = acc;
        }
    for (int c = 0; c < n; ++c)  // horizontal pass
        for (int r = 0; r < m; ++r) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp(r, std::clamp(c + i, 0, n - 1));
            out(r, c) = acc;
        }
    return out;
}

void sobel(const Matrix& x, Matrix& gx, Matrix& gy) {
    const int m = int(x.rows()), n = int(x.cols());
    gx.resize(m, n);
    gy.resize(m, n);
    auto at = [&](int r, int c) { return x(std::clamp(r, 0, m - 1), std::clamp(c, 0, n - 1)); };
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < m; ++r) {
            gx(r, c) = at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1) -
                       at(r - 1, c - 1) - 2.0 * at(r, c - 1) - at(r + 1, c - 1);
            gy(r, c) = at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1) -
                       at(r - 1, c - 1) - 2.0 * at(r - 1, c) - at(r - 1, c + 1);
        }
}

// one-dimensional squared-distance transform (lower envelope of parabolas)
void dt1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z) {
    const int n = int(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -kEdtInf;
    z[1] = kEdtInf;
    for (int q = 1; q < n; ++q) {
        double s =
            ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
        while (s <= z[k]) {
            --k;
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kEdtInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = double(q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

RawImage crop(const RawImage& img, const RoiRect& roi) {
    RawImage out;
    out.rows = roi.h;
    out.cols = roi.w;
    out.bit_depth = img.bit_depth;
    out.pixels = img.pixels.block(roi.y, roi.x, roi.h, roi.w);
    return out;
}

}  // namespace

double psnr(const RawImage& recon, const RawImage& ref) {
    check_pair(recon, ref);
    const double mse = (recon.pixels.cast<double>() - ref.pixels.cast<double>()).squaredNorm() /
                       double(recon.pixels.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    const double peak = recon.max_value();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const RawImage& recon, const RawImage& ref, const SsimOptions& opts) {
    check_pair(recon, ref);
    const int win = opts.window;
    if (win < 3 || win % 2 == 0) throw std::invalid_argument("ssim window must be odd and >= 3");
    if (!(opts.sigma > 0.0)) throw std::invalid_argument("ssim sigma must be positive");
    if (recon.rows < win || recon.cols < win)
        throw std::invalid_argument("image smaller than the ssim window");

    const int half = win / 2;
    Matrix w(win, win);
    for (int c = 0; c < win; ++c)
        for (int r = 0; r < win; ++r) {
            const double dr = r - half, dc = c - half;
            w(r, c) = std::exp(-0.5 * (dr * dr + dc * dc) / (opts.sigma * opts.sigma));
        }
    w /= w.sum();

    const double peak = recon.max_value();
    const double c1 = opts.k1 * peak * opts.k1 * peak;
    const double c2 = opts.k2 * peak * opts.k2 * peak;
    const Matrix x = recon.pixels.cast<double>();
    const Matrix y = ref.pixels.cast<double>();

    double total = 0.0;
    long count = 0;
    for (int c0 = 0; c0 + win <= recon.cols; ++c0)
        for (int r0 = 0; r0 + win <= recon.rows; ++r0) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            for (int c = 0; c < win; ++c)
                for (int r = 0; r < win; ++r) {
                    const double wi = w(r, c), xv = x(r0 + r, c0 + c), yv = y(r0 + r, c0 + c);
                    mx += wi * xv;
                    my += wi * yv;
                    xx += wi * xv * xv;
                    yy += wi * yv * yv;
                    xy += wi * xv * yv;
                }
            const double vx = xx - mx * mx, vy = yy - my * my, vxy = xy - mx * my;
            total += (2.0 * mx * my + c1) * (2.0 * vxy + c2) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / double(count);
}

EdgeMap canny(const RawImage& img, const CannyOptions& opts) {
    validate(img);
    if (!(opts.sigma > 0.0) || !(opts.high_percentile > 0.0) || opts.high_percentile > 1.0 ||
        !(opts.low_ratio > 0.0) || opts.low_ratio > 1.0)
        throw std::invalid_argument("canny options out of range");

    const int m = img.rows, n = img.cols;
    Matrix gx, gy;
    sobel(gaussian_blur(img.pixels.cast<double>(), opts.sigma), gx, gy);
    const Matrix mag = (gx.cwiseProduct(gx) + gy.cwiseProduct(gy)).cwiseSqrt();

    std::vector<double> nonzero;
    nonzero.reserve(mag.size());
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < m; ++r)
            if (mag(r, c) > 0.0) nonzero.push_back(mag(r, c));
    EdgeMap edges = EdgeMap::Zero(m, n);
    if (nonzero.empty()) return edges;

    std::sort(nonzero.begin(), nonzero.end());
    const size_t rank =
        size_t(std::ceil(opts.high_percentile * double(nonzero.size()))) - 1;  // nearest-rank
    const double high = nonzero[std::min(rank, nonzero.size() - 1)];
    const double low = opts.low_ratio * high;

    // direction sectors: E, SE, S, SW (the opposite neighbor covers the rest)
    static const int kOff[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};
    auto mag_at = [&](int r, int c) {
        return (r < 0 || r >= m || c < 0 || c >= n) ? 0.0 : mag(r, c);
    };
    constexpr double kPi = 3.14159265358979323846;
    EdgeMap keep = EdgeMap::Zero(m, n);
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < m; ++r) {
            if (mag(r, c) == 0.0) continue;
            double ang = std::atan2(gy(r, c), gx(r, c));
            if (ang < 0.0) ang += kPi;
            const int sector = int(std::floor((ang + kPi / 8.0) / (kPi / 4.0))) % 4;
            const int dr = kOff[sector][0], dc = kOff[sector][1];
            // survives when strictly above one side and at least the other,
            // so a two-pixel plateau thins to a single line
            if (mag(r, c) > mag_at(r - dr, c - dc) && mag(r, c) >= mag_at(r + dr, c + dc))
                keep(r, c) = 1;
        }

    std::deque<std::pair<int, int>> queue;
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < m; ++r)
            if (keep(r, c) && mag(r, c) >= high) {
                edges(r, c) = 1;
                queue.emplace_back(r, c);
            }
    while (!queue.empty()) {
        const auto [r, c] = queue.front();
        queue.pop_front();
        for (int dc = -1; dc <= 1; ++dc)
            for (int dr = -1; dr <= 1; ++dr) {
                const int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= m || cc < 0 || cc >= n) continue;
                if (edges(rr, cc) || !keep(rr, cc) || mag(rr, cc) < low) continue;
                edges(rr, cc) = 1;
                queue.emplace_back(rr, cc);
            }
    }
    return edges;
}

Matrix squared_edt(const EdgeMap& edges) {
    const int m = int(edges.rows()), n = int(edges.cols());
    if (m == 0 || n == 0) throw std::invalid_argument("distance transform of an empty map");
    Matrix d(m, n);
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < m; ++r) d(r, c) = edges(r, c) ? 0.0 : kEdtInf;

    const int len = std::max(m, n);
    std::vector<double> f(len), out(len), z(len + 1);
    std::vector<int> v(len);
    for (int c = 0; c < n; ++c) {  // along columns
        for (int r = 0; r < m; ++r) f[r] = d(r, c);
        f.resize(m);
        out.resize(m);
        dt1d(f, out, v, z);
        for (int r = 0; r < m; ++r) d(r, c) = out[r];
        f.resize(len);
        out.resize(len);
    }
    for (int r = 0; r < m; ++r) {  // along rows
        for (int c = 0; c < n; ++c) f[c] = d(r, c);
        f.resize(n);
        out.resize(n);
        dt1d(f, out, v, z);
        for (int c = 0; c < n; ++c) d(r, c) = out[c];
        f.resize(len);
        out.resize(len);
    }
    return d;
}

double fom(const EdgeMap& recon_edges, const EdgeMap& ref_edges, double gamma) {
    if (recon_edges.rows() != ref_edges.rows() || recon_edges.cols() != ref_edges.cols())
        throw std::invalid_argument("edge maps differ in geometry");
    if (!(gamma > 0.0)) throw std::invalid_argument("fom gamma must be positive");
    const long n_ref = (ref_edges.array() != 0).count();
    if (n_ref == 0) throw std::invalid_argument("reference edge map is empty");
    const long n_rec = (recon_edges.array() != 0).count();
    if (n_rec == 0) return 0.0;

    const Matrix d2 = squared_edt(ref_edges);
    double sum = 0.0;
    for (int c = 0; c < recon_edges.cols(); ++c)
        for (int r = 0; r < recon_edges.rows(); ++r)
            if (recon_edges(r, c)) sum += 1.0 / (1.0 + gamma * d2(r, c));
    return sum / double(std::max(n_rec, n_ref));
}

std::vector<MetricsReport> evaluate(const RawImage& recon, const RawImage& ref,
                                    const std::vector<RoiRect>& rois) {
    check_pair(recon, ref);
    for (const auto& roi : rois)
        if (roi.x < 0 || roi.y < 0 || roi.w <= 0 || roi.h <= 0 || roi.x + roi.w > recon.cols ||
            roi.y + roi.h > recon.rows)
            throw std::invalid_argument("roi '" + roi.name + "' is outside the image");

    std::vector<MetricsReport> out;
    auto report = [](const std::string& name, const RawImage& a, const RawImage& b) {
        MetricsReport r;
        r.region = name;
        r.psnr_db = psnr(a, b);
        r.ssim = ssim(a, b);
        r.fom = fom(canny(a), canny(b));
        return r;
    };
    out.push_back(report("entire-image", recon, ref));
    for (const auto& roi : rois) out.push_back(report(roi.name, crop(recon, roi), crop(ref, roi)));
    return out;
}

std::string metrics_csv(const std::string& image_label,
                        const std::vector<MetricsReport>& reports) {
    std::string out = "image,region,psnr_db,ssim,fom\n";
    char line[256];
    for (const auto& r : reports) {
        if (std::isinf(r.psnr_db))
            std::snprintf(line, sizeof line, "%s,%s,inf,%.6f,%.6f\n", image_label.c_str(),
                          r.region.c_str(), r.ssim, r.fom);
        else
            std::snprintf(line, sizeof line, "%s,%s,%.4f,%.6f,%.6f\n", image_label.c_str(),
                          r.region.c_str(), r.psnr_db, r.ssim, r.fom);
        out += line;
    }
    return out;
}

}  // namespace despeckle
