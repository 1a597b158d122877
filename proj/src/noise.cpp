#include "despeckle/noise.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace despeckle {

namespace {

double median_inplace(std::vector<double>& v) {
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double med = v[mid];
    if (v.size() % 2 == 0) {
        // lower half's max completes the midpoint pair
        med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + mid));
    }
    return med;
}

void check_options(const NoiseOptions& o) {
    if (o.mad_window < 1 || o.mad_window % 2 == 0 || o.mode_window % 2 == 0 ||
        o.mad_window >= o.mode_window)
        throw std::invalid_argument("noise windows must be odd with N1 < N2");
    if (!(o.mode_bin > 0.0)) throw std::invalid_argument("mode bin width must be positive");
    if (!(o.spline_p > 0.0) || o.spline_p > 1.0)
        throw std::invalid_argument("spline parameter must lie in (0, 1]");
}

double mad_at(const Matrix& values, int row, int col, int window) {
    const int half = window / 2;
    const int m = int(values.rows()), n = int(values.cols());
    std::vector<double> vals;
    vals.reserve(size_t(window) * window);
    for (int dc = -half; dc <= half; ++dc) {
        const int c = std::clamp(col + dc, 0, n - 1);
        for (int dr = -half; dr <= half; ++dr)
            vals.push_back(values(std::clamp(row + dr, 0, m - 1), c));
    }
    const double med = median_inplace(vals);
    for (double& v : vals) v = std::abs(v - med);
    return 1.4826 * median_inplace(vals);
}

// Smooth every column of `a` as a uniformly sampled 1D signal (natural cubic
// smoothing spline in the Reinsch form: f = y - alpha*Q*gamma with
// (R + alpha*Q^T Q) gamma = Q^T y and alpha = (1-p)/p).
Matrix smooth_columns(const Matrix& a, double p) {
    const int n = int(a.rows());
    if (n < 3 || p >= 1.0) return a;
    const double alpha = (1.0 - p) / p;

    // pentadiagonal system matrix on the n-2 interior second differences
    Matrix sys = Matrix::Zero(n - 2, n - 2);
    for (int j = 0; j < n - 2; ++j) {
        sys(j, j) = 2.0 / 3.0 + alpha * 6.0;
        if (j + 1 < n - 2) sys(j, j + 1) = sys(j + 1, j) = 1.0 / 6.0 - alpha * 4.0;
        if (j + 2 < n - 2) sys(j, j + 2) = sys(j + 2, j) = alpha;
    }
    Matrix rhs(n - 2, a.cols());
    for (int j = 0; j < n - 2; ++j)
        rhs.row(j) = a.row(j) - 2.0 * a.row(j + 1) + a.row(j + 2);
    const Matrix gamma = Eigen::LLT<Matrix>(sys).solve(rhs);

    Matrix out = a;
    for (int i = 0; i < n; ++i) {
        if (i >= 2) out.row(i) -= alpha * gamma.row(i - 2);
        if (i >= 1 && i <= n - 2) out.row(i) += 2.0 * alpha * gamma.row(i - 1);
        if (i <= n - 3) out.row(i) -= alpha * gamma.row(i);
    }
    return out;
}

}  // namespace

double mad_sigma(const ImageGrid& grid, int row, int col, int window) {
    validate(grid);
    if (window < 1 || window % 2 == 0)
        throw std::invalid_argument("mad window must be odd and positive");
    if (row < 0 || row >= grid.rows || col < 0 || col >= grid.cols)
        throw std::invalid_argument("mad center outside the grid");

    return mad_at(grid.values, row, col, window);
}

double mode_sigma(const std::vector<double>& candidates, double bin_width) {
    if (candidates.empty()) throw std::invalid_argument("mode over an empty candidate list");
    if (!(bin_width > 0.0)) throw std::invalid_argument("mode bin width must be positive");
    for (double v : candidates)
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("mode candidates must be nonnegative and finite");

    // bins are centered on integer multiples of the width so exact zeros map to 0
    std::vector<long> bins;
    bins.reserve(candidates.size());
    for (double v : candidates) bins.push_back(long(std::floor(v / bin_width + 0.5)));
    std::sort(bins.begin(), bins.end());

    long best_bin = bins.front();
    size_t best_count = 0;
    for (size_t i = 0; i < bins.size();) {
        size_t j = i;
        while (j < bins.size() && bins[j] == bins[i]) ++j;
        if (j - i > best_count) {  // strict: ties keep the earlier (smaller) bin
            best_count = j - i;
            best_bin = bins[i];
        }
        i = j;
    }
    return best_bin * bin_width;
}

Matrix smooth_spline_field(const Matrix& field, double p) {
    if (!(p > 0.0) || p > 1.0)
        throw std::invalid_argument("spline parameter must lie in (0, 1]");
    Matrix rows_done = smooth_columns(field.transpose(), p).transpose();
    return smooth_columns(rows_done, p);
}

SigmaMap estimate_sigma(const LogVolume& volume, const Mask& mask, const NoiseOptions& opts) {
    validate(volume);
    check_options(opts);
    const int m = volume.rows, n = volume.cols;
    if (m < opts.mode_window || n < opts.mode_window)
        throw std::invalid_argument("frame smaller than the outer noise window (" +
                                    std::to_string(opts.mode_window) + ")");
    const bool masked = mask.size() > 0;
    if (masked && (int(mask.rows()) != m || int(mask.cols()) != n))
        throw std::invalid_argument("mask shape does not match the volume");
    if (masked && !(mask.array() != 0).any())
        throw std::invalid_argument("mask leaves no valid pixels");

    const int reach = (opts.mode_window - opts.mad_window) / 2;

    SigmaMap out;
    out.rows = m;
    out.cols = n;
    out.frames = volume.frames;
    out.data.resize(size_t(m) * n, volume.frames);

    for (int f = 0; f < volume.frames; ++f) {
        const Matrix frame =
            Eigen::Map<const Matrix>(volume.data.col(f).data(), m, n);

        Matrix mad_field(m, n);
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < m; ++r)
                mad_field(r, c) = mad_at(frame, r, c, opts.mad_window);

        // mode over the MAD values of all inner windows contained in the outer one
        Matrix sigma_bar(m, n);
        std::vector<double> cand;
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < m; ++r) {
                cand.clear();
                for (int dc = -reach; dc <= reach; ++dc)
                    for (int dr = -reach; dr <= reach; ++dr)
                        cand.push_back(mad_field(std::clamp(r + dr, 0, m - 1),
                                                 std::clamp(c + dc, 0, n - 1)));
                sigma_bar(r, c) = mode_sigma(cand, opts.mode_bin);
            }

        if (masked) {
            // multi-source BFS: invalid pixels take the estimate of the
            // nearest valid one (8-connected rings)
            Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> dist(m, n);
            std::deque<std::pair<int, int>> queue;
            for (int c = 0; c < n; ++c)
                for (int r = 0; r < m; ++r) {
                    dist(r, c) = mask(r, c) != 0 ? 0 : -1;
                    if (mask(r, c) != 0) queue.emplace_back(r, c);
                }
            while (!queue.empty()) {
                const auto [r, c] = queue.front();
                queue.pop_front();
                for (int dc = -1; dc <= 1; ++dc)
                    for (int dr = -1; dr <= 1; ++dr) {
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= m || cc < 0 || cc >= n || dist(rr, cc) >= 0) continue;
                        dist(rr, cc) = dist(r, c) + 1;
                        sigma_bar(rr, cc) = sigma_bar(r, c);
                        queue.emplace_back(rr, cc);
                    }
            }
        }

        Matrix smooth = smooth_spline_field(sigma_bar, opts.spline_p).cwiseMax(0.0);
        out.data.col(f) = Eigen::Map<const Eigen::VectorXd>(smooth.data(), smooth.size());
    }
    validate(out);
    return out;
}

}  // namespace despeckle
