#include "despeckle/volume.hpp"

#include <stdexcept>
#include <string>

namespace despeckle {

void validate(const ImageGrid& g) {
    if (g.rows < 2 || g.cols < 2)
        throw std::invalid_argument("ImageGrid needs at least 2x2 pixels, got " +
                                    std::to_string(g.rows) + "x" + std::to_string(g.cols));
    if (g.values.rows() != g.rows || g.values.cols() != g.cols)
        throw std::invalid_argument("ImageGrid value matrix does not match its geometry");
    if (!g.values.allFinite())
        throw std::invalid_argument("ImageGrid contains non-finite values");
}

void validate(const LogVolume& v) {
    if (v.frames < 2)
        throw std::invalid_argument("LogVolume needs k >= 2 frames, got " + std::to_string(v.frames));
    if (v.rows < 2 || v.cols < 2)
        throw std::invalid_argument("LogVolume frame geometry must be at least 2x2");
    if (v.data.rows() != static_cast<Eigen::Index>(v.rows) * v.cols || v.data.cols() != v.frames)
        throw std::invalid_argument("LogVolume data shape does not match its geometry");
    if (!v.data.allFinite())
        throw std::invalid_argument("LogVolume contains non-finite values");
}

void validate(const SigmaMap& s) {
    if (s.data.rows() != static_cast<Eigen::Index>(s.rows) * s.cols || s.data.cols() != s.frames)
        throw std::invalid_argument("SigmaMap data shape does not match its geometry");
    if (!s.data.allFinite())
        throw std::invalid_argument("SigmaMap contains non-finite values");
    if ((s.data.array() < 0.0).any())
        throw std::invalid_argument("SigmaMap contains negative entries");
}

LogVolume stack_frames(const std::vector<ImageGrid>& frames) {
    if (frames.size() < 2)
        throw std::invalid_argument("stack_frames needs at least 2 frames, got " +
                                    std::to_string(frames.size()));
    const int m = frames[0].rows, n = frames[0].cols;
    for (const auto& f : frames) {
        validate(f);
        if (f.rows != m || f.cols != n)
            throw std::invalid_argument("stack_frames: frame geometry mismatch (" +
                                        std::to_string(f.rows) + "x" + std::to_string(f.cols) +
                                        " vs " + std::to_string(m) + "x" + std::to_string(n) + ")");
    }
    LogVolume v;
    v.rows = m;
    v.cols = n;
    v.frames = static_cast<int>(frames.size());
    v.data.resize(static_cast<Eigen::Index>(m) * n, v.frames);
    for (int j = 0; j < v.frames; ++j)
        v.data.col(j) = Eigen::Map<const Eigen::VectorXd>(frames[j].values.data(),
                                                          static_cast<Eigen::Index>(m) * n);
    return v;
}

ImageGrid unstack(const LogVolume& v, int frame) {
    if (frame < 0 || frame >= v.frames)
        throw std::invalid_argument("unstack: frame index " + std::to_string(frame) +
                                    " out of range [0, " + std::to_string(v.frames) + ")");
    ImageGrid g;
    g.rows = v.rows;
    g.cols = v.cols;
    g.values = Eigen::Map<const Matrix>(v.data.col(frame).data(), v.rows, v.cols);
    return g;
}

Matrix grad_matrix(const Matrix& x, int m, int n) {
    const Eigen::Index mn = static_cast<Eigen::Index>(m) * n;
    if (x.rows() != mn)
        throw std::invalid_argument("grad: matrix rows do not equal m*n");
    Matrix g = Matrix::Zero(2 * mn, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double* src = x.col(c).data();
        double* h = g.col(c).data();        // horizontal part, rows [0, mn)
        double* v = g.col(c).data() + mn;   // vertical part, rows [mn, 2mn)
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < m; ++i) {
                const Eigen::Index idx = i + static_cast<Eigen::Index>(j) * m;
                if (j + 1 < n) h[idx] = src[idx + m] - src[idx];
                if (i + 1 < m) v[idx] = src[idx + 1] - src[idx];
            }
        }
    }
    return g;
}

Matrix grad_adjoint_matrix(const Matrix& g, int m, int n) {
    const Eigen::Index mn = static_cast<Eigen::Index>(m) * n;
    if (g.rows() != 2 * mn)
        throw std::invalid_argument("grad_adjoint: matrix rows do not equal 2*m*n");
    Matrix x = Matrix::Zero(mn, g.cols());
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
        const double* h = g.col(c).data();
        const double* v = g.col(c).data() + mn;
        double* dst = x.col(c).data();
        // Transpose of the forward difference: each gradient entry adds to its
        // right/lower neighbor and subtracts from its own pixel.
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < m; ++i) {
                const Eigen::Index idx = i + static_cast<Eigen::Index>(j) * m;
                if (j + 1 < n) {
                    dst[idx + m] += h[idx];
                    dst[idx] -= h[idx];
                }
                if (i + 1 < m) {
                    dst[idx + 1] += v[idx];
                    dst[idx] -= v[idx];
                }
            }
        }
    }
    return x;
}

GradVolume grad(const LogVolume& v) {
    validate(v);
    GradVolume g;
    g.rows = v.rows;
    g.cols = v.cols;
    g.frames = v.frames;
    g.data = grad_matrix(v.data, v.rows, v.cols);
    return g;
}

LogVolume grad_adjoint(const GradVolume& g) {
    if (g.data.rows() != 2 * static_cast<Eigen::Index>(g.rows) * g.cols)
        throw std::invalid_argument("grad_adjoint: GradVolume shape is not 2*m*n rows");
    LogVolume v;
    v.rows = g.rows;
    v.cols = g.cols;
    v.frames = g.frames;
    v.data = grad_adjoint_matrix(g.data, g.rows, g.cols);
    return v;
}

}  // namespace despeckle
