#pragma once

#include <Eigen/Dense>
#include <vector>

namespace despeckle {

using Matrix = Eigen::MatrixXd;
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// A single 2D frame in log-intensity units, m x n.
struct ImageGrid {
    int rows = 0;
    int cols = 0;
    Matrix values;
};

// A registered multi-frame stack: column j is frame j flattened column-major,
// so data is (m*n) x k.  Houses M, L and N of the optimization model.
struct LogVolume {
    int rows = 0;
    int cols = 0;
    int frames = 0;
    Matrix data;
};

// Per-pixel noise standard deviation in log units, same shape as a LogVolume.
struct SigmaMap {
    int rows = 0;
    int cols = 0;
    int frames = 0;
    Matrix data;
};

// Per-frame gradients: horizontal differences stacked above vertical ones,
// (2*m*n) x k.
struct GradVolume {
    int rows = 0;
    int cols = 0;
    int frames = 0;
    Matrix data;
};

void validate(const ImageGrid& g);
void validate(const LogVolume& v);
void validate(const SigmaMap& s);

LogVolume stack_frames(const std::vector<ImageGrid>& frames);
ImageGrid unstack(const LogVolume& v, int frame);

// Forward differences with replicate padding: the last column/row of each
// directional gradient is zero.
GradVolume grad(const LogVolume& v);
LogVolume grad_adjoint(const GradVolume& g);

// Same operators on bare matrices (geometry supplied by the caller); the
// solver hot loop uses these to avoid re-wrapping.
Matrix grad_matrix(const Matrix& x, int m, int n);
Matrix grad_adjoint_matrix(const Matrix& g, int m, int n);

}  // namespace despeckle
