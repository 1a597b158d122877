#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "despeckle/volume.hpp"

namespace despeckle {

// Raised when an update produces non-finite values or a decomposition fails.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class MultiplierStepMode {
    inverse_theta,  // Y += (1/theta) * G
    standard        // Y += theta * G
};

struct SolverParams {
    double lambda = 0.2;      // weight of the sparse-gradient term
    double theta0 = 1e-2;     // initial penalty weight
    double rho = 1.6;         // penalty growth factor per iteration
    double theta_max = 10.0;
    double delta_L = 1e-2;    // gradient-descent rate for the low-rank block
    double delta_N = 5e-2;    // gradient-descent rate for the noise block
    int max_iters = 100;
    double tol = 1e-4;        // relative change of L
    MultiplierStepMode multiplier_step_mode = MultiplierStepMode::inverse_theta;
    int grad_inner_steps = 1;  // L/N descent steps per outer iteration
};

// One iterate of the augmented-Lagrangian scheme.  All matrices are stacked
// per frame: (m*n) x k except S2 and Y2 which live in gradient space,
// (2*m*n) x k.
struct SolverState {
    Matrix L;   // low-rank log-intensity estimate
    Matrix N;   // separated noise
    Matrix S1;  // surrogate for L in the nuclear-norm term
    Matrix S2;  // surrogate for the gradient of L in the l1 term
    Matrix eps; // nonnegative slack of the noise-power constraint
    Matrix Y1, Y2, Y3, Y4;  // multipliers of the four constraint blocks
    double theta = 0.0;
    int iter = 0;
};

struct IterationStats {
    int iter = 0;
    double g1 = 0, g2 = 0, g3 = 0, g4 = 0;  // Frobenius norms of the residuals
    double objective = 0;
    double theta = 0;       // penalty weight used by this iteration
    double rel_change = 0;  // |L_new - L_old|_F / |L_old|_F
};

struct SolveReport {
    int iterations = 0;
    bool converged = false;
    double g1 = 0, g2 = 0, g3 = 0, g4 = 0;  // final residual norms
    double theta = 0;                       // final penalty weight
    double wall_seconds = 0;  // measured; excluded from report_text so runs serialize identically
    std::vector<IterationStats> trace;
};

// One record per iteration, fixed precision; wall time deliberately omitted.
std::string report_text(const SolveReport& report);

double soft_threshold(double x, double tau);
Matrix soft_threshold(const Matrix& x, double tau);

// Singular value thresholding, U*max(S-tau,0)*V^T, via the k x k Gram
// eigenproblem (the stacks are tall and thin).
Matrix svt(const Matrix& v, double tau);

double nuclear_norm(const Matrix& v);

// Mean-over-frames initialization: L0 rank-1, N0 = M - L0, multipliers zero.
SolverState initial_state(const LogVolume& m_vol, const SolverParams& params);

// Augmented Lagrangian value at the given state.
double objective(const SolverState& state, const LogVolume& m_vol, const SigmaMap& sigma,
                 const SolverParams& params);

// One full iteration: S1/S2 proximal updates from the current L, one (or
// grad_inner_steps) explicit descent step(s) on L and N, the closed-form
// nonnegative slack, then multiplier and penalty updates.
SolverState step(const SolverState& state, const LogVolume& m_vol, const SigmaMap& sigma,
                 const SolverParams& params);

struct DenoiseResult {
    LogVolume low_rank;
    LogVolume noise;
    SolveReport report;
};

DenoiseResult denoise(const LogVolume& m_vol, const SigmaMap& sigma,
                      const SolverParams& params = {});

}  // namespace despeckle
