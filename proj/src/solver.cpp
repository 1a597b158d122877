#include "despeckle/solver.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace despeckle {

namespace {

void check_params(const SolverParams& p) {
    if (!(p.lambda > 0.0) || !(p.theta0 > 0.0) || !(p.theta_max > 0.0) || !(p.delta_L > 0.0) ||
        !(p.delta_N > 0.0) || !(p.tol > 0.0))
        throw std::invalid_argument("solver parameters must be positive");
    if (!(p.rho > 1.0)) throw std::invalid_argument("penalty growth rho must exceed 1");
    if (p.theta0 > p.theta_max) throw std::invalid_argument("theta0 must not exceed theta_max");
    if (p.max_iters < 1 || p.grad_inner_steps < 1)
        throw std::invalid_argument("iteration counts must be at least 1");
}

void check_shapes(const SolverState& s, const LogVolume& m_vol, const SigmaMap& sigma) {
    const Eigen::Index mn = Eigen::Index(m_vol.rows) * m_vol.cols;
    const Eigen::Index k = m_vol.frames;
    auto bad = [&](const Matrix& x, Eigen::Index r) { return x.rows() != r || x.cols() != k; };
    if (sigma.data.rows() != mn || sigma.data.cols() != k)
        throw std::invalid_argument("sigma map shape does not match the volume");
    if (bad(s.L, mn) || bad(s.N, mn) || bad(s.S1, mn) || bad(s.eps, mn) || bad(s.Y1, mn) ||
        bad(s.Y3, mn) || bad(s.Y4, mn) || bad(s.S2, 2 * mn) || bad(s.Y2, 2 * mn))
        throw std::invalid_argument("solver state shape does not match the volume");
    if (!(s.theta > 0.0)) throw std::invalid_argument("state penalty weight must be positive");
}

void check_finite(const Matrix& x, const char* update, int iter) {
    if (!x.allFinite())
        throw SolverError(std::string("solver diverged: non-finite values in the ") + update +
                          " update at iteration " + std::to_string(iter));
}

// eigen-decomposition of V^T V; shared by svt and nuclear_norm
Eigen::SelfAdjointEigenSolver<Matrix> gram_eig(const Matrix& v) {
    const Matrix gram = v.transpose() * v;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    if (eig.info() != Eigen::Success)
        throw SolverError("singular value thresholding: Gram eigendecomposition failed");
    return eig;
}

}  // namespace

double soft_threshold(double x, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("soft threshold needs tau > 0");
    if (x > tau) return x - tau;
    if (x < -tau) return x + tau;
    return 0.0;
}

Matrix soft_threshold(const Matrix& x, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("soft threshold needs tau > 0");
    return ((x.array() - tau).cwiseMax(0.0) - (-x.array() - tau).cwiseMax(0.0)).matrix();
}

Matrix svt(const Matrix& v, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("svt needs tau > 0");
    const auto eig = gram_eig(v);
    Eigen::VectorXd scale = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index i = 0; i < scale.size(); ++i)
        scale[i] = scale[i] > tau ? (scale[i] - tau) / scale[i] : 0.0;
    return v * (eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose());
}

double nuclear_norm(const Matrix& v) {
    Eigen::VectorXd w = gram_eig(v).eigenvalues().cwiseMax(0.0);
    // squaring doubles the condition number; zero out eigenvalues that are
    // pure roundoff so their sqrt does not pollute the sum
    const double floor = w.size() ? 1e-14 * w.maxCoeff() : 0.0;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w[i] > floor) sum += std::sqrt(w[i]);
    return sum;
}

SolverState initial_state(const LogVolume& m_vol, const SolverParams& params) {
    validate(m_vol);
    check_params(params);
    const Eigen::Index mn = m_vol.data.rows();
    const Eigen::Index k = m_vol.frames;
    SolverState s;
    s.L = m_vol.data.rowwise().mean().replicate(1, k);
    s.N = m_vol.data - s.L;
    s.S1 = Matrix::Zero(mn, k);
    s.S2 = Matrix::Zero(2 * mn, k);
    s.eps = Matrix::Zero(mn, k);
    s.Y1 = Matrix::Zero(mn, k);
    s.Y2 = Matrix::Zero(2 * mn, k);
    s.Y3 = Matrix::Zero(mn, k);
    s.Y4 = Matrix::Zero(mn, k);
    s.theta = params.theta0;
    s.iter = 0;
    return s;
}

double objective(const SolverState& s, const LogVolume& m_vol, const SigmaMap& sigma,
                 const SolverParams& params) {
    check_params(params);
    check_shapes(s, m_vol, sigma);
    const int m = m_vol.rows, n = m_vol.cols;
    const Matrix g1 = s.S1 - s.L;
    const Matrix g2 = s.S2 - grad_matrix(s.L, m, n);
    const Matrix g3 = m_vol.data - s.L - s.N;
    const Matrix g4 =
        s.N.cwiseProduct(s.N) - 9.0 * sigma.data.cwiseProduct(sigma.data) + s.eps;
    const double th = s.theta;
    auto term = [th](const Matrix& y, const Matrix& g) {
        return y.cwiseProduct(g).sum() + 0.5 * th * g.squaredNorm();
    };
    return nuclear_norm(s.S1) + params.lambda * s.S2.cwiseAbs().sum() + term(s.Y1, g1) +
           term(s.Y2, g2) + term(s.Y3, g3) + term(s.Y4, g4);
}

SolverState step(const SolverState& state, const LogVolume& m_vol, const SigmaMap& sigma,
                 const SolverParams& params) {
    check_params(params);
    check_shapes(state, m_vol, sigma);
    const int m = m_vol.rows, n = m_vol.cols;
    const Matrix& M = m_vol.data;
    const Matrix sig2_9 = 9.0 * sigma.data.cwiseProduct(sigma.data);
    const double th = state.theta;
    const double thi = 1.0 / th;
    const int iter = state.iter;

    SolverState s = state;

    s.S1 = svt(state.L - thi * state.Y1, thi);
    check_finite(s.S1, "S1", iter);
    s.S2 = soft_threshold(grad_matrix(state.L, m, n) - thi * state.Y2, params.lambda * thi);
    check_finite(s.S2, "S2", iter);

    for (int inner = 0; inner < params.grad_inner_steps; ++inner) {
        const Matrix pl = grad_matrix(s.L, m, n);
        const Matrix grad_L = th * (s.L - s.S1 - thi * state.Y1) +
                              th * (grad_adjoint_matrix(pl, m, n) -
                                    grad_adjoint_matrix(s.S2 + thi * state.Y2, m, n)) +
                              th * (s.L - M + s.N - thi * state.Y3);
        const Matrix grad_N =
            th * (s.N - M + s.L - thi * state.Y3) +
            th * (s.N.cwiseProduct(s.N) - sig2_9 + s.eps + thi * state.Y4)
                    .cwiseProduct(2.0 * s.N);
        s.L -= params.delta_L * grad_L;
        s.N -= params.delta_N * grad_N;
    }
    check_finite(s.L, "L", iter);
    check_finite(s.N, "N", iter);

    // closed-form slack from the pre-update noise block
    s.eps = (sig2_9 - state.N.cwiseProduct(state.N) - thi * state.Y4).cwiseMax(0.0);
    check_finite(s.eps, "epsilon", iter);

    const Matrix g1 = s.S1 - s.L;
    const Matrix g2 = s.S2 - grad_matrix(s.L, m, n);
    const Matrix g3 = M - s.L - s.N;
    const Matrix g4 = s.N.cwiseProduct(s.N) - sig2_9 + s.eps;
    const double mult = params.multiplier_step_mode == MultiplierStepMode::inverse_theta ? thi : th;
    s.Y1 += mult * g1;
    check_finite(s.Y1, "Y1", iter);
    s.Y2 += mult * g2;
    check_finite(s.Y2, "Y2", iter);
    s.Y3 += mult * g3;
    check_finite(s.Y3, "Y3", iter);
    s.Y4 += mult * g4;
    check_finite(s.Y4, "Y4", iter);

    s.theta = std::min(params.rho * th, params.theta_max);
    s.iter = iter + 1;
    return s;
}

DenoiseResult denoise(const LogVolume& m_vol, const SigmaMap& sigma, const SolverParams& params) {
    const auto t0 = std::chrono::steady_clock::now();
    validate(m_vol);
    validate(sigma);
    if (sigma.rows != m_vol.rows || sigma.cols != m_vol.cols || sigma.frames != m_vol.frames)
        throw std::invalid_argument("sigma map shape does not match the volume");
    check_params(params);

    SolverState st = initial_state(m_vol, params);
    SolveReport rep;
    Matrix prev_L = st.L;
    for (int it = 0; it < params.max_iters; ++it) {
        const double theta_used = st.theta;
        st = step(st, m_vol, sigma, params);

        const double denom = prev_L.norm();
        const double diff = (st.L - prev_L).norm();
        const double rel = diff == 0.0 ? 0.0 : diff / std::max(denom, 1e-300);
        prev_L = st.L;

        IterationStats is;
        is.iter = st.iter;
        is.g1 = (st.S1 - st.L).norm();
        is.g2 = (st.S2 - grad_matrix(st.L, m_vol.rows, m_vol.cols)).norm();
        is.g3 = (m_vol.data - st.L - st.N).norm();
        is.g4 = (st.N.cwiseProduct(st.N) - 9.0 * sigma.data.cwiseProduct(sigma.data) + st.eps)
                    .norm();
        is.objective = objective(st, m_vol, sigma, params);
        is.theta = theta_used;
        is.rel_change = rel;
        rep.trace.push_back(is);

        // the relative-change test only arms once the penalty ramp is done,
        // else the tiny warm-up steps stop the solver at its initialization
        if (rel < params.tol && st.theta >= params.theta_max) {
            rep.converged = true;
            break;
        }
    }
    rep.iterations = st.iter;
    rep.theta = st.theta;
    const IterationStats& last = rep.trace.back();
    rep.g1 = last.g1;
    rep.g2 = last.g2;
    rep.g3 = last.g3;
    rep.g4 = last.g4;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    DenoiseResult out;
    out.low_rank = {m_vol.rows, m_vol.cols, m_vol.frames, st.L};
    out.noise = {m_vol.rows, m_vol.cols, m_vol.frames, st.N};
    out.report = std::move(rep);
    return out;
}

std::string report_text(const SolveReport& r) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "iterations %d\nconverged %d\ntheta %.9e\n", r.iterations,
                  r.converged ? 1 : 0, r.theta);
    out += line;
    std::snprintf(line, sizeof line, "final_residuals %.9e %.9e %.9e %.9e\n", r.g1, r.g2, r.g3,
                  r.g4);
    out += line;
    out += "trace iter g1 g2 g3 g4 objective theta rel_change\n";
    for (const auto& t : r.trace) {
        std::snprintf(line, sizeof line, "%d %.9e %.9e %.9e %.9e %.9e %.9e %.9e\n", t.iter, t.g1,
                      t.g2, t.g3, t.g4, t.objective, t.theta, t.rel_change);
        out += line;
    }
    return out;
}

}  // namespace despeckle
