// Acceptance gate: numbered end-to-end checks, one pass/fail line each.
// Run everything with no arguments, or a single check with --criterion N.
// Check 9 needs the external pig-eye dataset and exits 77 (skip) without it.

#include <Eigen/SVD>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "despeckle/imageio.hpp"
#include "despeckle/metrics.hpp"
#include "despeckle/noise.hpp"
#include "despeckle/registration.hpp"
#include "despeckle/solver.hpp"
#include "despeckle/synthetic.hpp"
#include "despeckle/volume.hpp"

using namespace despeckle;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Timer {
  public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

Matrix random_matrix(int m, int n, Pcg32& rng, double scale = 1.0) {
    Matrix x(m, n);
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < m; ++r) x(r, c) = scale * (2.0 * rng.uniform() - 1.0);
    return x;
}

// iteratively refined grid search for argmin tau*|y| + 0.5*(y-x)^2
double prox_by_grid(double x, double tau) {
    double lo = x - 2.0 * tau - 1.0, hi = x + 2.0 * tau + 1.0, best = lo;
    for (int pass = 0; pass < 4; ++pass) {
        double best_val = 1e300;
        const double h = (hi - lo) / 400.0;
        for (int i = 0; i <= 400; ++i) {
            const double y = lo + i * h;
            const double val = tau * std::abs(y) + 0.5 * (y - x) * (y - x);
            if (val < best_val) {
                best_val = val;
                best = y;
            }
        }
        lo = best - 2.0 * h;
        hi = best + 2.0 * h;
    }
    return best;
}

double nuclear_prox_objective(const Matrix& z, const Matrix& x, double tau) {
    return tau * Eigen::JacobiSVD<Matrix>(z).singularValues().sum() +
           0.5 * (z - x).squaredNorm();
}

// numerically safe solver profile; the library default keeps the inverse
// 1/theta multiplier rule, which is documented to diverge on these stacks
SolverParams stable_params() {
    SolverParams p;
    p.multiplier_step_mode = MultiplierStepMode::standard;
    p.delta_N = 2e-3;
    return p;
}

ImageGrid mean_log_image(const LogVolume& vol) {
    ImageGrid g;
    g.rows = vol.rows;
    g.cols = vol.cols;
    Matrix mean = vol.data.rowwise().mean();
    g.values = Eigen::Map<const Matrix>(mean.data(), vol.rows, vol.cols);
    return g;
}

std::vector<ImageGrid> to_log_frames(const std::vector<RawImage>& frames) {
    std::vector<ImageGrid> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(to_log(f));
    return out;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    Timer timer;
    Pcg32 rng(101);
    double soft_err = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double x = 10.0 * rng.uniform() - 5.0;
        const double tau = 0.01 + 2.99 * rng.uniform();
        soft_err = std::max(soft_err, std::abs(soft_threshold(x, tau) - prox_by_grid(x, tau)));
    }

    int optimal = 0;
    const double scales[4] = {1e-3, 1e-2, 0.1, 0.5};
    for (int m = 0; m < 20; ++m) {
        Matrix x(12, 4);
        for (int c = 0; c < 4; ++c)
            for (int r = 0; r < 12; ++r) x(r, c) = rng.normal();
        const double tau = 0.1 + 1.9 * rng.uniform();
        const Matrix z = svt(x, tau);
        const double base = nuclear_prox_objective(z, x, tau);
        bool beat_all = true;
        for (int j = 0; j < 200; ++j) {
            Matrix r(12, 4);
            for (int c = 0; c < 4; ++c)
                for (int rr = 0; rr < 12; ++rr) r(rr, c) = rng.normal();
            const Matrix pert = z + scales[j % 4] * r / r.norm();
            if (nuclear_prox_objective(pert, x, tau) < base - 1e-9) beat_all = false;
        }
        if (beat_all) ++optimal;
    }

    const double secs = timer.seconds();
    const bool pass = soft_err <= 1e-6 && optimal == 20 && secs < 5.0;
    return {pass, fmt("soft max err %.2e, svt optimal on %d/20 matrices, %.2fs", soft_err,
                      optimal, secs)};
}

Outcome criterion2() {
    Timer timer;
    double worst = 0.0;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const int m = 6, n = 6, k = 3, mn = m * n;
        Pcg32 rng(seed);
        LogVolume m_vol{m, n, k, random_matrix(mn, k, rng, 2.0)};
        SigmaMap sig;
        sig.rows = m;
        sig.cols = n;
        sig.frames = k;
        sig.data = random_matrix(mn, k, rng, 0.5).cwiseAbs();
        SolverParams p;
        SolverState s;
        s.L = random_matrix(mn, k, rng);
        s.N = random_matrix(mn, k, rng);
        s.S1 = random_matrix(mn, k, rng);
        s.S2 = random_matrix(2 * mn, k, rng);
        s.eps = random_matrix(mn, k, rng).cwiseAbs();
        s.Y1 = random_matrix(mn, k, rng);
        s.Y2 = random_matrix(2 * mn, k, rng);
        s.Y3 = random_matrix(mn, k, rng);
        s.Y4 = random_matrix(mn, k, rng);
        s.theta = 0.7;

        const double th = s.theta, thi = 1.0 / th;
        const Matrix pl = grad_matrix(s.L, m, n);
        const Matrix sig2_9 = 9.0 * sig.data.cwiseProduct(sig.data);
        const Matrix grad_L =
            th * (s.L - s.S1 - thi * s.Y1) +
            th * (grad_adjoint_matrix(pl, m, n) -
                  grad_adjoint_matrix(s.S2 + thi * s.Y2, m, n)) +
            th * (s.L - m_vol.data + s.N - thi * s.Y3);
        const Matrix grad_N =
            th * (s.N - m_vol.data + s.L - thi * s.Y3) +
            (s.Y4 + th * (s.N.cwiseProduct(s.N) - sig2_9 + s.eps)).cwiseProduct(2.0 * s.N);

        const double h = 1e-5;
        for (int c = 0; c < k; ++c)
            for (int r = 0; r < mn; ++r) {
                SolverState sp = s, sm = s;
                sp.L(r, c) += h;
                sm.L(r, c) -= h;
                double fd =
                    (objective(sp, m_vol, sig, p) - objective(sm, m_vol, sig, p)) / (2.0 * h);
                worst = std::max(worst, std::abs(grad_L(r, c) - fd) /
                                            std::max({1.0, std::abs(fd), std::abs(grad_L(r, c))}));
                sp = sm = s;
                sp.N(r, c) += h;
                sm.N(r, c) -= h;
                fd = (objective(sp, m_vol, sig, p) - objective(sm, m_vol, sig, p)) / (2.0 * h);
                worst = std::max(worst, std::abs(grad_N(r, c) - fd) /
                                            std::max({1.0, std::abs(fd), std::abs(grad_N(r, c))}));
            }
    }
    const double secs = timer.seconds();
    const bool pass = worst <= 1e-5 && secs < 10.0;
    return {pass, fmt("max relative gradient error %.2e over 3 random states, %.2fs", worst, secs)};
}

Outcome criterion3() {
    double worst_ip = 0.0;
    for (std::uint64_t seed : {21u, 22u, 23u, 24u, 25u}) {
        Pcg32 rng(seed);
        const int m = 7, n = 5, k = 3;
        LogVolume u{m, n, k, random_matrix(m * n, k, rng)};
        GradVolume v{m, n, k, random_matrix(2 * m * n, k, rng)};
        const double lhs = grad(u).data.cwiseProduct(v.data).sum();
        const double rhs = u.data.cwiseProduct(grad_adjoint(v).data).sum();
        worst_ip = std::max(worst_ip, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }

    // dense operator, 4x4 frame: columns are images of the basis vectors
    const int mn = 16;
    Matrix dense(32, mn);
    for (int j = 0; j < mn; ++j) {
        Matrix e = Matrix::Zero(mn, 1);
        e(j, 0) = 1.0;
        dense.col(j) = grad_matrix(e, 4, 4);
    }
    bool dense_exact = true;
    Pcg32 rng(29);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix x = random_matrix(mn, 1, rng);
        const Matrix gx = grad_matrix(x, 4, 4);
        for (int i = 0; i < 32; ++i) {
            double acc = 0.0;
            for (int j = 0; j < mn; ++j) acc += dense(i, j) * x(j, 0);
            if (acc != gx(i, 0)) dense_exact = false;
        }
    }

    const bool pass = worst_ip <= 1e-10 && dense_exact;
    return {pass, fmt("adjoint identity error %.2e, dense 4x4 operator %s", worst_ip,
                      dense_exact ? "exact" : "MISMATCH")};
}

ImageGrid warp_replicate(const ImageGrid& img, const RigidTransform& t) {
    ImageGrid out;
    out.rows = img.rows;
    out.cols = img.cols;
    out.values.resize(img.rows, img.cols);
    for (int j = 0; j < img.cols; ++j)
        for (int i = 0; i < img.rows; ++i) {
            double sr, sc;
            inverse_map(t, img.rows, img.cols, i, j, sr, sc);
            out.values(i, j) = bilinear_clamped(img.values, sr, sc);
        }
    return out;
}

Outcome criterion4() {
    Timer timer;
    const RawImage truth = phantom(default_phantom(96, 96));
    const ImageGrid fixed = to_log(truth);
    int hits = 0;
    double worst_px = 0.0, worst_deg = 0.0;
    for (int t = 0; t < 40; ++t) {
        Pcg32 rng(700 + std::uint64_t(t));
        RigidTransform applied;
        applied.dx = 10.0 * rng.uniform() - 5.0;
        applied.dy = 10.0 * rng.uniform() - 5.0;
        applied.theta_deg = 4.0 * rng.uniform() - 2.0;
        const ImageGrid moving = warp_replicate(fixed, applied);
        const RigidTransform rec = register_pair(moving, fixed);
        const RigidTransform expect = inverse(applied);
        const double err_px =
            std::max(std::abs(rec.dx - expect.dx), std::abs(rec.dy - expect.dy));
        const double err_deg = std::abs(rec.theta_deg - expect.theta_deg);
        worst_px = std::max(worst_px, err_px);
        worst_deg = std::max(worst_deg, err_deg);
        if (err_px <= 0.25 && err_deg <= 0.1) ++hits;
    }
    const double secs = timer.seconds();
    const bool pass = hits >= 38 && secs < 60.0;
    return {pass, fmt("%d/40 trials within 0.25px/0.1deg (worst %.3fpx %.3fdeg), %.1fs", hits,
                      worst_px, worst_deg, secs)};
}

Outcome criterion5() {
    Timer timer;
    const RawImage truth = phantom(default_phantom(96, 96));
    SpeckleSpec spec;
    spec.frames = 8;
    spec.gamma_looks = 4.0;
    spec.seed = 505;
    const SpeckleStack stack = speckle_stack(truth, spec);
    const LogVolume vol = stack_frames(to_log_frames(stack.frames));
    const SigmaMap sigma = estimate_sigma(vol, Mask());

    const int margin = 12;
    std::vector<double> interior;
    for (int f = 0; f < vol.frames; ++f)
        for (int c = margin; c < vol.cols - margin; ++c)
            for (int r = margin; r < vol.rows - margin; ++r)
                interior.push_back(sigma.data(c * vol.rows + r, f));
    std::nth_element(interior.begin(), interior.begin() + interior.size() / 2, interior.end());
    const double med = interior[interior.size() / 2];

    const double target = std::sqrt(trigamma(4.0));  // 0.5328
    const double secs = timer.seconds();
    const bool pass = med >= 0.8 * target && med <= 1.2 * target && secs < 30.0;
    return {pass, fmt("median sigma %.4f vs analytic %.4f (ratio %.3f), %.1fs", med, target,
                      med / target, secs)};
}

Outcome criterion6() {
    Timer timer;
    const RawImage truth = phantom(default_phantom(128, 128));
    SpeckleSpec spec;
    spec.frames = 8;
    spec.gamma_looks = 16.0;
    spec.seed = 42;
    const SpeckleStack stack = speckle_stack(truth, spec);

    const StackRegistration sr = register_stack(to_log_frames(stack.frames));
    const SigmaMap sigma = estimate_sigma(sr.registered, sr.valid);

    SolverParams params = stable_params();
    params.tol = 1e-5;
    params.max_iters = 300;
    const DenoiseResult res = denoise(sr.registered, sigma, params);

    const RawImage den = from_log(mean_log_image(res.low_rank), 8);
    const RawImage avg = from_log(mean_log_image(sr.registered), 8);
    const RawImage single = from_log(unstack(sr.registered, sr.reference_index), 8);

    const double psnr_den = psnr(den, truth);
    const double psnr_avg = psnr(avg, truth);
    const double psnr_single = psnr(single, truth);
    const double ssim_den = ssim(den, truth);
    const double ssim_avg = ssim(avg, truth);
    const EdgeMap ref_edges = canny(truth);
    const double fom_den = fom(canny(den), ref_edges);
    const double fom_avg = fom(canny(avg), ref_edges);

    const Matrix bound = 3.0 * sigma.data.array() + 0.05 * sigma.data.maxCoeff();
    const double in_bound =
        double((res.noise.data.cwiseAbs().array() <= bound.array()).count()) /
        double(res.noise.data.size());

    const double secs = timer.seconds();
    const bool pass = psnr_den >= psnr_avg + 1.0 && psnr_den >= psnr_single + 8.0 &&
                      ssim_den > ssim_avg && fom_den >= fom_avg && in_bound >= 0.95 &&
                      secs < 120.0;
    return {pass,
            fmt("PSNR den/avg/single %.2f/%.2f/%.2f dB, SSIM %.4f/%.4f, FOM %.4f/%.4f, "
                "noise in bound %.1f%%, %.1fs",
                psnr_den, psnr_avg, psnr_single, ssim_den, ssim_avg, fom_den, fom_avg,
                100.0 * in_bound, secs)};
}

Outcome criterion7() {
    const RawImage truth = phantom(default_phantom(48, 48));
    const std::vector<ImageGrid> frames(8, to_log(truth));
    const LogVolume m_vol = stack_frames(frames);
    SigmaMap sigma;
    sigma.rows = m_vol.rows;
    sigma.cols = m_vol.cols;
    sigma.frames = m_vol.frames;
    sigma.data = Matrix::Zero(m_vol.data.rows(), m_vol.frames);

    const DenoiseResult res = denoise(m_vol, sigma, stable_params());
    const auto sv = Eigen::JacobiSVD<Matrix>(res.low_rank.data).singularValues();
    const double sv_ratio = sv(1) / sv(0);
    const double n_ratio = res.noise.data.norm() / m_vol.data.norm();
    const bool pass = sv_ratio <= 1e-3 && n_ratio <= 1e-3;
    return {pass, fmt("s2/s1 %.2e, |N|/|M| %.2e after %d iterations", sv_ratio, n_ratio,
                      res.report.iterations)};
}

Outcome criterion8() {
    auto flat = [](int rows, int cols, int value) {
        RawImage img;
        img.rows = rows;
        img.cols = cols;
        img.bit_depth = 8;
        img.pixels = Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic>::Constant(
            rows, cols, std::uint16_t(value));
        return img;
    };
    const RawImage a = flat(16, 16, 100);
    const bool psnr_inf = std::isinf(psnr(a, a));
    const double psnr_off = psnr(flat(16, 16, 101), a);
    const bool psnr_off_ok = std::abs(psnr_off - 48.1308) <= 1e-3;
    const RawImage structured = phantom(default_phantom(48, 48));
    const bool ssim_self = std::abs(ssim(structured, structured) - 1.0) <= 1e-12;
    const double ssim_const = ssim(flat(16, 16, 150), a);
    const bool ssim_const_ok = std::abs(ssim_const - 0.92313) <= 1e-4;

    EdgeMap ref = EdgeMap::Zero(12, 12), rec = EdgeMap::Zero(12, 12);
    ref(6, 6) = 1;
    rec(6, 7) = 1;
    const double fom_shift = fom(rec, ref);
    const bool fom_ok = std::abs(fom_shift - 0.9) <= 1e-12;

    const bool pass = psnr_inf && psnr_off_ok && ssim_self && ssim_const_ok && fom_ok;
    return {pass, fmt("PSNR self inf %d, off-by-one %.4f dB, SSIM const %.5f, FOM shift %.10f",
                      int(psnr_inf), psnr_off, ssim_const, fom_shift)};
}

int criterion9() {
    std::vector<std::string> candidates;
    if (const char* env = std::getenv("DESPECKLE_PIGEYE_DIR")) candidates.push_back(env);
    candidates.push_back("data/pigeye");
    candidates.push_back("../data/pigeye");
    std::string dir;
    for (const auto& c : candidates)
        if (!c.empty() && fs::exists(fs::path(c) / "manifest.json")) {
            dir = c;
            break;
        }
    if (dir.empty()) {
        std::printf(
            "criterion 9: SKIP (pig-eye dataset not found; set DESPECKLE_PIGEYE_DIR)\n");
        return 77;
    }

    Timer timer;
    const DatasetManifest manifest = read_manifest((fs::path(dir) / "manifest.json").string());
    std::vector<RawImage> frames;
    for (std::size_t i = 0; i < manifest.frames.size() && i < 8; ++i)
        frames.push_back(read_image(manifest.frames[i]));
    if (frames.size() < 2 || manifest.reference.empty()) {
        std::printf("criterion 9: SKIP (dataset manifest lacks frames or reference)\n");
        return 77;
    }
    const RawImage ref = read_image(manifest.reference);

    const StackRegistration sr = register_stack(to_log_frames(frames));
    const SigmaMap sigma = estimate_sigma(sr.registered, sr.valid);
    SolverParams params = stable_params();
    params.tol = 1e-5;
    params.max_iters = 300;
    const DenoiseResult res = denoise(sr.registered, sigma, params);
    const RawImage den = from_log(mean_log_image(res.low_rank), frames[0].bit_depth);

    const double p = psnr(den, ref);
    const double s = ssim(den, ref);
    const double per_frame = timer.seconds() / double(frames.size());
    const bool pass =
        std::abs(p - 31.74) <= 1.5 && std::abs(s - 0.91) <= 0.05 && per_frame <= 120.0;
    std::printf("criterion 9: %s (PSNR %.2f dB, SSIM %.4f, %.1fs/frame)\n",
                pass ? "PASS" : "FAIL", p, s, per_frame);
    return pass ? 0 : 1;
}

using CriterionFn = Outcome (*)();
const CriterionFn kCriteria[8] = {criterion1, criterion2, criterion3, criterion4,
                                  criterion5, criterion6, criterion7, criterion8};

int run_one(int n) {
    const Outcome o = kCriteria[n - 1]();
    std::printf("criterion %d: %s (%s)\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    return o.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    int which = 0;
    if (argc == 3 && std::strcmp(argv[1], "--criterion") == 0) {
        which = std::atoi(argv[2]);
        if (which < 1 || which > 9) {
            std::fprintf(stderr, "usage: %s [--criterion 1..9]\n", argv[0]);
            return 2;
        }
    } else if (argc != 1) {
        std::fprintf(stderr, "usage: %s [--criterion 1..9]\n", argv[0]);
        return 2;
    }

    if (which == 9) return criterion9();
    if (which != 0) return run_one(which);

    int failures = 0;
    for (int n = 1; n <= 8; ++n) failures += run_one(n);
    const int nine = criterion9();
    if (nine == 1) ++failures;
    return failures == 0 ? 0 : 1;
}
