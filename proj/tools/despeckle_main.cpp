// despeckle -- multi-frame speckle reduction front end.
//
// Subcommands mirror the pipeline stages (synth, register, estimate-noise,
// denoise, evaluate, pipeline).  Every stage writes its artifacts plus a
// provenance.json (config snapshot, input hashes, tool version) so a run can
// be audited and reproduced byte-for-byte.

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "despeckle/imageio.hpp"
#include "despeckle/metrics.hpp"
#include "despeckle/noise.hpp"
#include "despeckle/registration.hpp"
#include "despeckle/solver.hpp"
#include "despeckle/synthetic.hpp"
#include "despeckle/volume.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace despeckle;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunConfig {
    std::string manifest_path;
    std::string out_dir;
    std::string mask_path;
    std::string sigma_path;
    std::string image_path;
    std::string label = "recon";
    int frames = 8;  // cap on manifest frames used; 0 = all
    int reference_index = -1;

    // synth
    int rows = 128;
    int cols = 128;
    int synth_frames = 8;
    double looks = 16.0;
    double jitter_px = 0.0;
    double jitter_deg = 0.0;
    std::uint64_t seed = 1;

    RegistrationOptions reg;
    NoiseOptions noise;
    SolverParams solver;
};

// ---------------------------------------------------------------------------
// small artifact helpers

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open input for hashing: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= std::uint8_t(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

void write_text_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << body;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// config snapshot + input hashes + version, one per output directory
void write_provenance(const fs::path& dir, const std::string& command,
                      const std::string& config_ini, const std::vector<std::string>& inputs) {
    json rec;
    rec["tool"] = "despeckle";
    rec["version"] = kVersion;
    rec["command"] = command;
    rec["config"] = config_ini;
    json hashes = json::object();
    for (const auto& in : inputs) {
        char hex[32];
        std::snprintf(hex, sizeof(hex), "fnv1a:%016" PRIx64, fnv1a_file(in));
        hashes[in] = hex;
    }
    rec["inputs"] = hashes;
    write_text_file(dir / "provenance.json", rec.dump(2) + "\n");
}

// Plain-text volume dump: lossless hand-off between stages (sigma maps and
// the solver's L / N live in log units where integer images would clip).
void write_log_volume(const Matrix& data, int rows, int cols, int frames, const fs::path& path) {
    std::ostringstream out;
    out << "log-volume " << rows << " " << cols << " " << frames << "\n";
    char buf[64];
    for (int f = 0; f < frames; ++f)
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                std::snprintf(buf, sizeof(buf), "%.17g", data(c * rows + r, f));
                out << buf << (c + 1 == cols ? "" : " ");
            }
            out << "\n";
        }
    write_text_file(path, out.str());
}

Matrix read_log_volume(const std::string& path, int& rows, int& cols, int& frames) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open volume file: " + path);
    std::string magic;
    in >> magic >> rows >> cols >> frames;
    if (!in || magic != "log-volume" || rows <= 0 || cols <= 0 || frames <= 0)
        throw std::runtime_error("malformed volume file: " + path);
    Matrix data(std::int64_t(rows) * cols, frames);
    for (int f = 0; f < frames; ++f)
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                double v;
                if (!(in >> v)) throw std::runtime_error("truncated volume file: " + path);
                data(c * rows + r, f) = v;
            }
    return data;
}

struct LoadedStack {
    DatasetManifest manifest;
    std::vector<std::string> frame_paths;  // resolved, already capped
    std::vector<RawImage> frames;
    int bit_depth = 8;
};

LoadedStack load_stack(const RunConfig& cfg, std::size_t min_frames) {
    if (cfg.manifest_path.empty())
        throw std::runtime_error("manifest: required path missing (--manifest)");
    LoadedStack s;
    s.manifest = read_manifest(cfg.manifest_path);
    std::size_t take = s.manifest.frames.size();
    if (cfg.frames > 0) take = std::min<std::size_t>(take, cfg.frames);
    if (take < min_frames)
        throw std::runtime_error("manifest: need at least " + std::to_string(min_frames) +
                                 " frames, have " + std::to_string(take));
    for (std::size_t i = 0; i < take; ++i) {
        // read_manifest already resolved relative entries against its own dir
        s.frame_paths.push_back(s.manifest.frames[i]);
        s.frames.push_back(read_image(s.manifest.frames[i]));
    }
    s.bit_depth = s.frames.front().bit_depth;
    return s;
}

std::vector<ImageGrid> to_log_frames(const std::vector<RawImage>& frames) {
    std::vector<ImageGrid> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(to_log(f));
    return out;
}

Mask read_mask(const std::string& path, int rows, int cols) {
    RawImage img = read_image(path);
    if (img.rows != rows || img.cols != cols)
        throw std::runtime_error("mask: shape mismatch against frames");
    return (img.pixels.array() != 0).cast<std::uint8_t>();
}

RawImage mask_image(const Mask& mask) {
    RawImage img;
    img.rows = int(mask.rows());
    img.cols = int(mask.cols());
    img.bit_depth = 8;
    img.pixels = (mask.array() != 0).cast<std::uint16_t>() * std::uint16_t(255);
    return img;
}

std::string frame_name(const char* stem, std::size_t index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%02zu.pgm", stem, index);
    return buf;
}

// ---------------------------------------------------------------------------
// stages

void emit_registration(const fs::path& dir, const StackRegistration& sr,
                       const DatasetManifest& src_manifest, int bit_depth) {
    fs::create_directories(dir);
    write_transforms(sr.transforms, (dir / "transforms.txt").string());
    DatasetManifest out_manifest;
    for (int f = 0; f < sr.registered.frames; ++f) {
        const std::string name = frame_name("registered", std::size_t(f));
        write_image(from_log(unstack(sr.registered, f), bit_depth), (dir / name).string(),
                    ImageFormat::pgm);
        out_manifest.frames.push_back(name);
    }
    write_image(mask_image(sr.valid), (dir / "valid_mask.pgm").string(), ImageFormat::pgm);
    if (!src_manifest.reference.empty())
        out_manifest.reference = fs::absolute(fs::path(src_manifest.reference)).string();
    out_manifest.rois = src_manifest.rois;
    write_manifest(out_manifest, (dir / "manifest.json").string());
}

ImageGrid mean_log_image(const LogVolume& vol) {
    ImageGrid g;
    g.rows = vol.rows;
    g.cols = vol.cols;
    Matrix mean = vol.data.rowwise().mean();
    g.values = Eigen::Map<const Matrix>(mean.data(), vol.rows, vol.cols);
    return g;
}

// Multiplicative-noise view: exp(N) around 1 mapped to quarter-scale gray, so
// a noise-free pixel renders as mid-dark gray and hot speckle shows bright.
RawImage noise_view(const ImageGrid& noise_frame, int bit_depth) {
    RawImage img;
    img.rows = noise_frame.rows;
    img.cols = noise_frame.cols;
    img.bit_depth = bit_depth;
    const double maxv = img.max_value();
    const double scale = (maxv + 1.0) / 4.0;
    img.pixels.resize(img.rows, img.cols);
    for (int c = 0; c < img.cols; ++c)
        for (int r = 0; r < img.rows; ++r)
            img.pixels(r, c) = std::uint16_t(
                std::clamp(std::round(std::exp(noise_frame.values(r, c)) * scale), 0.0, maxv));
    return img;
}

void emit_denoise(const fs::path& dir, const DenoiseResult& res, int bit_depth) {
    fs::create_directories(dir);
    write_image(from_log(mean_log_image(res.low_rank), bit_depth),
                (dir / "denoised.pgm").string(), ImageFormat::pgm);
    for (int f = 0; f < res.low_rank.frames; ++f) {
        write_image(from_log(unstack(res.low_rank, f), bit_depth),
                    (dir / frame_name("lowrank", std::size_t(f))).string(), ImageFormat::pgm);
        write_image(noise_view(unstack(res.noise, f), bit_depth),
                    (dir / frame_name("noise", std::size_t(f))).string(), ImageFormat::pgm);
    }
    write_log_volume(res.low_rank.data, res.low_rank.rows, res.low_rank.cols,
                     res.low_rank.frames, dir / "lowrank.txt");
    write_log_volume(res.noise.data, res.noise.rows, res.noise.cols, res.noise.frames,
                     dir / "noise.txt");
    write_text_file(dir / "report.txt", report_text(res.report));
}

int run_synth(const RunConfig& cfg, const std::string& config_ini) {
    if (cfg.out_dir.empty()) throw std::runtime_error("out: required path missing (--out)");
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);

    PhantomSpec ps = default_phantom(cfg.rows, cfg.cols);
    RawImage truth = phantom(ps);
    SpeckleSpec ss;
    ss.frames = cfg.synth_frames;
    ss.gamma_looks = cfg.looks;
    ss.max_jitter_px = cfg.jitter_px;
    ss.max_jitter_deg = cfg.jitter_deg;
    ss.seed = cfg.seed;
    SpeckleStack stack = speckle_stack(truth, ss);

    write_image(truth, (dir / "truth.pgm").string(), ImageFormat::pgm);
    DatasetManifest manifest;
    for (std::size_t f = 0; f < stack.frames.size(); ++f) {
        const std::string name = frame_name("frame", f);
        write_image(stack.frames[f], (dir / name).string(), ImageFormat::pgm);
        manifest.frames.push_back(name);
    }
    manifest.reference = "truth.pgm";

    // Two regions with guaranteed structure: the lesion disk and the layer
    // band (uniform regions would leave the edge metric nothing to score).
    const auto& lesion = ps.lesions.front();
    int half = std::max(8, int(std::ceil(2.0 * lesion.radius)));
    int lx = std::clamp(int(std::lround(lesion.center_col)) - half, 0, cfg.cols - 2 * half);
    int ly = std::clamp(int(std::lround(lesion.center_row)) - half, 0, cfg.rows - 2 * half);
    manifest.rois.push_back(RoiRect{"lesion", lx, ly, 2 * half, 2 * half});
    int band_top = std::clamp(int(ps.layers.front().base_row) - 8, 0, cfg.rows - 1);
    int band_bot = std::clamp(int(ps.layers.back().base_row) + 8, band_top + 12, cfg.rows);
    manifest.rois.push_back(
        RoiRect{"layers", cfg.cols / 8, band_top, 3 * cfg.cols / 4, band_bot - band_top});
    write_manifest(manifest, (dir / "manifest.json").string());

    write_transforms(stack.true_transforms, (dir / "true_transforms.txt").string());
    write_provenance(dir, "synth", config_ini, {});
    std::fprintf(stderr, "synth: %zu frames of %dx%d, looks=%g, sigma_log=%.6f\n",
                 stack.frames.size(), cfg.rows, cfg.cols, cfg.looks, stack.sigma_log);
    return 0;
}

int run_register(const RunConfig& cfg, const std::string& config_ini) {
    if (cfg.out_dir.empty()) throw std::runtime_error("out: required path missing (--out)");
    LoadedStack s = load_stack(cfg, 1);
    StackRegistration sr = register_stack(to_log_frames(s.frames), cfg.reference_index, cfg.reg);
    for (std::size_t f = 0; f < sr.transforms.size(); ++f)
        std::fprintf(stderr, "register: frame %zu dx=%+.3f dy=%+.3f theta=%+.3f\n", f,
                     sr.transforms[f].dx, sr.transforms[f].dy, sr.transforms[f].theta_deg);
    emit_registration(cfg.out_dir, sr, s.manifest, s.bit_depth);
    std::vector<std::string> inputs = s.frame_paths;
    inputs.push_back(cfg.manifest_path);
    write_provenance(cfg.out_dir, "register", config_ini, inputs);
    return 0;
}

int run_estimate_noise(const RunConfig& cfg, const std::string& config_ini) {
    if (cfg.out_dir.empty()) throw std::runtime_error("out: required path missing (--out)");
    LoadedStack s = load_stack(cfg, 1);
    LogVolume vol = stack_frames(to_log_frames(s.frames));
    Mask mask;
    if (!cfg.mask_path.empty()) mask = read_mask(cfg.mask_path, vol.rows, vol.cols);
    SigmaMap sigma = estimate_sigma(vol, mask, cfg.noise);

    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    write_log_volume(sigma.data, sigma.rows, sigma.cols, sigma.frames, dir / "sigma.txt");
    std::vector<std::string> inputs = s.frame_paths;
    inputs.push_back(cfg.manifest_path);
    if (!cfg.mask_path.empty()) inputs.push_back(cfg.mask_path);
    write_provenance(dir, "estimate-noise", config_ini, inputs);
    std::fprintf(stderr, "estimate-noise: sigma mean=%.6f max=%.6f\n", sigma.data.mean(),
                 sigma.data.maxCoeff());
    return 0;
}

SigmaMap sigma_for(const RunConfig& cfg, const LogVolume& vol, const Mask& mask) {
    if (cfg.sigma_path.empty()) return estimate_sigma(vol, mask, cfg.noise);
    SigmaMap sigma;
    sigma.data = read_log_volume(cfg.sigma_path, sigma.rows, sigma.cols, sigma.frames);
    if (sigma.rows != vol.rows || sigma.cols != vol.cols || sigma.frames != vol.frames)
        throw std::runtime_error("sigma: shape mismatch against frames");
    return sigma;
}

int run_denoise(const RunConfig& cfg, const std::string& config_ini) {
    if (cfg.out_dir.empty()) throw std::runtime_error("out: required path missing (--out)");
    LoadedStack s = load_stack(cfg, 2);
    LogVolume vol = stack_frames(to_log_frames(s.frames));
    Mask mask;
    if (!cfg.mask_path.empty()) mask = read_mask(cfg.mask_path, vol.rows, vol.cols);
    SigmaMap sigma = sigma_for(cfg, vol, mask);

    DenoiseResult res = denoise(vol, sigma, cfg.solver);
    emit_denoise(cfg.out_dir, res, s.bit_depth);
    std::vector<std::string> inputs = s.frame_paths;
    inputs.push_back(cfg.manifest_path);
    if (!cfg.sigma_path.empty()) inputs.push_back(cfg.sigma_path);
    if (!cfg.mask_path.empty()) inputs.push_back(cfg.mask_path);
    write_provenance(cfg.out_dir, "denoise", config_ini, inputs);
    std::fprintf(stderr, "denoise: %d iterations, converged=%d, %.2fs\n", res.report.iterations,
                 int(res.report.converged), res.report.wall_seconds);
    return 0;
}

int run_evaluate(const RunConfig& cfg, const std::string& config_ini) {
    if (cfg.out_dir.empty()) throw std::runtime_error("out: required path missing (--out)");
    if (cfg.image_path.empty()) throw std::runtime_error("image: required path missing (--image)");
    if (cfg.manifest_path.empty())
        throw std::runtime_error("manifest: required path missing (--manifest)");
    DatasetManifest manifest = read_manifest(cfg.manifest_path);
    if (manifest.reference.empty())
        throw std::runtime_error("manifest: no reference image to evaluate against");
    const std::string& ref_path = manifest.reference;
    RawImage recon = read_image(cfg.image_path);
    RawImage ref = read_image(ref_path);

    auto reports = evaluate(recon, ref, manifest.rois);
    const std::string csv = metrics_csv(cfg.label, reports);
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    write_text_file(dir / "metrics.csv", csv);
    write_provenance(dir, "evaluate", config_ini,
                     {cfg.image_path, ref_path, cfg.manifest_path});
    std::fputs(csv.c_str(), stdout);
    return 0;
}

int run_pipeline(const RunConfig& cfg, const std::string& config_ini) {
    if (cfg.out_dir.empty()) throw std::runtime_error("out: required path missing (--out)");
    LoadedStack s = load_stack(cfg, 2);
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    std::vector<std::string> inputs = s.frame_paths;
    inputs.push_back(cfg.manifest_path);

    StackRegistration sr = register_stack(to_log_frames(s.frames), cfg.reference_index, cfg.reg);
    emit_registration(dir / "register", sr, s.manifest, s.bit_depth);
    write_provenance(dir / "register", "pipeline", config_ini, inputs);

    SigmaMap sigma = estimate_sigma(sr.registered, sr.valid, cfg.noise);
    fs::create_directories(dir / "noise");
    write_log_volume(sigma.data, sigma.rows, sigma.cols, sigma.frames,
                     dir / "noise" / "sigma.txt");
    write_provenance(dir / "noise", "pipeline", config_ini, inputs);

    DenoiseResult res = denoise(sr.registered, sigma, cfg.solver);
    emit_denoise(dir / "denoise", res, s.bit_depth);
    write_provenance(dir / "denoise", "pipeline", config_ini, inputs);
    std::fprintf(stderr, "pipeline: solver ran %d iterations, converged=%d\n",
                 res.report.iterations, int(res.report.converged));

    if (!s.manifest.reference.empty()) {
        const std::string& ref_path = s.manifest.reference;
        RawImage ref = read_image(ref_path);
        RawImage den = from_log(mean_log_image(res.low_rank), s.bit_depth);
        auto reports = evaluate(den, ref, s.manifest.rois);
        write_text_file(dir / "metrics.csv", metrics_csv("denoised", reports));
        inputs.push_back(ref_path);
    }
    write_provenance(dir, "pipeline", config_ini, inputs);
    return 0;
}

// ---------------------------------------------------------------------------
// flag wiring

void add_stack_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--manifest", cfg.manifest_path, "Dataset manifest (JSON)");
    cmd->add_option("--frames", cfg.frames, "Use at most this many frames; 0 = all")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
}

void add_registration_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--reference-index", cfg.reference_index,
                    "Reference frame; -1 = middle of the stack")
        ->capture_default_str();
    cmd->add_option("--max-translation", cfg.reg.max_translation, "Search bound, pixels")
        ->capture_default_str();
    cmd->add_option("--max-rotation", cfg.reg.max_rotation, "Search bound, degrees")
        ->capture_default_str();
    cmd->add_option("--pyramid-levels", cfg.reg.pyramid_levels, "Coarse-to-fine levels")
        ->capture_default_str();
    cmd->add_option("--reg-tol", cfg.reg.tol, "Relative SSD stop tolerance")
        ->capture_default_str();
    cmd->add_option("--max-sweeps", cfg.reg.max_sweeps, "Coordinate-descent sweep cap")
        ->capture_default_str();
}

void add_noise_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--mad-window", cfg.noise.mad_window, "MAD window (odd)")
        ->capture_default_str();
    cmd->add_option("--mode-window", cfg.noise.mode_window, "Mode aggregation window (odd)")
        ->capture_default_str();
    cmd->add_option("--mode-bin", cfg.noise.mode_bin, "Mode histogram bin width")
        ->capture_default_str();
    cmd->add_option("--spline-p", cfg.noise.spline_p, "Spline smoothing weight in (0,1]")
        ->capture_default_str();
}

void add_solver_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--lambda", cfg.solver.lambda, "Sparse-gradient weight")
        ->capture_default_str();
    cmd->add_option("--theta0", cfg.solver.theta0, "Initial penalty")->capture_default_str();
    cmd->add_option("--rho", cfg.solver.rho, "Penalty growth factor")->capture_default_str();
    cmd->add_option("--theta-max", cfg.solver.theta_max, "Penalty ceiling")
        ->capture_default_str();
    cmd->add_option("--delta-l", cfg.solver.delta_L, "Gradient step for L")
        ->capture_default_str();
    cmd->add_option("--delta-n", cfg.solver.delta_N, "Gradient step for N")
        ->capture_default_str();
    cmd->add_option("--max-iters", cfg.solver.max_iters, "Outer iteration cap")
        ->capture_default_str();
    cmd->add_option("--tol", cfg.solver.tol, "Relative-change stop tolerance")
        ->capture_default_str();
    cmd->add_option("--inner-steps", cfg.solver.grad_inner_steps, "Gradient steps per iteration")
        ->capture_default_str();
    cmd->add_option("--multiplier-step", cfg.solver.multiplier_step_mode,
                    "Multiplier step size rule: inverse (1/theta) or standard (theta)")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, MultiplierStepMode>{
                {"inverse", MultiplierStepMode::inverse_theta},
                {"standard", MultiplierStepMode::standard}},
            CLI::ignore_case))
        ->default_str("standard");
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    // The library default keeps the 1/theta multiplier step; the tool
    // defaults to the stable profile so a stock run converges.
    cfg.solver.multiplier_step_mode = MultiplierStepMode::standard;
    cfg.solver.delta_N = 2e-3;

    CLI::App app{"Multi-frame speckle reduction via low-rank + sparse-gradient recovery"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "Read options from an INI/TOML file");
    app.require_subcommand(1);

    CLI::App* synth = app.add_subcommand("synth", "Write a synthetic speckled fixture dataset");
    synth->add_option("--out", cfg.out_dir, "Output directory");
    synth->add_option("--rows", cfg.rows, "Phantom rows")->capture_default_str();
    synth->add_option("--cols", cfg.cols, "Phantom cols")->capture_default_str();
    synth->add_option("--frames", cfg.synth_frames, "Frame count")->capture_default_str();
    synth->add_option("--looks", cfg.looks, "Gamma looks L (noise level)")
        ->capture_default_str();
    synth->add_option("--jitter-px", cfg.jitter_px, "Max per-frame translation jitter")
        ->capture_default_str();
    synth->add_option("--jitter-deg", cfg.jitter_deg, "Max per-frame rotation jitter")
        ->capture_default_str();
    synth->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();

    CLI::App* reg = app.add_subcommand("register", "Align frames to a reference");
    add_stack_flags(reg, cfg);
    add_registration_flags(reg, cfg);
    reg->add_option("--out", cfg.out_dir, "Output directory");

    CLI::App* est = app.add_subcommand("estimate-noise", "Estimate the per-pixel noise map");
    add_stack_flags(est, cfg);
    add_noise_flags(est, cfg);
    est->add_option("--mask", cfg.mask_path, "Valid-pixel mask image");
    est->add_option("--out", cfg.out_dir, "Output directory");

    CLI::App* den = app.add_subcommand("denoise", "Run the low-rank + sparse solver");
    add_stack_flags(den, cfg);
    add_noise_flags(den, cfg);
    add_solver_flags(den, cfg);
    den->add_option("--mask", cfg.mask_path, "Valid-pixel mask image");
    den->add_option("--sigma", cfg.sigma_path, "Precomputed sigma map (log-volume text)");
    den->add_option("--out", cfg.out_dir, "Output directory");

    CLI::App* eval = app.add_subcommand("evaluate", "Score an image against the reference");
    eval->add_option("--image", cfg.image_path, "Reconstruction to score");
    eval->add_option("--manifest", cfg.manifest_path, "Manifest carrying reference + ROIs");
    eval->add_option("--label", cfg.label, "Image label in the CSV")->capture_default_str();
    eval->add_option("--out", cfg.out_dir, "Output directory");

    CLI::App* pipe = app.add_subcommand("pipeline", "register + estimate-noise + denoise + evaluate");
    add_stack_flags(pipe, cfg);
    add_registration_flags(pipe, cfg);
    add_noise_flags(pipe, cfg);
    add_solver_flags(pipe, cfg);
    pipe->add_option("--out", cfg.out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string config_ini = app.config_to_str(true, false);
    try {
        if (app.got_subcommand(synth)) return run_synth(cfg, config_ini);
        if (app.got_subcommand(reg)) return run_register(cfg, config_ini);
        if (app.got_subcommand(est)) return run_estimate_noise(cfg, config_ini);
        if (app.got_subcommand(den)) return run_denoise(cfg, config_ini);
        if (app.got_subcommand(eval)) return run_evaluate(cfg, config_ini);
        if (app.got_subcommand(pipe)) return run_pipeline(cfg, config_ini);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    std::fprintf(stderr, "error: no subcommand\n");
    return 1;
}
