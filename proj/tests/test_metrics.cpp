#include "despeckle/metrics.hpp"

#include <cmath>

#include "despeckle/synthetic.hpp"
#include "doctest.h"

using namespace despeckle;

namespace {

RawImage constant_image(int rows, int cols, int value, int bit_depth = 8) {
    RawImage img;
    img.rows = rows;
    img.cols = cols;
    img.bit_depth = bit_depth;
    img.pixels = Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic>::Constant(
        rows, cols, std::uint16_t(value));
    return img;
}

RawImage noisy_copy(const RawImage& img, double amplitude, std::uint64_t seed) {
    RawImage out = img;
    Pcg32 rng(seed);
    for (int c = 0; c < img.cols; ++c)
        for (int r = 0; r < img.rows; ++r) {
            const double v = img.pixels(r, c) + amplitude * (2.0 * rng.uniform() - 1.0);
            out.pixels(r, c) =
                std::uint16_t(std::clamp(std::round(v), 0.0, double(img.max_value())));
        }
    return out;
}

Matrix brute_force_edt(const EdgeMap& edges) {
    Matrix d(edges.rows(), edges.cols());
    for (int c = 0; c < edges.cols(); ++c)
        for (int r = 0; r < edges.rows(); ++r) {
            double best = 1e20;
            for (int cc = 0; cc < edges.cols(); ++cc)
                for (int rr = 0; rr < edges.rows(); ++rr)
                    if (edges(rr, cc))
                        best = std::min(best, double(r - rr) * (r - rr) + double(c - cc) * (c - cc));
            d(r, c) = best;
        }
    return d;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr hand values and properties") {
    RawImage a = constant_image(8, 8, 100);
    CHECK(std::isinf(psnr(a, a)));

    RawImage plus_one = constant_image(8, 8, 101);
    CHECK(psnr(plus_one, a) == doctest::Approx(48.1308).epsilon(1e-3));
    CHECK(psnr(plus_one, a) == psnr(a, plus_one));

    RawImage base = phantom(default_phantom(48, 48));
    double prev = psnr(noisy_copy(base, 2.0, 1), base);
    for (double amp : {4.0, 8.0, 16.0}) {
        const double cur = psnr(noisy_copy(base, amp, 1), base);
        CHECK(cur < prev);
        prev = cur;
    }

    CHECK_THROWS_AS(psnr(a, constant_image(8, 9, 100)), std::invalid_argument);
    CHECK_THROWS_AS(psnr(a, constant_image(8, 8, 100, 16)), std::invalid_argument);
}

TEST_CASE("ssim hand values") {
    RawImage base = phantom(default_phantom(48, 48));
    CHECK(ssim(base, base) == doctest::Approx(1.0).epsilon(1e-12));

    RawImage hundred = constant_image(16, 16, 100);
    RawImage one_fifty = constant_image(16, 16, 150);
    const double c1 = 6.5025;  // (0.01*255)^2
    const double want = (2.0 * 100 * 150 + c1) / (100.0 * 100 + 150.0 * 150 + c1);
    const double got = ssim(one_fifty, hundred);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
    CHECK(std::abs(got - 0.92313) < 1e-4);
    CHECK(got == ssim(hundred, one_fifty));

    CHECK_THROWS_AS(ssim(constant_image(8, 8, 5), constant_image(8, 8, 5)),
                    std::invalid_argument);
}

TEST_CASE("canny finds a single-pixel step edge and nothing on flat input") {
    CHECK((canny(constant_image(20, 20, 77)).array() == 0).all());

    RawImage step = constant_image(16, 16, 50);
    for (int c = 8; c < 16; ++c)
        for (int r = 0; r < 16; ++r) step.pixels(r, c) = 150;
    EdgeMap edges = canny(step);
    for (int r = 0; r < 16; ++r) {
        int count = 0, col = -1;
        for (int c = 0; c < 16; ++c)
            if (edges(r, c)) {
                ++count;
                col = c;
            }
        CHECK(count == 1);
        CHECK(col >= 6);
        CHECK(col <= 9);
    }
    CHECK(canny(step) == edges);  // deterministic
}

TEST_CASE("distance transform is exact") {
    EdgeMap single = EdgeMap::Zero(7, 9);
    single(3, 4) = 1;
    Matrix d = squared_edt(single);
    CHECK(d(3, 4) == 0.0);
    CHECK(d(0, 0) == 9.0 + 16.0);
    CHECK(d(6, 8) == 9.0 + 16.0);

    Pcg32 rng(55);
    for (int trial = 0; trial < 10; ++trial) {
        EdgeMap e = EdgeMap::Zero(9, 13);
        for (int c = 0; c < 13; ++c)
            for (int r = 0; r < 9; ++r) e(r, c) = rng.uniform() < 0.15 ? 1 : 0;
        e(4, 6) = 1;  // never empty
        CHECK(squared_edt(e) == brute_force_edt(e));
    }
}

TEST_CASE("fom hand values and monotone displacement") {
    EdgeMap e = EdgeMap::Zero(12, 12);
    e(5, 5) = 1;
    e(2, 8) = 1;
    CHECK(fom(e, e) == 1.0);

    EdgeMap ref = EdgeMap::Zero(12, 12), rec = EdgeMap::Zero(12, 12);
    ref(6, 6) = 1;
    rec(6, 7) = 1;
    CHECK(fom(rec, ref) == doctest::Approx(0.9).epsilon(1e-12));

    double prev = 1.0;
    for (int shift = 1; shift <= 4; ++shift) {
        EdgeMap moved = EdgeMap::Zero(12, 12);
        moved(6, 6 + shift) = 1;
        const double score = fom(moved, ref);
        CHECK(score < prev);
        prev = score;
    }

    CHECK(fom(EdgeMap::Zero(12, 12), ref) == 0.0);
    CHECK_THROWS_AS(fom(rec, EdgeMap::Zero(12, 12)), std::invalid_argument);
    CHECK_THROWS_AS(fom(rec, EdgeMap::Zero(10, 12)), std::invalid_argument);
}

TEST_CASE("evaluate decomposes into whole image plus rois") {
    RawImage ref = phantom(default_phantom(48, 48));
    RawImage recon = noisy_copy(ref, 6.0, 3);

    auto whole = evaluate(recon, ref, {});
    REQUIRE(whole.size() == 1);
    CHECK(whole[0].region == "entire-image");

    RoiRect full{"full", 0, 0, 48, 48};
    auto with_full = evaluate(recon, ref, {full});
    REQUIRE(with_full.size() == 2);
    CHECK(with_full[1].psnr_db == whole[0].psnr_db);
    CHECK(with_full[1].ssim == whole[0].ssim);
    CHECK(with_full[1].fom == whole[0].fom);

    RoiRect top_left{"tl", 0, 0, 24, 24};
    RoiRect bottom{"bot", 4, 24, 40, 20};
    auto pair = evaluate(recon, ref, {top_left, bottom});
    auto only_tl = evaluate(recon, ref, {top_left});
    auto only_bot = evaluate(recon, ref, {bottom});
    CHECK(pair[1].psnr_db == only_tl[1].psnr_db);
    CHECK(pair[2].ssim == only_bot[1].ssim);
    CHECK(pair[2].fom == only_bot[1].fom);

    CHECK_THROWS_AS(evaluate(recon, ref, {RoiRect{"oob", 40, 40, 10, 10}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(evaluate(recon, ref, {RoiRect{"neg", -1, 0, 5, 5}}), std::invalid_argument);
}

TEST_CASE("csv export keeps a stable schema") {
    RawImage ref = phantom(default_phantom(48, 48));
    auto reports = evaluate(ref, ref, {});
    const std::string csv = metrics_csv("self", reports);
    CHECK(csv.find("image,region,psnr_db,ssim,fom\n") == 0);
    CHECK(csv.find("self,entire-image,inf,") != std::string::npos);
}

}  // TEST_SUITE
