#include "despeckle/imageio.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

using namespace despeckle;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    auto d = fs::temp_directory_path() / "despeckle_imageio_tests";
    fs::create_directories(d);
    return d;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

RawImage random_image(std::mt19937& rng, int rows, int cols, int bit_depth) {
    RawImage img;
    img.rows = rows;
    img.cols = cols;
    img.bit_depth = bit_depth;
    img.pixels.resize(rows, cols);
    const int maxv = bit_depth == 8 ? 255 : 65535;
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i)
            img.pixels(i, j) = static_cast<std::uint16_t>(rng() % (maxv + 1));
    return img;
}

void write_rgb_png(const fs::path& p) {
    FILE* fp = std::fopen(p.string().c_str(), "wb");
    REQUIRE(fp != nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    REQUIRE(setjmp(png_jmpbuf(png)) == 0);
    png_init_io(png, fp);
    png_set_IHDR(png, info, 2, 2, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    unsigned char row[6] = {255, 0, 0, 0, 255, 0};
    png_write_row(png, row);
    png_write_row(png, row);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace

TEST_SUITE("imageio") {

TEST_CASE("reads a hand-built 2x2 P5 PGM") {
    auto p = test_dir() / "hand.pgm";
    write_bytes(p, {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 128, 255, 7});
    RawImage img = read_image(p.string());
    CHECK(img.rows == 2);
    CHECK(img.cols == 2);
    CHECK(img.bit_depth == 8);
    CHECK(img.pixels(0, 0) == 0);
    CHECK(img.pixels(0, 1) == 128);
    CHECK(img.pixels(1, 0) == 255);
    CHECK(img.pixels(1, 1) == 7);
}

TEST_CASE("PGM maxval 65535 gives 16-bit, big-endian samples") {
    auto p = test_dir() / "wide.pgm";
    // 1x2, values 0x0102 and 0xFFFE
    write_bytes(p, {'P', '5', ' ', '2', ' ', '1', ' ', '6', '5', '5', '3', '5', '\n', 0x01, 0x02,
                    0xFF, 0xFE});
    RawImage img = read_image(p.string());
    CHECK(img.bit_depth == 16);
    CHECK(img.pixels(0, 0) == 0x0102);
    CHECK(img.pixels(0, 1) == 0xFFFE);
}

TEST_CASE("PGM with comments in the header parses") {
    auto p = test_dir() / "comment.pgm";
    std::string header = "P5\n# a comment line\n2 1\n# another\n255\n";
    std::vector<unsigned char> bytes(header.begin(), header.end());
    bytes.push_back(9);
    bytes.push_back(10);
    write_bytes(p, bytes);
    RawImage img = read_image(p.string());
    CHECK(img.pixels(0, 0) == 9);
    CHECK(img.pixels(0, 1) == 10);
}

TEST_CASE("distinct error kinds for the distinct failure modes") {
    auto dir = test_dir();
    write_bytes(dir / "magic.bin", {'G', 'I', 'F', '8', '9', 'a', 0, 0, 0});
    CHECK_THROWS_AS(read_image((dir / "magic.bin").string()), UnsupportedFormatError);

    write_bytes(dir / "header.pgm", {'P', '5', '\n', 'x', 'y', '\n'});
    CHECK_THROWS_AS(read_image((dir / "header.pgm").string()), CorruptHeaderError);

    write_bytes(dir / "short.pgm", {'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 1});
    CHECK_THROWS_AS(read_image((dir / "short.pgm").string()), TruncatedDataError);

    CHECK_THROWS_AS(read_image((dir / "does_not_exist.pgm").string()), ImageIoError);

    write_rgb_png(dir / "color.png");
    CHECK_THROWS_AS(read_image((dir / "color.png").string()), UnsupportedFormatError);
}

TEST_CASE("PGM and PNG round-trips are byte-exact") {
    std::mt19937 rng(77);
    auto dir = test_dir();
    for (int trial = 0; trial < 100; ++trial) {
        RawImage img = random_image(rng, 1 + int(rng() % 12), 1 + int(rng() % 12), 8);
        auto p = dir / ("rt8_" + std::to_string(trial) + ".pgm");
        write_image(img, p.string(), ImageFormat::pgm);
        RawImage back = read_image(p.string());
        CHECK(back.bit_depth == 8);
        REQUIRE(back.pixels == img.pixels);
    }
    for (int trial = 0; trial < 10; ++trial) {
        RawImage img = random_image(rng, 9, 7, 16);
        auto pgm = dir / ("rt16_" + std::to_string(trial) + ".pgm");
        auto png = dir / ("rt16_" + std::to_string(trial) + ".png");
        write_image(img, pgm.string(), ImageFormat::pgm);
        write_image(img, png.string(), ImageFormat::png);
        CHECK(read_image(pgm.string()).pixels == img.pixels);
        RawImage back = read_image(png.string());
        CHECK(back.bit_depth == 16);
        CHECK(back.pixels == img.pixels);
    }
    RawImage img8 = random_image(rng, 5, 5, 8);
    auto png8 = dir / "rt8.png";
    write_image(img8, png8.string(), ImageFormat::png);
    CHECK(read_image(png8.string()).pixels == img8.pixels);
}

TEST_CASE("write to an unwritable path raises an I/O error") {
    std::mt19937 rng(1);
    RawImage img = random_image(rng, 2, 2, 8);
    CHECK_THROWS_AS(write_image(img, "/nonexistent_dir_despeckle/x.pgm", ImageFormat::pgm),
                    ImageIoError);
}

TEST_CASE("to_log hand values and clamping") {
    RawImage img;
    img.rows = 1;
    img.cols = 3;
    img.bit_depth = 8;
    img.pixels.resize(1, 3);
    img.pixels << 255, 0, 1;
    ImageGrid g = to_log(img);
    CHECK(g.values(0, 0) == doctest::Approx(5.54126).epsilon(1e-5));
    CHECK(g.values(0, 1) == 0.0);  // clamped to floor 1, ln(1)=0
    CHECK(g.values(0, 2) == 0.0);
    CHECK_THROWS_AS(to_log(img, 0.5), std::invalid_argument);
}

TEST_CASE("from_log rounds, clamps and inverts to_log") {
    ImageGrid g;
    g.rows = 2;
    g.cols = 2;
    g.values.resize(2, 2);
    g.values << std::log(255.0), 20.0, 0.0, 1.0;
    RawImage img = from_log(g, 8);
    CHECK(img.pixels(0, 0) == 255);
    CHECK(img.pixels(0, 1) == 255);  // exp(20) clamps to MAX
    CHECK(img.pixels(1, 0) == 1);    // exp(0) = 1

    std::mt19937 rng(3);
    RawImage r = random_image(rng, 6, 6, 8);
    r.pixels = r.pixels.cwiseMax(static_cast<std::uint16_t>(1));  // >= floor
    CHECK(from_log(to_log(r), 8).pixels == r.pixels);
}

TEST_CASE("manifest round-trip and validation errors") {
    auto dir = test_dir();
    DatasetManifest m;
    m.frames = {(dir / "f0.pgm").string(), (dir / "f1.pgm").string()};
    m.reference = (dir / "truth.pgm").string();
    m.rois = {{"lesion", 4, 8, 16, 12}};
    auto p = dir / "manifest.json";
    write_manifest(m, p.string());
    DatasetManifest back = read_manifest(p.string());
    CHECK(back.frames == m.frames);
    CHECK(back.reference == m.reference);
    REQUIRE(back.rois.size() == 1);
    CHECK(back.rois[0].name == "lesion");
    CHECK(back.rois[0].w == 16);

    // Relative paths resolve against the manifest directory.
    std::ofstream(dir / "rel.json") << R"({"frames": ["a.pgm", "b.pgm"]})";
    DatasetManifest rel = read_manifest((dir / "rel.json").string());
    CHECK(rel.frames[0] == (dir / "a.pgm").string());

    std::ofstream(dir / "bad1.json") << R"({"reference": "x.pgm"})";
    CHECK_THROWS_AS(read_manifest((dir / "bad1.json").string()), CorruptHeaderError);
    std::ofstream(dir / "bad2.json") << R"({"frames": ["only.pgm"]})";
    CHECK_THROWS_AS(read_manifest((dir / "bad2.json").string()), CorruptHeaderError);
    std::ofstream(dir / "bad3.json") << R"({"frames": ["a.pgm", "a.pgm"]})";
    CHECK_THROWS_AS(read_manifest((dir / "bad3.json").string()), CorruptHeaderError);
    std::ofstream(dir / "bad4.json") << R"({"frames": ["a.pgm","b.pgm"], "rois": [{"name":"r","x":0,"y":0,"w":0,"h":5}]})";
    CHECK_THROWS_AS(read_manifest((dir / "bad4.json").string()), CorruptHeaderError);
    std::ofstream(dir / "bad5.json") << "not json at all";
    CHECK_THROWS_AS(read_manifest((dir / "bad5.json").string()), CorruptHeaderError);
}

}  // TEST_SUITE
