#include "despeckle/imageio.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace despeckle {

void validate(const RawImage& img) {
    if (img.rows < 1 || img.cols < 1)
        throw std::invalid_argument("RawImage has empty geometry");
    if (img.bit_depth != 8 && img.bit_depth != 16)
        throw std::invalid_argument("RawImage bit depth must be 8 or 16, got " +
                                    std::to_string(img.bit_depth));
    if (img.pixels.rows() != img.rows || img.pixels.cols() != img.cols)
        throw std::invalid_argument("RawImage pixel matrix does not match its geometry");
    if (img.bit_depth == 8 && (img.pixels.array() > 255).any())
        throw std::invalid_argument("RawImage has pixels above 255 at bit depth 8");
}

namespace {

// --- PGM (binary P5) ---

int next_header_token(std::istream& in, std::string& tok) {
    tok.clear();
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {  // comment runs to end of line
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (!std::isspace(c)) break;
    }
    if (c == EOF) return 0;
    do {
        tok.push_back(static_cast<char>(c));
    } while ((c = in.get()) != EOF && !std::isspace(c));
    return 1;
}

RawImage read_pgm(std::ifstream& in, const std::string& path) {
    std::string tok;
    if (!next_header_token(in, tok) || tok != "P5")
        throw UnsupportedFormatError(path + ": not a binary PGM (P5) file");
    long fields[3];
    for (int f = 0; f < 3; ++f) {
        if (!next_header_token(in, tok))
            throw CorruptHeaderError(path + ": PGM header ends early");
        try {
            size_t pos = 0;
            fields[f] = std::stol(tok, &pos);
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw CorruptHeaderError(path + ": non-numeric PGM header field '" + tok + "'");
        }
    }
    const long w = fields[0], h = fields[1], maxval = fields[2];
    if (w < 1 || h < 1)
        throw CorruptHeaderError(path + ": bad PGM dimensions " + std::to_string(w) + "x" +
                                 std::to_string(h));
    if (maxval < 1 || maxval > 65535)
        throw CorruptHeaderError(path + ": bad PGM maxval " + std::to_string(maxval));
    // The header ends with exactly one whitespace byte (already consumed by
    // the tokenizer above).
    RawImage img;
    img.rows = static_cast<int>(h);
    img.cols = static_cast<int>(w);
    img.bit_depth = maxval > 255 ? 16 : 8;
    img.pixels.resize(img.rows, img.cols);
    const int bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> row(static_cast<size_t>(w) * bytes_per);
    for (long i = 0; i < h; ++i) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (in.gcount() != static_cast<std::streamsize>(row.size()))
            throw TruncatedDataError(path + ": PGM pixel data truncated at row " +
                                     std::to_string(i));
        for (long j = 0; j < w; ++j) {
            if (bytes_per == 1)
                img.pixels(i, j) = row[j];
            else  // 16-bit samples are big-endian
                img.pixels(i, j) = static_cast<std::uint16_t>((row[2 * j] << 8) | row[2 * j + 1]);
        }
    }
    return img;
}

void write_pgm(const RawImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageIoError("cannot open '" + path + "' for writing");
    out << "P5\n" << img.cols << " " << img.rows << "\n" << img.max_value() << "\n";
    const int bytes_per = img.bit_depth == 8 ? 1 : 2;
    std::vector<unsigned char> row(static_cast<size_t>(img.cols) * bytes_per);
    for (int i = 0; i < img.rows; ++i) {
        for (int j = 0; j < img.cols; ++j) {
            const std::uint16_t v = img.pixels(i, j);
            if (bytes_per == 1) {
                row[j] = static_cast<unsigned char>(v);
            } else {
                row[2 * j] = static_cast<unsigned char>(v >> 8);
                row[2 * j + 1] = static_cast<unsigned char>(v & 0xff);
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw ImageIoError("write failed for '" + path + "'");
}

// --- PNG (8/16-bit grayscale via libpng) ---

struct PngReadCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCtx() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

RawImage read_png(const std::string& path) {
    PngReadCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw ImageIoError("cannot open '" + path + "'");
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw ImageIoError("libpng initialization failed");
    if (setjmp(png_jmpbuf(ctx.png)))
        throw TruncatedDataError(path + ": PNG decode failed (corrupt or truncated stream)");
    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);
    const int color = png_get_color_type(ctx.png, ctx.info);
    const int depth = png_get_bit_depth(ctx.png, ctx.info);
    if (color != PNG_COLOR_TYPE_GRAY)
        throw UnsupportedFormatError(path + ": only grayscale PNG is supported");
    if (depth != 8 && depth != 16)
        throw UnsupportedFormatError(path + ": only 8/16-bit PNG is supported, got " +
                                     std::to_string(depth) + "-bit");
    png_read_update_info(ctx.png, ctx.info);
    RawImage img;
    img.rows = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    img.cols = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    img.bit_depth = depth;
    img.pixels.resize(img.rows, img.cols);
    std::vector<unsigned char> row(png_get_rowbytes(ctx.png, ctx.info));
    for (int i = 0; i < img.rows; ++i) {
        png_read_row(ctx.png, row.data(), nullptr);
        for (int j = 0; j < img.cols; ++j) {
            img.pixels(i, j) = depth == 8 ? row[j]
                                          : static_cast<std::uint16_t>((row[2 * j] << 8) |
                                                                       row[2 * j + 1]);
        }
    }
    png_read_end(ctx.png, nullptr);
    return img;
}

struct PngWriteCtx {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngWriteCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

void write_png(const RawImage& img, const std::string& path) {
    PngWriteCtx ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw ImageIoError("cannot open '" + path + "' for writing");
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw ImageIoError("libpng initialization failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw ImageIoError("PNG encode failed for '" + path + "'");
    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, img.cols, img.rows, img.bit_depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    const int bytes_per = img.bit_depth == 8 ? 1 : 2;
    std::vector<unsigned char> row(static_cast<size_t>(img.cols) * bytes_per);
    for (int i = 0; i < img.rows; ++i) {
        for (int j = 0; j < img.cols; ++j) {
            const std::uint16_t v = img.pixels(i, j);
            if (bytes_per == 1) {
                row[j] = static_cast<unsigned char>(v);
            } else {
                row[2 * j] = static_cast<unsigned char>(v >> 8);
                row[2 * j + 1] = static_cast<unsigned char>(v & 0xff);
            }
        }
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

}  // namespace

RawImage read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError("cannot open '" + path + "'");
    unsigned char magic[8] = {0};
    in.read(reinterpret_cast<char*>(magic), 8);
    const std::streamsize got = in.gcount();
    in.clear();
    in.seekg(0);
    if (got >= 2 && magic[0] == 'P' && magic[1] == '5') return read_pgm(in, path);
    static const unsigned char png_magic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (got >= 8 && std::equal(png_magic, png_magic + 8, magic)) {
        in.close();
        return read_png(path);
    }
    throw UnsupportedFormatError(path + ": unrecognized image format (expect P5 PGM or PNG)");
}

void write_image(const RawImage& img, const std::string& path, ImageFormat format) {
    validate(img);
    if (format == ImageFormat::pgm)
        write_pgm(img, path);
    else
        write_png(img, path);
}

ImageGrid to_log(const RawImage& img, double floor) {
    if (floor < 1.0)
        throw std::invalid_argument("to_log floor must be >= 1, got " + std::to_string(floor));
    validate(img);
    ImageGrid g;
    g.rows = img.rows;
    g.cols = img.cols;
    g.values = img.pixels.cast<double>().cwiseMax(floor).array().log().matrix();
    return g;
}

RawImage from_log(const ImageGrid& grid, int bit_depth) {
    validate(grid);
    if (bit_depth != 8 && bit_depth != 16)
        throw std::invalid_argument("from_log bit depth must be 8 or 16");
    RawImage img;
    img.rows = grid.rows;
    img.cols = grid.cols;
    img.bit_depth = bit_depth;
    img.pixels.resize(img.rows, img.cols);
    const double lo = 0.0, hi = bit_depth == 8 ? 255.0 : 65535.0;
    for (int j = 0; j < grid.cols; ++j)
        for (int i = 0; i < grid.rows; ++i) {
            const double v = std::round(std::exp(grid.values(i, j)));
            img.pixels(i, j) = static_cast<std::uint16_t>(std::clamp(v, lo, hi));
        }
    return img;
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ImageIoError("cannot open manifest '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptHeaderError("manifest '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw CorruptHeaderError("manifest '" + path + "' must be a JSON object");
    if (!j.contains("frames") || !j["frames"].is_array())
        throw CorruptHeaderError("manifest '" + path + "': required field 'frames' (array) missing");

    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&base](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    DatasetManifest m;
    for (const auto& f : j["frames"]) {
        if (!f.is_string())
            throw CorruptHeaderError("manifest '" + path + "': 'frames' entries must be strings");
        m.frames.push_back(resolve(f.get<std::string>()));
    }
    if (m.frames.size() < 2)
        throw CorruptHeaderError("manifest '" + path + "': needs at least 2 frames, has " +
                                 std::to_string(m.frames.size()));
    for (size_t a = 0; a < m.frames.size(); ++a)
        for (size_t b = a + 1; b < m.frames.size(); ++b)
            if (m.frames[a] == m.frames[b])
                throw CorruptHeaderError("manifest '" + path + "': duplicate frame path '" +
                                         m.frames[a] + "'");
    if (j.contains("reference")) {
        if (!j["reference"].is_string())
            throw CorruptHeaderError("manifest '" + path + "': 'reference' must be a string");
        m.reference = resolve(j["reference"].get<std::string>());
    }
    if (j.contains("rois")) {
        if (!j["rois"].is_array())
            throw CorruptHeaderError("manifest '" + path + "': 'rois' must be an array");
        for (const auto& r : j["rois"]) {
            for (const char* key : {"name", "x", "y", "w", "h"})
                if (!r.contains(key))
                    throw CorruptHeaderError("manifest '" + path + "': ROI missing field '" +
                                             std::string(key) + "'");
            RoiRect roi;
            roi.name = r["name"].get<std::string>();
            roi.x = r["x"].get<int>();
            roi.y = r["y"].get<int>();
            roi.w = r["w"].get<int>();
            roi.h = r["h"].get<int>();
            if (roi.w < 1 || roi.h < 1)
                throw CorruptHeaderError("manifest '" + path + "': ROI '" + roi.name +
                                         "' has non-positive size");
            m.rois.push_back(roi);
        }
    }
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["frames"] = manifest.frames;
    if (!manifest.reference.empty()) j["reference"] = manifest.reference;
    if (!manifest.rois.empty()) {
        j["rois"] = nlohmann::json::array();
        for (const auto& r : manifest.rois)
            j["rois"].push_back({{"name", r.name}, {"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}});
    }
    std::ofstream out(path);
    if (!out) throw ImageIoError("cannot open manifest '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

}  // namespace despeckle
