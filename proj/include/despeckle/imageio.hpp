#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "despeckle/volume.hpp"

namespace despeckle {

struct ImageIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// File is not a format we read (wrong magic, color PNG, exotic bit depth).
struct UnsupportedFormatError : ImageIoError {
    using ImageIoError::ImageIoError;
};
// Recognized format but the header is malformed.
struct CorruptHeaderError : ImageIoError {
    using ImageIoError::ImageIoError;
};
// Header fine, pixel data ends early.
struct TruncatedDataError : ImageIoError {
    using ImageIoError::ImageIoError;
};

struct RawImage {
    int rows = 0;
    int cols = 0;
    int bit_depth = 8;  // 8 or 16
    Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic> pixels;

    int max_value() const { return bit_depth == 8 ? 255 : 65535; }
};

enum class ImageFormat { pgm, png };

void validate(const RawImage& img);

RawImage read_image(const std::string& path);
void write_image(const RawImage& img, const std::string& path, ImageFormat format);

// ln(max(pixel, floor)); floor defaults to 1 so zero pixels map to 0 in log
// space instead of -inf.
ImageGrid to_log(const RawImage& img, double floor = 1.0);
RawImage from_log(const ImageGrid& grid, int bit_depth);

struct RoiRect {
    std::string name;
    int x = 0, y = 0, w = 0, h = 0;
};

struct DatasetManifest {
    std::vector<std::string> frames;
    std::string reference;       // optional ground-truth image, empty if absent
    std::vector<RoiRect> rois;   // optional named regions
};

// JSON manifest; relative paths inside resolve against the manifest's
// directory when read.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

}  // namespace despeckle
