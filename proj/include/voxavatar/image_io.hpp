#pragma once

#include "voxavatar/core.hpp"
#include "voxavatar/raster.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vxa {

// PNG writers (libpng). Output bytes depend only on the pixel data.
void write_png_rgb8(const std::string& path, int width, int height, const std::uint8_t* rgb);
void write_png_gray8(const std::string& path, int width, int height, const std::uint8_t* gray);
void write_png_gray16(const std::string& path, int width, int height, const std::uint16_t* gray);

/// Clamps to [0,1] and quantizes to 8 bits.
void write_png(const std::string& path, const Image& image);

/// Gray image from a scalar H x W array mapped linearly from [lo, hi] to [0,1].
void write_png_scalar(const std::string& path, const DepthArray& values, Scalar lo, Scalar hi);

void write_condition_pngs(const std::string& stem, const ConditionImage& c);

/// 16-bit depth PNG: finite depths normalized over their own [min, max] to
/// 1..65535, background 0.
void write_depth_png16(const std::string& path, const DepthArray& depth);

struct PngData {
    int width = 0, height = 0, channels = 0, bit_depth = 0;
    std::vector<std::uint16_t> samples;  // row-major, interleaved
};
PngData read_png(const std::string& path);

}  // namespace vxa
