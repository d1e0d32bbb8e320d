#pragma once

#include "voxavatar/camera.hpp"
#include "voxavatar/core.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace vxa {

/// Fixed part palette: label i in 1..24 has HSV hue (i-1)/24*360, S = V = 1,
/// quantized to 8 bits with round-half-up. Label 0 (background) is black.
/// Published as docs/palette.csv.
inline constexpr std::array<std::array<std::uint8_t, 3>, 25> kPalette = {{
    {0, 0, 0},
    {255, 0, 0},   {255, 64, 0},  {255, 128, 0}, {255, 191, 0}, {255, 255, 0}, {191, 255, 0},
    {128, 255, 0}, {64, 255, 0},  {0, 255, 0},   {0, 255, 64},  {0, 255, 128}, {0, 255, 191},
    {0, 255, 255}, {0, 191, 255}, {0, 128, 255}, {0, 64, 255},  {0, 0, 255},   {64, 0, 255},
    {128, 0, 255}, {191, 0, 255}, {255, 0, 255}, {255, 0, 191}, {255, 0, 128}, {255, 0, 64},
}};

/// Inverse palette lookup; returns -1 for colors outside the palette.
int palette_label(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// DensePose-style condition image.
struct ConditionImage {
    int width = 0;
    int height = 0;
    LabelArray labels;                  // H x W, 0 = background
    PixelArray<std::uint8_t> rgb;       // H*W rows, palette colors of labels
    DepthArray depth;                   // H x W view-space z in meters, +inf on background

    bool operator==(const ConditionImage& o) const {
        return width == o.width && height == o.height && (labels == o.labels).all() && (rgb == o.rgb).all() &&
               ((depth == o.depth) || (depth.isInf() && o.depth.isInf())).all();
    }
};

/// Z-buffered perspective rasterization of a labeled triangle mesh.
/// Pixel-center sampling, top-left fill rule, both windings drawn, triangles
/// clipped against a near plane at `near` meters.
ConditionImage rasterize_condition(const Points& vertices, const Faces& faces, const std::vector<int>& face_labels,
                                   const Camera& camera, Scalar near = 1e-3);

/// Counts of labels 0..24; sums to H*W.
std::array<std::int64_t, 25> label_histogram(const ConditionImage& image);

/// Palette image decoded back to labels (inverse of the encoding).
LabelArray labels_from_palette(const PixelArray<std::uint8_t>& rgb, int width, int height);

/// Target image for silhouette guidance: palette colors over a white background, in [0,1].
Image palette_target(const ConditionImage& c);

}  // namespace vxa
