#include "voxavatar/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace vxa {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_rows(const std::string& path, int width, int height, int color_type, int bit_depth,
                    const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng error writing " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);  // samples are host (little-endian) order
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

template <typename T>
std::vector<png_bytep> row_pointers(const T* data, int width, int height, int channels) {
    std::vector<png_bytep> rows(height);
    for (int r = 0; r < height; ++r)
        rows[r] = reinterpret_cast<png_bytep>(const_cast<T*>(data + std::size_t(r) * width * channels));
    return rows;
}

std::uint8_t quantize(Scalar v) {
    if (!(v > 0)) return 0;
    if (v >= 1) return 255;
    return std::uint8_t(std::lround(v * 255.0));
}

}  // namespace

void write_png_rgb8(const std::string& path, int width, int height, const std::uint8_t* rgb) {
    write_png_rows(path, width, height, PNG_COLOR_TYPE_RGB, 8, row_pointers(rgb, width, height, 3));
}

void write_png_gray8(const std::string& path, int width, int height, const std::uint8_t* gray) {
    write_png_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 8, row_pointers(gray, width, height, 1));
}

void write_png_gray16(const std::string& path, int width, int height, const std::uint16_t* gray) {
    write_png_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 16, row_pointers(gray, width, height, 1));
}

void write_png(const std::string& path, const Image& image) {
    std::vector<std::uint8_t> bytes(std::size_t(image.size()) * 3);
    for (Eigen::Index i = 0; i < image.size(); ++i)
        for (int c = 0; c < 3; ++c) bytes[3 * i + c] = quantize(image.pixels(i, c));
    write_png_rgb8(path, image.width, image.height, bytes.data());
}

void write_png_scalar(const std::string& path, const DepthArray& values, Scalar lo, Scalar hi) {
    std::vector<std::uint8_t> bytes(values.size());
    const Scalar span = hi > lo ? hi - lo : 1;
    for (Eigen::Index i = 0; i < values.size(); ++i) bytes[i] = quantize((values.data()[i] - lo) / span);
    write_png_gray8(path, int(values.cols()), int(values.rows()), bytes.data());
}

void write_depth_png16(const std::string& path, const DepthArray& depth) {
    Scalar lo = std::numeric_limits<Scalar>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < depth.size(); ++i)
        if (std::isfinite(depth.data()[i])) {
            lo = std::min(lo, depth.data()[i]);
            hi = std::max(hi, depth.data()[i]);
        }
    std::vector<std::uint16_t> px(depth.size(), 0);
    for (Eigen::Index i = 0; i < depth.size(); ++i) {
        const Scalar d = depth.data()[i];
        if (!std::isfinite(d)) continue;
        const Scalar u = hi > lo ? (d - lo) / (hi - lo) : 0;
        px[i] = std::uint16_t(1 + std::lround(u * 65534.0));
    }
    write_png_gray16(path, int(depth.cols()), int(depth.rows()), px.data());
}

void write_condition_pngs(const std::string& stem, const ConditionImage& c) {
    write_png_rgb8(stem + "_rgb.png", c.width, c.height, c.rgb.data());
    write_png_gray8(stem + "_labels.png", c.width, c.height, c.labels.data());
    write_depth_png16(stem + "_depth.png", c.depth);
}

PngData read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng error reading " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    PngData out;
    out.width = int(png_get_image_width(png, info));
    out.height = int(png_get_image_height(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    out.channels = png_get_channels(png, info);
    if (out.bit_depth == 16) png_set_swap(png);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buf(row_bytes * out.height);
    std::vector<png_bytep> rows(out.height);
    for (int r = 0; r < out.height; ++r) rows[r] = buf.data() + r * row_bytes;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    const std::size_t n = std::size_t(out.width) * out.height * out.channels;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.samples[i] = out.bit_depth == 16 ? std::uint16_t(buf[2 * i] | (buf[2 * i + 1] << 8)) : buf[i];
    return out;
}

}  // namespace vxa
