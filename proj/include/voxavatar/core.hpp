#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vxa {

using Scalar = double;

using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
using Vec3i = Eigen::Array3i;
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
using Affine3 = Eigen::Transform<Scalar, 3, Eigen::Affine>;

// N x 3 row-major point sets (vertex positions, joint positions, displacements).
using Points = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Weights = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One row per pixel (row-major over the image), RGB interleaved.
template <typename T>
using PixelArray = Eigen::Array<T, Eigen::Dynamic, 3, Eigen::RowMajor>;

using LabelArray = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DepthArray = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense H x W RGB image, pixels stored row-major with interleaved channels.
template <typename T = Scalar>
struct RgbImage {
    int width = 0;
    int height = 0;
    PixelArray<T> pixels;

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), pixels(PixelArray<T>::Zero(Eigen::Index(w) * h, 3)) {}

    static RgbImage constant(int w, int h, T r, T g, T b) {
        RgbImage img(w, h);
        img.pixels.col(0).setConstant(r);
        img.pixels.col(1).setConstant(g);
        img.pixels.col(2).setConstant(b);
        return img;
    }

    Eigen::Index size() const { return pixels.rows(); }
    bool same_shape(const RgbImage& o) const { return width == o.width && height == o.height; }
    auto pixel(int row, int col) { return pixels.row(Eigen::Index(row) * width + col); }
    auto pixel(int row, int col) const { return pixels.row(Eigen::Index(row) * width + col); }
};

using Image = RgbImage<Scalar>;

// Error hierarchy. Everything thrown by the library derives from std::exception.
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// The guidance oracle could not produce a prediction; the optimizer skips the step.
struct GuidanceUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Wire-protocol violation from an external oracle.
struct ProtocolError : GuidanceUnavailable {
    using GuidanceUnavailable::GuidanceUnavailable;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    ConfigError(const std::string& msg, int line = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

}  // namespace vxa
