#pragma once

#include "voxavatar/core.hpp"

namespace vxa {

/// Pinhole camera on a sphere around `target`.
///
/// Convention: position = target + radius * (cos(el) cos(az), sin(el), cos(el) sin(az)),
/// angles in degrees, world up +y. Azimuth 0 looks from +x, azimuth 90 from +z
/// (the front of the canonical body). Pixel (row, col) samples its center.
struct Camera {
    Scalar radius = 2.0;
    Scalar azimuth = 0.0;
    Scalar elevation = 0.0;
    Vec3 target = Vec3::Zero();
    Scalar fov_y = 60.0;
    int width = 64;
    int height = 64;

    Vec3 position() const;

    /// Orthonormal view frame (right, up, forward). Throws InvalidInput when the
    /// camera is degenerate.
    struct Frame {
        Vec3 right, up, forward;
    };
    Frame frame() const;

    /// World-space unit ray direction through the center of pixel (row, col).
    Vec3 ray_direction(const Frame& f, Scalar row, Scalar col) const;

    Scalar tan_half_fov() const;
    Scalar aspect() const { return Scalar(width) / Scalar(height); }

    void validate() const;

    bool operator==(const Camera&) const = default;
};

Camera camera_from_spherical(Scalar radius, Scalar azimuth, Scalar elevation, const Vec3& target, Scalar fov_y,
                             int width, int height);

}  // namespace vxa
