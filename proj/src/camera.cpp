#include "voxavatar/camera.hpp"

#include <cmath>
#include <numbers>

namespace vxa {

namespace {
constexpr Scalar kDeg = std::numbers::pi / 180.0;
}

Vec3 Camera::position() const {
    const Scalar az = azimuth * kDeg, el = elevation * kDeg;
    return target + radius * Vec3(std::cos(el) * std::cos(az), std::sin(el), std::cos(el) * std::sin(az));
}

void Camera::validate() const {
    if (!(radius > 0) || !std::isfinite(radius)) throw InvalidInput("camera radius must be positive");
    if (!(fov_y > 0 && fov_y < 180)) throw InvalidInput("camera fov_y must be in (0, 180)");
    if (width < 1 || height < 1) throw InvalidInput("camera image size must be at least 1x1");
    if (!target.allFinite() || !std::isfinite(azimuth) || !std::isfinite(elevation))
        throw InvalidInput("camera parameters not finite");
}

Camera::Frame Camera::frame() const {
    validate();
    const Vec3 pos = position();
    const Vec3 view = target - pos;
    if (!(view.norm() > 1e-12)) throw InvalidInput("degenerate camera: target coincides with position");
    Frame f;
    f.forward = view.normalized();
    Vec3 up_hint = Vec3::UnitY();
    // Looking straight up or down: fall back to -z/+z as the up hint.
    if (std::abs(f.forward.dot(up_hint)) > 1 - 1e-9) up_hint = f.forward.y() > 0 ? Vec3(0, 0, -1) : Vec3(0, 0, 1);
    f.right = f.forward.cross(up_hint).normalized();
    f.up = f.right.cross(f.forward);
    return f;
}

Scalar Camera::tan_half_fov() const { return std::tan(0.5 * fov_y * kDeg); }

Vec3 Camera::ray_direction(const Frame& f, Scalar row, Scalar col) const {
    const Scalar th = tan_half_fov();
    const Scalar x = ((col + 0.5) / width * 2 - 1) * th * aspect();
    const Scalar y = (1 - (row + 0.5) / height * 2) * th;
    return (f.forward + x * f.right + y * f.up).normalized();
}

Camera camera_from_spherical(Scalar radius, Scalar azimuth, Scalar elevation, const Vec3& target, Scalar fov_y,
                             int width, int height) {
    Camera cam;
    cam.radius = radius;
    cam.azimuth = std::fmod(std::fmod(azimuth, 360.0) + 360.0, 360.0);
    cam.elevation = elevation;
    cam.target = target;
    cam.fov_y = fov_y;
    cam.width = width;
    cam.height = height;
    cam.validate();
    return cam;
}

}  // namespace vxa
