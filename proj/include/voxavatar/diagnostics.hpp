#pragma once

#include "voxavatar/camera.hpp"
#include "voxavatar/voxel_field.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vxa {

// Finite-difference and brute-force self checks behind the `gradcheck` command.

struct CheckReport {
    std::string name;
    std::uint64_t seed = 0;
    bool pass = false;
    Scalar max_rel_error = 0;   // gradient checks
    Eigen::Index worst_index = -1;
    Vec3i worst_cell = Vec3i::Constant(-1);
    Scalar agreement = 1;       // rasterizer checks: fraction of matching pixels
    int checked = 0;

    std::string to_json() const;
};

struct GradcheckOptions {
    int grid = 16;
    int image = 8;
    Scalar h = 1e-3;
    Scalar tolerance = 1e-3;
    Scalar min_grad = 1e-6;
    /// Negative control: scales the analytic gradient of one cell by 1.05.
    bool perturb_adjoint = false;
};

/// Random field and camera for renderer gradient checks.
VoxelField random_check_field(int n, std::uint64_t seed);
Camera random_check_camera(int image, std::uint64_t seed);

/// Raw-density gradient of sum(w * render) against central differences.
CheckReport renderer_gradcheck(std::uint64_t seed, const GradcheckOptions& options = {});

/// Smoothness-term gradient against central differences on a random n^3 field.
CheckReport smoothness_gradcheck(std::uint64_t seed, int n = 8, Scalar h = 1e-3, Scalar tolerance = 1e-3);

/// Z-buffer labels against per-pixel nearest ray-triangle intersection for a
/// random labeled mesh of at most `max_triangles` triangles.
CheckReport rasterizer_check(std::uint64_t seed, int size = 32, int max_triangles = 200, Scalar min_agreement = 0.99);

}  // namespace vxa
