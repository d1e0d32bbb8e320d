#pragma once

#include "voxavatar/camera.hpp"
#include "voxavatar/core.hpp"
#include "voxavatar/voxel_field.hpp"

#include <cstdint>

namespace vxa {

enum class BackgroundMode { Fixed, RandomPerImage };

struct RenderSettings {
    Scalar step_fraction = 0.5;  // ray-march step as a fraction of the field's voxel size
    Scalar near = 0.05;
    Scalar far = 10.0;
    BackgroundMode background_mode = BackgroundMode::Fixed;
    Vec3 background = Vec3::Ones();
    std::uint64_t background_seed = 0;  // used by RandomPerImage
    Scalar early_stop_transmittance = 1e-4;
    bool compute_normals = true;

    void validate() const;
};

/// Background color actually used for an image: `background` in Fixed mode,
/// a uniform RGB drawn from background_seed otherwise.
Vec3 resolve_background(const RenderSettings& s);

struct RenderOutput {
    Image rgb;
    DepthArray alpha;  // H x W accumulated opacity
    DepthArray depth;  // expected ray distance, 0 where alpha == 0
    PixelArray<Scalar> normal;  // unit normals from the density gradient (zero where undefined)
};

struct FieldGradient {
    Eigen::ArrayXd density_raw;
    PixelArray<Scalar> color;

    static FieldGradient zeros(const VoxelField& f) {
        return {Eigen::ArrayXd::Zero(f.cell_count()), PixelArray<Scalar>::Zero(f.cell_count(), 3)};
    }
};

/// Emission-absorption ray marching:
///   C = sum_i T_i (1 - exp(-sigma_i delta)) c_i + T_final * background,
///   T_i = exp(-sum_{j<i} sigma_j delta).
/// Samples sit at the midpoints of uniform steps across the ray's overlap with
/// the field bounds and [near, far]; marching stops once T < early_stop_transmittance.
RenderOutput render(const VoxelField& field, const Camera& camera, const RenderSettings& settings);

/// Exact adjoint of render(): gradients of sum(pixel_grad * rgb) with respect
/// to raw density (through the softplus) and cell colors.
FieldGradient render_backward(const VoxelField& field, const Camera& camera, const RenderSettings& settings,
                              const Image& pixel_grad);

}  // namespace vxa
