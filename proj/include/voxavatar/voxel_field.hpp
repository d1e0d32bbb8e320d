#pragma once

#include "voxavatar/core.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace vxa {

struct Bounds {
    Vec3 min_corner = Vec3::Constant(-1);
    Vec3 max_corner = Vec3::Constant(1);

    Vec3 extent() const { return max_corner - min_corner; }
    Vec3 center() const { return 0.5 * (min_corner + max_corner); }
    bool contains(const Vec3& p) const {
        return (p.array() >= min_corner.array()).all() && (p.array() <= max_corner.array()).all();
    }
    void validate() const;

    bool operator==(const Bounds&) const = default;
};

/// Raw density of points outside the field bounds; activates to exactly 0.
inline constexpr Scalar kOutsideRaw = -std::numeric_limits<Scalar>::infinity();

/// Default softplus shift b in sigma = softplus(raw + b).
inline constexpr Scalar kDefaultDensityShift = -2.0;

/// Shifted softplus, numerically stable for large |x|.
template <typename T>
T activate_density(T raw, T shift = T(kDefaultDensityShift)) {
    const T x = raw + shift;
    if (x == -std::numeric_limits<T>::infinity()) return T(0);
    return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// d sigma / d raw = logistic(raw + b).
template <typename T>
T activate_density_derivative(T raw, T shift = T(kDefaultDensityShift)) {
    const T x = raw + shift;
    if (x == -std::numeric_limits<T>::infinity()) return T(0);
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

/// Inverse of activate_density for sigma > 0.
template <typename T>
T raw_for_density(T sigma, T shift = T(kDefaultDensityShift)) {
    return (sigma > T(30) ? sigma + std::log(-std::expm1(-sigma)) : std::log(std::expm1(sigma))) - shift;
}

/// s_v = cbrt(d_x d_y d_z / N_v). Throws InvalidInput for N_v < 8.
template <typename T>
T voxel_size(const Eigen::Matrix<T, 3, 1>& extent, T target_voxels) {
    if (!(target_voxels >= T(8))) throw InvalidInput("target voxel count must be at least 8");
    return std::cbrt(extent.x() * extent.y() * extent.z() / target_voxels);
}

inline Scalar voxel_size(const Bounds& b, Scalar target_voxels) { return voxel_size<Scalar>(b.extent(), target_voxels); }

/// n_i = max(2, round(d_i / s_v)).
Vec3i dims_for(const Bounds& b, Scalar target_voxels);

/// Explicit density + color grid. Values live at cell centers; cell (i,j,k)
/// has center min + (idx + 0.5) * cell_size. Linear index i + nx (j + ny k).
struct VoxelField {
    Bounds bounds;
    Vec3i dims = Vec3i::Constant(2);
    Eigen::ArrayXd density_raw;
    PixelArray<Scalar> color;  // one RGB row per cell
    Scalar density_shift = kDefaultDensityShift;

    VoxelField() = default;
    VoxelField(const Bounds& b, const Vec3i& d, Scalar raw = 0, Scalar gray = 0.5);

    Eigen::Index cell_count() const { return Eigen::Index(dims.x()) * dims.y() * dims.z(); }
    Eigen::Index index(int i, int j, int k) const { return i + Eigen::Index(dims.x()) * (j + Eigen::Index(dims.y()) * k); }
    Vec3 cell_size() const { return bounds.extent().array() / dims.cast<Scalar>(); }
    Vec3 cell_center(int i, int j, int k) const {
        return bounds.min_corner + ((Eigen::Array3d(i, j, k) + 0.5) * cell_size().array()).matrix();
    }
    /// Cube root of the cell volume.
    Scalar voxel_size() const { return std::cbrt(cell_size().prod()); }
    Scalar sigma(Eigen::Index cell) const { return activate_density(density_raw[cell], density_shift); }

    void validate() const;
};

struct FieldSample {
    Scalar density_raw;
    Vec3 color;
};

/// Trilinear interpolation between the 8 surrounding cell centers, clamped to
/// the outermost centers inside the bounds. Outside the bounds: raw = kOutsideRaw,
/// black color.
FieldSample trilinear(const VoxelField& field, const Vec3& p);

/// Corner cells and weights of the trilinear stencil at p (p inside bounds).
struct TrilinearStencil {
    Eigen::Index cell[8];
    Scalar weight[8];
};
bool trilinear_stencil(const VoxelField& field, const Vec3& p, TrilinearStencil& out);

/// Trilinear sampling of an arbitrary per-cell scalar array on field's lattice.
Scalar sample_scalar(const VoxelField& layout, const Eigen::ArrayXd& values, const Vec3& p);

/// New field over new_bounds with dims_for(new_bounds, target_voxels); each new
/// cell center is trilinearly sampled from the old field (clamped at the
/// boundary so no cell is filled with the outside surrogate).
VoxelField resample(const VoxelField& field, const Bounds& new_bounds, Scalar target_voxels);
VoxelField resample_to_dims(const VoxelField& field, const Bounds& new_bounds, const Vec3i& dims);

/// Same lattice remap applied to an arbitrary per-cell array (optimizer moments).
Eigen::ArrayXd resample_array(const VoxelField& from, const Eigen::ArrayXd& values, const VoxelField& to);

/// Tightest box (padded by one cell) around cells with sigma > threshold;
/// the current bounds when no cell qualifies. Result is clipped to the current bounds.
Bounds shrink_bbox(const VoxelField& field, Scalar threshold);

// Binary container (little-endian):
//   char[4] "VXAF", u32 version = 1, u32 nx, ny, nz,
//   f32 min[3], f32 max[3], f32 density_shift,
//   f32 density_raw[n], f32 color[3n] (RGB interleaved).
void save_field(const VoxelField& field, const std::string& path);
VoxelField load_field(const std::string& path);
std::string serialize_field(const VoxelField& field);
VoxelField deserialize_field(const std::string& bytes);

}  // namespace vxa
