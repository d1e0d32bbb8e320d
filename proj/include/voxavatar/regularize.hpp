#pragma once

#include "voxavatar/core.hpp"
#include "voxavatar/voxel_field.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace vxa {

/// Scalar values on a dense nx * ny * nz lattice, x fastest.
struct Grid3 {
    Vec3i dims = Vec3i::Zero();
    Eigen::ArrayXd values;

    Grid3() = default;
    Grid3(const Vec3i& d, Scalar fill = 0) : dims(d), values(Eigen::ArrayXd::Constant(Eigen::Index(d.prod()), fill)) {}
    Grid3(const Vec3i& d, Eigen::ArrayXd v) : dims(d), values(std::move(v)) {}

    Eigen::Index index(int i, int j, int k) const { return i + Eigen::Index(dims.x()) * (j + Eigen::Index(dims.y()) * k); }
    Scalar& operator()(int i, int j, int k) { return values[index(i, j, k)]; }
    Scalar operator()(int i, int j, int k) const { return values[index(i, j, k)]; }
};

enum class SmoothTarget { DensityGradient, Density };

struct SmoothConfig {
    int kernel_size = 3;       // k_g
    Scalar sigma = 1.0;        // sigma_g
    Scalar lambda = 1e-3;      // smoothness coefficient
    SmoothTarget target = SmoothTarget::DensityGradient;

    void validate() const;
};

/// Normalized samples of exp(-i^2 / (2 sigma^2)) at integer offsets
/// -(k-1)/2 .. (k-1)/2.
template <typename T>
std::vector<T> gaussian_kernel(int size, T sigma) {
    if (size < 1 || size % 2 == 0) throw InvalidInput("Gaussian kernel size must be odd");
    if (!(sigma > T(0))) throw InvalidInput("Gaussian sigma must be positive");
    const int half = size / 2;
    std::vector<T> k(size);
    T sum = 0;
    for (int i = -half; i <= half; ++i) sum += k[i + half] = std::exp(-T(i * i) / (T(2) * sigma * sigma));
    for (T& v : k) v /= sum;
    return k;
}

/// Separable 3D convolution (x, then y, then z) with replicate padding.
Grid3 conv3d(const Grid3& grid, const std::vector<Scalar>& kernel);

/// Transpose (adjoint) of conv3d.
Grid3 conv3d_adjoint(const Grid3& grid, const std::vector<Scalar>& kernel);

/// Central differences of the raw density divided by 2 * cell size per axis,
/// one-sided at the boundary faces.
std::array<Grid3, 3> density_gradient_field(const VoxelField& field);

/// Adjoint of density_gradient_field's linear map, summed over the three axes.
Eigen::ArrayXd density_gradient_adjoint(const VoxelField& field, const std::array<Grid3, 3>& upstream);

/// mean over cells of (G(V) - V)^2.
Scalar smooth_loss(const Grid3& grid, const std::vector<Scalar>& kernel);

/// Gradient of smooth_loss with respect to the grid values.
Grid3 smooth_loss_gradient(const Grid3& grid, const std::vector<Scalar>& kernel);

struct SmoothTerm {
    Scalar value = 0;
    Eigen::ArrayXd grad_density_raw;  // d value / d density_raw (unscaled by lambda)
};

/// L_smooth of the density-gradient field (sum over the three axes), or of
/// the raw density itself when config.target == Density, with its gradient.
SmoothTerm smoothness_term(const VoxelField& field, const SmoothConfig& config);

/// L = L_sds + lambda * L_smooth.
inline Scalar total_loss(Scalar sds_term, Scalar smooth_term, Scalar lambda) {
    if (!(lambda >= 0)) throw InvalidInput("lambda must be non-negative");
    return sds_term + lambda * smooth_term;
}

/// Adds lambda * smoothness gradient into `grad`; no-op for lambda = 0.
/// Returns the unscaled smoothness value.
Scalar add_smoothness_gradient(const VoxelField& field, const SmoothConfig& config, Eigen::ArrayXd& grad);

}  // namespace vxa
