#include "voxavatar/regularize.hpp"

namespace vxa {

void SmoothConfig::validate() const {
    if (kernel_size < 3 || kernel_size % 2 == 0) throw InvalidInput("smoothing kernel size must be odd and >= 3");
    if (!(sigma > 0)) throw InvalidInput("smoothing sigma must be positive");
    if (!(lambda >= 0)) throw InvalidInput("smoothness lambda must be non-negative");
}

namespace {

// One separable pass along `axis`. Adjoint scatters instead of gathers.
template <bool Adjoint>
Grid3 pass(const Grid3& in, const std::vector<Scalar>& kernel, int axis) {
    Grid3 out(in.dims, 0.0);
    const int n = in.dims[axis];
    const int half = int(kernel.size()) / 2;
    const Eigen::Index stride = axis == 0 ? 1 : axis == 1 ? in.dims.x() : Eigen::Index(in.dims.x()) * in.dims.y();
    const int o1 = axis == 0 ? 1 : 0, o2 = axis == 2 ? 1 : 2;
    for (int b = 0; b < in.dims[o2]; ++b)
        for (int a = 0; a < in.dims[o1]; ++a) {
            Eigen::Array3i c = Eigen::Array3i::Zero();
            c[o1] = a;
            c[o2] = b;
            const Eigen::Index base = in.index(c[0], c[1], c[2]);
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < int(kernel.size()); ++k) {
                    const int src = std::clamp(i + k - half, 0, n - 1);
                    if constexpr (Adjoint)
                        out.values[base + src * stride] += kernel[k] * in.values[base + i * stride];
                    else
                        out.values[base + i * stride] += kernel[k] * in.values[base + src * stride];
                }
        }
    return out;
}

void check_conv_input(const Grid3& grid, const std::vector<Scalar>& kernel) {
    if (kernel.empty() || kernel.size() % 2 == 0) throw InvalidInput("convolution kernel length must be odd");
    if (grid.values.size() != grid.dims.prod()) throw InvalidInput("grid values do not match dims");
    if ((grid.dims < int(kernel.size())).any()) throw InvalidInput("grid is smaller than the kernel");
}

}  // namespace

Grid3 conv3d(const Grid3& grid, const std::vector<Scalar>& kernel) {
    check_conv_input(grid, kernel);
    return pass<false>(pass<false>(pass<false>(grid, kernel, 0), kernel, 1), kernel, 2);
}

Grid3 conv3d_adjoint(const Grid3& grid, const std::vector<Scalar>& kernel) {
    check_conv_input(grid, kernel);
    return pass<true>(pass<true>(pass<true>(grid, kernel, 2), kernel, 1), kernel, 0);
}

std::array<Grid3, 3> density_gradient_field(const VoxelField& field) {
    if ((field.dims < 3).any()) throw InvalidInput("density gradient needs at least 3 cells per axis");
    const Vec3 cs = field.cell_size();
    std::array<Grid3, 3> g{Grid3(field.dims), Grid3(field.dims), Grid3(field.dims)};
    const auto& v = field.density_raw;
    for (int k = 0; k < field.dims.z(); ++k)
        for (int j = 0; j < field.dims.y(); ++j)
            for (int i = 0; i < field.dims.x(); ++i) {
                const Eigen::Array3i c(i, j, k);
                const Eigen::Index idx = field.index(i, j, k);
                for (int a = 0; a < 3; ++a) {
                    Eigen::Array3i lo = c, hi = c;
                    Scalar h = 2 * cs[a];
                    if (c[a] == 0) {
                        hi[a] = 1;
                        h = cs[a];
                    } else if (c[a] == field.dims[a] - 1) {
                        lo[a] = c[a] - 1;
                        h = cs[a];
                    } else {
                        lo[a] = c[a] - 1;
                        hi[a] = c[a] + 1;
                    }
                    g[a].values[idx] = (v[field.index(hi[0], hi[1], hi[2])] - v[field.index(lo[0], lo[1], lo[2])]) / h;
                }
            }
    return g;
}

Eigen::ArrayXd density_gradient_adjoint(const VoxelField& field, const std::array<Grid3, 3>& upstream) {
    const Vec3 cs = field.cell_size();
    Eigen::ArrayXd out = Eigen::ArrayXd::Zero(field.cell_count());
    for (int k = 0; k < field.dims.z(); ++k)
        for (int j = 0; j < field.dims.y(); ++j)
            for (int i = 0; i < field.dims.x(); ++i) {
                const Eigen::Array3i c(i, j, k);
                const Eigen::Index idx = field.index(i, j, k);
                for (int a = 0; a < 3; ++a) {
                    Eigen::Array3i lo = c, hi = c;
                    Scalar h = 2 * cs[a];
                    if (c[a] == 0) {
                        hi[a] = 1;
                        h = cs[a];
                    } else if (c[a] == field.dims[a] - 1) {
                        lo[a] = c[a] - 1;
                        h = cs[a];
                    } else {
                        lo[a] = c[a] - 1;
                        hi[a] = c[a] + 1;
                    }
                    const Scalar u = upstream[a].values[idx] / h;
                    out[field.index(hi[0], hi[1], hi[2])] += u;
                    out[field.index(lo[0], lo[1], lo[2])] -= u;
                }
            }
    return out;
}

Scalar smooth_loss(const Grid3& grid, const std::vector<Scalar>& kernel) {
    const Grid3 smoothed = conv3d(grid, kernel);
    return (smoothed.values - grid.values).square().mean();
}

Grid3 smooth_loss_gradient(const Grid3& grid, const std::vector<Scalar>& kernel) {
    Grid3 residual(grid.dims, conv3d(grid, kernel).values - grid.values);
    const Scalar scale = 2.0 / Scalar(grid.values.size());
    Grid3 out = conv3d_adjoint(residual, kernel);
    out.values = scale * (out.values - residual.values);
    return out;
}

SmoothTerm smoothness_term(const VoxelField& field, const SmoothConfig& config) {
    config.validate();
    const auto kernel = gaussian_kernel<Scalar>(config.kernel_size, config.sigma);
    SmoothTerm term;
    if (config.target == SmoothTarget::Density) {
        const Grid3 v(field.dims, field.density_raw);
        term.value = smooth_loss(v, kernel);
        term.grad_density_raw = smooth_loss_gradient(v, kernel).values;
        return term;
    }
    const auto grads = density_gradient_field(field);
    std::array<Grid3, 3> upstream;
    for (int a = 0; a < 3; ++a) {
        term.value += smooth_loss(grads[a], kernel);
        upstream[a] = smooth_loss_gradient(grads[a], kernel);
    }
    term.grad_density_raw = density_gradient_adjoint(field, upstream);
    return term;
}

Scalar add_smoothness_gradient(const VoxelField& field, const SmoothConfig& config, Eigen::ArrayXd& grad) {
    if (config.lambda == 0) return 0;
    SmoothTerm term = smoothness_term(field, config);
    grad += config.lambda * term.grad_density_raw;
    return term.value;
}

}  // namespace vxa
