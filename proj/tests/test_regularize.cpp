#include "voxavatar/diagnostics.hpp"
#include "voxavatar/regularize.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace vxa;

namespace {

Grid3 random_grid(const Vec3i& d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<Scalar> n01;
    Grid3 g(d);
    for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values[i] = n01(rng);
    return g;
}

// Direct (non-separable) 3D convolution with replicate padding.
Grid3 dense_conv(const Grid3& g, const std::vector<Scalar>& k) {
    const int h = int(k.size()) / 2;
    Grid3 out(g.dims);
    auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    for (int z = 0; z < g.dims.z(); ++z)
        for (int y = 0; y < g.dims.y(); ++y)
            for (int x = 0; x < g.dims.x(); ++x) {
                Scalar s = 0;
                for (int c = -h; c <= h; ++c)
                    for (int b = -h; b <= h; ++b)
                        for (int a = -h; a <= h; ++a)
                            s += k[a + h] * k[b + h] * k[c + h] *
                                 g(clampi(x + a, g.dims.x()), clampi(y + b, g.dims.y()), clampi(z + c, g.dims.z()));
                out(x, y, z) = s;
            }
    return out;
}

}  // namespace

TEST_CASE("gaussian kernel") {
    for (int size : {1, 3, 5, 7})
        for (Scalar sigma : {0.3, 1.0, 4.0}) {
            const auto k = gaussian_kernel(size, sigma);
            Scalar sum = 0;
            for (Scalar v : k) sum += v;
            CHECK(std::abs(sum - 1) < 1e-9);
        }
    const auto flat = gaussian_kernel(3, 1e6);
    for (Scalar v : flat) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-9));
    const auto k = gaussian_kernel(3, 1.0);
    const Scalar e = std::exp(-0.5), z = 1 + 2 * e;
    CHECK(k[0] == doctest::Approx(e / z).epsilon(1e-12));
    CHECK(k[1] == doctest::Approx(1 / z).epsilon(1e-12));
    CHECK(k[2] == doctest::Approx(e / z).epsilon(1e-12));
    CHECK_THROWS_AS(gaussian_kernel(4, 1.0), InvalidInput);
}

TEST_CASE("separable convolution") {
    const auto k = gaussian_kernel(3, 1.0);
    const Grid3 c(Vec3i(5, 6, 7), 2.5);
    CHECK((conv3d(c, k).values - 2.5).abs().maxCoeff() < 1e-9);

    Grid3 impulse(Vec3i(7, 7, 7));
    impulse(3, 3, 3) = 1;
    const Grid3 r = conv3d(impulse, k);
    for (int z = 2; z <= 4; ++z)
        for (int y = 2; y <= 4; ++y)
            for (int x = 2; x <= 4; ++x)
                CHECK(r(x, y, z) == doctest::Approx(k[x - 2] * k[y - 2] * k[z - 2]).epsilon(1e-12));
    CHECK(r(0, 0, 0) == 0);

    for (std::uint64_t seed = 1; seed <= 3; ++seed)
        for (int size : {3, 5}) {
            const auto kk = gaussian_kernel(size, 1.3);
            const Grid3 g = random_grid(Vec3i(8, 8, 8), seed);
            CHECK((conv3d(g, kk).values - dense_conv(g, kk).values).abs().maxCoeff() < 1e-6);
        }

    // adjoint identity <C a, b> = <a, C^T b>
    const Grid3 a = random_grid(Vec3i(6, 5, 4), 7), b = random_grid(Vec3i(6, 5, 4), 8);
    const Scalar lhs = (conv3d(a, k).values * b.values).sum();
    const Scalar rhs = (a.values * conv3d_adjoint(b, k).values).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("density gradient field") {
    VoxelField f(Bounds{Vec3::Zero(), Vec3(2, 1, 1)}, Vec3i(8, 5, 6), 0.7);
    for (const Grid3& g : density_gradient_field(f)) CHECK((g.values == 0).all());

    const Scalar a = 1.75, d = -0.4;
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 8; ++i) f.density_raw[f.index(i, j, k)] = a * f.cell_center(i, j, k).x() + d;
    const auto g = density_gradient_field(f);
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 1; i < 7; ++i) {
                CHECK(std::abs(g[0](i, j, k) - a) < 1e-6);
                CHECK(std::abs(g[1](i, j, k)) < 1e-6);
                CHECK(std::abs(g[2](i, j, k)) < 1e-6);
            }

    // mirroring in x negates and mirrors the x derivative
    std::mt19937_64 rng(2);
    std::normal_distribution<Scalar> n01;
    for (Eigen::Index i = 0; i < f.cell_count(); ++i) f.density_raw[i] = n01(rng);
    VoxelField m = f;
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 8; ++i) m.density_raw[m.index(i, j, k)] = f.density_raw[f.index(7 - i, j, k)];
    const auto gf = density_gradient_field(f), gm = density_gradient_field(m);
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 8; ++i) {
                CHECK(gm[0](i, j, k) == doctest::Approx(-gf[0](7 - i, j, k)).epsilon(1e-12));
                CHECK(gm[1](i, j, k) == doctest::Approx(gf[1](7 - i, j, k)).epsilon(1e-12));
            }

    // adjoint identity
    std::array<Grid3, 3> up;
    for (int ax = 0; ax < 3; ++ax) up[ax] = random_grid(f.dims, 20 + ax);
    Scalar lhs = 0;
    for (int ax = 0; ax < 3; ++ax) lhs += (gf[ax].values * up[ax].values).sum();
    const Scalar rhs = (f.density_raw * density_gradient_adjoint(f, up)).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("smoothness loss") {
    const auto k = gaussian_kernel(3, 1.0);
    CHECK(smooth_loss(Grid3(Vec3i(4, 4, 4), 3.7), k) < 1e-12);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Grid3 g = random_grid(Vec3i(8, 8, 8), seed);
        const Scalar direct = (dense_conv(g, k).values - g.values).square().mean();
        CHECK(std::abs(smooth_loss(g, k) - direct) < 1e-6);
    }
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const CheckReport r = smoothness_gradcheck(seed, 8, 1e-3, 1e-3);
        CHECK(r.pass);
        CHECK(r.checked > 0);
    }
}

TEST_CASE("smoothness term on raw density") {
    std::mt19937_64 rng(4);
    std::normal_distribution<Scalar> n01;
    VoxelField f(Bounds{Vec3::Zero(), Vec3::Ones()}, Vec3i(6, 6, 6));
    for (Eigen::Index i = 0; i < f.cell_count(); ++i) f.density_raw[i] = n01(rng);
    SmoothConfig cfg;
    cfg.target = SmoothTarget::Density;
    const SmoothTerm t = smoothness_term(f, cfg);
    const Scalar h = 1e-4;
    for (Eigen::Index i : {0L, 37L, 100L, 215L}) {
        VoxelField p = f, m = f;
        p.density_raw[i] += h;
        m.density_raw[i] -= h;
        const Scalar fd = (smoothness_term(p, cfg).value - smoothness_term(m, cfg).value) / (2 * h);
        CHECK(t.grad_density_raw[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("lambda switch") {
    const VoxelField f = random_check_field(6, 3);
    Eigen::ArrayXd grad = Eigen::ArrayXd::LinSpaced(f.cell_count(), -1, 1);
    const Eigen::ArrayXd before = grad;
    SmoothConfig off;
    off.lambda = 0;
    add_smoothness_gradient(f, off, grad);
    CHECK((grad == before).all());

    SmoothConfig on;
    const Scalar value = add_smoothness_gradient(f, on, grad);
    CHECK(value == doctest::Approx(smoothness_term(f, on).value));
    CHECK(((grad - before) - on.lambda * smoothness_term(f, on).grad_density_raw).abs().maxCoeff() < 1e-15);
    CHECK(total_loss(2.0, 5.0, 0.0) == 2.0);
    CHECK_THROWS_AS(total_loss(2.0, 5.0, -1.0), InvalidInput);
}
