#include "voxavatar/voxel_field.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace vxa;

TEST_CASE("density activation") {
    CHECK(activate_density(kOutsideRaw) == 0.0);
    CHECK(activate_density(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<Scalar> u(-30, 30);
    for (int n = 0; n < 1000; ++n) {
        Scalar a = u(rng), b = u(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        CHECK(activate_density(a) < activate_density(b));
    }
    for (Scalar s : {1e-6, 0.1, 1.0, 50.0})
        CHECK(activate_density(raw_for_density(s)) == doctest::Approx(s).epsilon(1e-9));
    // derivative against central differences
    for (Scalar x : {-5.0, 0.0, 3.0}) {
        const Scalar h = 1e-5;
        const Scalar fd = (activate_density(x + h) - activate_density(x - h)) / (2 * h);
        CHECK(activate_density_derivative(x) == doctest::Approx(fd).epsilon(1e-8));
    }
}

TEST_CASE("voxel size formula") {
    CHECK(std::abs(voxel_size<Scalar>(Vec3(2, 2, 2), 1e6) - 0.02) <= 1e-12);
    const Bounds unit{Vec3::Zero(), Vec3::Ones()};
    CHECK(voxel_size(unit, 8) == doctest::Approx(0.5));
    CHECK((dims_for(unit, 8) == Vec3i(2, 2, 2)).all());
    // shrinking a side lowers the voxel size at fixed count
    Bounds b{Vec3::Zero(), Vec3(2, 1, 1)};
    const Scalar before = voxel_size(b, 1000);
    for (int axis = 0; axis < 3; ++axis) {
        Bounds s = b;
        s.max_corner[axis] *= 0.9;
        CHECK(voxel_size(s, 1000) < before);
    }
    // at least two cells per axis
    CHECK((dims_for(Bounds{Vec3::Zero(), Vec3(10, 0.01, 10)}, 1000) >= 2).all());
}

TEST_CASE("trilinear sampling") {
    VoxelField f(Bounds{Vec3::Zero(), Vec3::Ones() * 2}, Vec3i(2, 2, 2));
    for (int i = 0; i < 8; ++i) f.density_raw[i] = i;
    // cell centers reproduce stored values
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i) CHECK(trilinear(f, f.cell_center(i, j, k)).density_raw == f.density_raw[f.index(i, j, k)]);
    // midpoint of the 8 centers is their mean
    CHECK(trilinear(f, Vec3(1, 1, 1)).density_raw == doctest::Approx(3.5));
    // outside bounds: zero density
    const FieldSample out = trilinear(f, Vec3(-0.1, 1, 1));
    CHECK(activate_density(out.density_raw) == 0.0);
    CHECK(out.color.isZero());
}

TEST_CASE("resample") {
    std::mt19937_64 rng(3);
    std::normal_distribution<Scalar> n01;
    VoxelField f(Bounds{Vec3(-1, 0, 0), Vec3(1, 1, 2)}, Vec3i(6, 5, 7));
    for (Eigen::Index i = 0; i < f.cell_count(); ++i) f.density_raw[i] = n01(rng);
    const VoxelField same = resample_to_dims(f, f.bounds, f.dims);
    CHECK((same.density_raw - f.density_raw).abs().maxCoeff() <= 1e-6);

    VoxelField c(f.bounds, f.dims, 1.25, 0.3);
    const VoxelField up = resample(c, c.bounds, 2.0 * c.cell_count());
    CHECK(up.cell_count() > c.cell_count());
    CHECK((up.density_raw - 1.25).abs().maxCoeff() <= 1e-6);
    CHECK((up.color - 0.3).abs().maxCoeff() <= 1e-6);

    // a linear ramp survives on cells whose stencil is interior
    auto ramp = [](const Vec3& p) { return 0.5 * p.x() - 1.5 * p.y() + 2.0 * p.z() + 0.25; };
    VoxelField r(f.bounds, Vec3i(10, 8, 12));
    for (int k = 0; k < r.dims.z(); ++k)
        for (int j = 0; j < r.dims.y(); ++j)
            for (int i = 0; i < r.dims.x(); ++i) r.density_raw[r.index(i, j, k)] = ramp(r.cell_center(i, j, k));
    const VoxelField rr = resample_to_dims(r, r.bounds, Vec3i(17, 13, 19));
    const Vec3 lo = r.cell_center(0, 0, 0), hi = r.cell_center(r.dims.x() - 1, r.dims.y() - 1, r.dims.z() - 1);
    int checked = 0;
    for (int k = 0; k < rr.dims.z(); ++k)
        for (int j = 0; j < rr.dims.y(); ++j)
            for (int i = 0; i < rr.dims.x(); ++i) {
                const Vec3 p = rr.cell_center(i, j, k);
                if ((p.array() < lo.array()).any() || (p.array() > hi.array()).any()) continue;
                ++checked;
                CHECK(std::abs(rr.density_raw[rr.index(i, j, k)] - ramp(p)) <= 1e-4);
            }
    CHECK(checked > 100);
}

TEST_CASE("shrink_bbox") {
    VoxelField f(Bounds{Vec3::Zero(), Vec3::Ones()}, Vec3i(10, 10, 10), -10);
    CHECK(shrink_bbox(f, 0.1).min_corner == f.bounds.min_corner);
    CHECK(shrink_bbox(f, 0.1).max_corner == f.bounds.max_corner);

    f.density_raw[f.index(4, 6, 2)] = 5;
    const Bounds b = shrink_bbox(f, 0.1);
    // brute-force expectation: the cell box grown by one cell each side
    const Vec3 s = f.cell_size();
    const Vec3 want_lo = f.bounds.min_corner + Vec3(3 * s.x(), 5 * s.y(), 1 * s.z());
    const Vec3 want_hi = f.bounds.min_corner + Vec3(6 * s.x(), 8 * s.y(), 4 * s.z());
    CHECK((b.min_corner - want_lo).norm() < 1e-12);
    CHECK((b.max_corner - want_hi).norm() < 1e-12);

    // corner cell: the pad is clipped at the old bounds
    VoxelField g(f.bounds, f.dims, -10);
    g.density_raw[g.index(0, 0, 9)] = 5;
    const Bounds c = shrink_bbox(g, 0.1);
    CHECK(c.min_corner.x() == g.bounds.min_corner.x());
    CHECK(c.max_corner.z() == g.bounds.max_corner.z());
}

TEST_CASE("field container round trip") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<Scalar> u(-4, 4);
    VoxelField f(Bounds{Vec3(-0.5, -1, 0.25), Vec3(0.5, 1, 0.75)}, Vec3i(3, 4, 5));
    for (Eigen::Index i = 0; i < f.cell_count(); ++i) f.density_raw[i] = float(u(rng));
    for (Eigen::Index i = 0; i < f.color.size(); ++i) f.color.data()[i] = float(0.1 * std::abs(u(rng)));
    const std::string bytes = serialize_field(f);
    CHECK(bytes.size() == 4 + 4 * 4 + 7 * 4 + 4 * 4 * std::size_t(f.cell_count()));
    CHECK(bytes.substr(0, 4) == "VXAF");
    const VoxelField g = deserialize_field(bytes);
    CHECK((g.dims == f.dims).all());
    CHECK((g.density_raw == f.density_raw).all());
    CHECK((g.color == f.color).all());
    CHECK(serialize_field(g) == bytes);

    CHECK_THROWS(deserialize_field(bytes.substr(0, bytes.size() - 1)));
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS(deserialize_field(bad));

    const auto path = std::filesystem::temp_directory_path() / "vxa_field_roundtrip.vxaf";
    save_field(f, path.string());
    CHECK(serialize_field(load_field(path.string())) == bytes);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_field("/nonexistent/dir/x.vxaf"), IoError);
}
