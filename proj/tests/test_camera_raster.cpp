#include "voxavatar/body_model.hpp"
#include "voxavatar/camera.hpp"
#include "voxavatar/raster.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using namespace vxa;

namespace {

// Label of the nearest ray-triangle hit through the center of pixel (r, c).
int cast(const Points& v, const Faces& f, const std::vector<int>& labels, const Camera& cam, int r, int c) {
    const auto frame = cam.frame();
    const Vec3 o = cam.position(), d = cam.ray_direction(frame, r, c);
    Scalar best = std::numeric_limits<Scalar>::infinity();
    int label = 0;
    for (Eigen::Index t = 0; t < f.rows(); ++t) {
        const Vec3 a = v.row(f(t, 0)), b = v.row(f(t, 1)), e = v.row(f(t, 2));
        const Mat3 m = (Mat3() << -d, b - a, e - a).finished();
        if (std::abs(m.determinant()) < 1e-14) continue;
        const Vec3 x = m.lu().solve(o - a);  // (distance, u, v)
        if (x[0] > 0 && x[1] >= 0 && x[2] >= 0 && x[1] + x[2] <= 1 && x[0] < best) {
            best = x[0];
            label = labels[t];
        }
    }
    return label;
}

const std::vector<int> kFrontLabels{kTorsoFront, kUpperLegRightFront, kUpperLegLeftFront, kLowerLegRightFront,
                                    kLowerLegLeftFront, kUpperArmLeftFront, kUpperArmRightFront,
                                    kLowerArmLeftFront, kLowerArmRightFront};

}  // namespace

TEST_CASE("spherical camera convention") {
    const Camera a = camera_from_spherical(2, 0, 0, Vec3::Zero(), 60, 8, 8);
    CHECK((a.position() - Vec3(2, 0, 0)).norm() < 1e-12);
    CHECK((a.frame().forward - Vec3(-1, 0, 0)).norm() < 1e-12);
    const Camera b = camera_from_spherical(2, 180, 0, Vec3::Zero(), 60, 8, 8);
    CHECK((b.position() - Vec3(-2, 0, 0)).norm() < 1e-12);
    const Camera c = camera_from_spherical(1.4, 37, 20, Vec3::Zero(), 60, 8, 8);
    CHECK(std::abs(c.position().norm() - 1.4) < 1e-9);
    const Camera front = camera_from_spherical(2, 90, 0, Vec3::Zero(), 60, 8, 8);
    CHECK((front.position() - Vec3(0, 0, 2)).norm() < 1e-12);
}

TEST_CASE("palette is a bijection") {
    for (int l = 0; l < 25; ++l) CHECK(palette_label(kPalette[l][0], kPalette[l][1], kPalette[l][2]) == l);
    CHECK(palette_label(1, 2, 3) == -1);
    // hue (l-1)*15 degrees at full saturation and value
    for (int l = 1; l <= 24; ++l) {
        const Scalar h = (l - 1) * 15.0 / 60.0;
        const Scalar x = 1 - std::abs(std::fmod(h, 2.0) - 1);
        Vec3 rgb;
        switch (int(h)) {
            case 0: rgb = {1, x, 0}; break;
            case 1: rgb = {x, 1, 0}; break;
            case 2: rgb = {0, 1, x}; break;
            case 3: rgb = {0, x, 1}; break;
            case 4: rgb = {x, 0, 1}; break;
            default: rgb = {1, 0, x}; break;
        }
        for (int k = 0; k < 3; ++k) CHECK(int(kPalette[l][k]) == int(std::floor(rgb[k] * 255 + 0.5)));
    }
}

TEST_CASE("empty mesh renders background") {
    const Camera cam = camera_from_spherical(2, 90, 0, Vec3::Zero(), 60, 16, 12);
    const ConditionImage img = rasterize_condition(Points(0, 3), Faces(0, 3), {}, cam);
    CHECK((img.labels == 0).all());
    CHECK(img.depth.isInf().all());
    CHECK(label_histogram(img)[0] == 16 * 12);
}

TEST_CASE("triangle over the principal point") {
    Points v(3, 3);
    v << -0.5, -0.5, 0, 0.5, -0.5, 0, 0, 0.6, 0;
    Faces f(1, 3);
    f << 0, 1, 2;
    const Camera cam = camera_from_spherical(2, 90, 0, Vec3::Zero(), 60, 33, 33);
    const ConditionImage img = rasterize_condition(v, f, {7}, cam);
    CHECK(int(img.labels(16, 16)) == 7);
    CHECK(std::abs(img.depth(16, 16) - 2.0) < 1e-12);
    CHECK(int(img.labels(0, 0)) == 0);
    // reversed winding draws the same pixels
    Faces g(1, 3);
    g << 0, 2, 1;
    CHECK(rasterize_condition(v, g, {7}, cam).labels.cwiseEqual(img.labels).all());
}

TEST_CASE("nearest of two overlapping triangles wins") {
    Points v(6, 3);
    v << -0.6, -0.5, 0.3, 0.6, -0.5, 0.3, 0, 0.7, 0.3,  // near, label 3
        -0.7, -0.3, -0.2, 0.5, -0.6, -0.2, 0.2, 0.6, -0.2;  // far, label 9
    Faces f(2, 3);
    f << 3, 4, 5, 0, 1, 2;
    const std::vector<int> labels{9, 3};
    const Camera cam = camera_from_spherical(2, 80, 10, Vec3::Zero(), 50, 32, 32);
    const ConditionImage img = rasterize_condition(v, f, labels, cam);
    int overlap = 0, agree = 0;
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) {
            const int want = cast(v, f, labels, cam, r, c);
            agree += want == img.labels(r, c);
            overlap += img.labels(r, c) == 3;
        }
    CHECK(overlap > 50);
    CHECK(agree >= 1014);  // 99% of 1024
}

TEST_CASE("near plane clipping keeps the visible part") {
    // Triangle straddling the camera plane: only points in front are drawn.
    Points v(3, 3);
    v << -1, -1, 2.5, 1, -1, 2.5, 0, 1, -1;
    Faces f(1, 3);
    f << 0, 1, 2;
    const Camera cam = camera_from_spherical(2, 90, 0, Vec3::Zero(), 60, 32, 32);
    const ConditionImage img = rasterize_condition(v, f, {4}, cam, 0.1);
    int drawn = 0;
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c)
            if (img.labels(r, c) != 0) {
                ++drawn;
                CHECK(img.depth(r, c) >= 0.1 - 1e-12);
            }
    CHECK(drawn > 0);
}

TEST_CASE("default body front and back views") {
    const BodyTemplate tpl = make_default_template();
    const PosedBody body = pose_body(tpl, ShapeParams{}, a_pose());
    const auto [lo, hi] = point_bounds(body.vertices);
    auto view = [&](Scalar az) {
        const Camera cam = camera_from_spherical(2.5, az, 0, 0.5 * (lo + hi), 60, 64, 64);
        return rasterize_condition(body.vertices, tpl.faces, tpl.face_labels, cam);
    };
    const ConditionImage front = view(90), back = view(270);
    const auto hf = label_histogram(front), hb = label_histogram(back);
    CHECK(std::accumulate(hf.begin(), hf.end(), std::int64_t(0)) == 64 * 64);
    std::int64_t front_in_front = 0, front_in_back = 0;
    for (int l : kFrontLabels) {
        front_in_front += hf[l];
        front_in_back += hb[l];
    }
    CHECK(front_in_front > front_in_back);
    CHECK(hf[0] < 64 * 64);

    // palette round trip preserves labels and histogram
    const LabelArray decoded = labels_from_palette(front.rgb, 64, 64);
    CHECK((decoded == front.labels).all());
}

TEST_CASE("palette_target colors") {
    ConditionImage c;
    c.width = 2;
    c.height = 1;
    c.labels = LabelArray(1, 2);
    c.labels << 0, 5;
    c.rgb.resize(2, 3);
    c.rgb.row(0) << 0, 0, 0;
    c.rgb.row(1) << kPalette[5][0], kPalette[5][1], kPalette[5][2];
    c.depth = DepthArray::Constant(1, 2, 1.0);
    const Image t = palette_target(c);
    CHECK((t.pixel(0, 0).array() == 1.0).all());
    CHECK(t.pixel(0, 1)[0] == doctest::Approx(1.0));
    CHECK(t.pixel(0, 1)[1] == doctest::Approx(1.0));
    CHECK(t.pixel(0, 1)[2] == doctest::Approx(0.0));
}
