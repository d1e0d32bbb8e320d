#include "voxavatar/diagnostics.hpp"

#include "voxavatar/raster.hpp"
#include "voxavatar/regularize.hpp"
#include "voxavatar/renderer.hpp"

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <random>

namespace vxa {

std::string CheckReport::to_json() const {
    nlohmann::json j{{"name", name}, {"seed", seed}, {"pass", pass}, {"checked", checked}};
    if (worst_index >= 0) {
        j["max_rel_error"] = max_rel_error;
        j["worst_index"] = worst_index;
        j["worst_cell"] = {worst_cell.x(), worst_cell.y(), worst_cell.z()};
    }
    if (name == "rasterizer") j["agreement"] = agreement;
    return j.dump();
}

VoxelField random_check_field(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Scalar> raw(-3.0, 3.0), col(0.0, 1.0);
    VoxelField f(Bounds{Vec3::Constant(-1), Vec3::Constant(1)}, Vec3i::Constant(n));
    for (Eigen::Index i = 0; i < f.cell_count(); ++i) f.density_raw[i] = raw(rng);
    for (Eigen::Index i = 0; i < f.color.size(); ++i) f.color.data()[i] = col(rng);
    return f;
}

Camera random_check_camera(int image, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<Scalar> az(0.0, 360.0), el(-40.0, 40.0), off(-0.2, 0.2);
    return camera_from_spherical(3.0, az(rng), el(rng), Vec3(off(rng), off(rng), off(rng)), 50.0, image, image);
}

namespace {

Vec3i cell_of(const VoxelField& f, Eigen::Index idx) {
    const int nx = f.dims.x(), ny = f.dims.y();
    return Vec3i(int(idx % nx), int((idx / nx) % ny), int(idx / (Eigen::Index(nx) * ny)));
}

struct ErrorTracker {
    Scalar min_grad;
    CheckReport& report;
    void add(Eigen::Index i, Scalar analytic, Scalar numeric) {
        const Scalar scale = std::max(std::abs(analytic), std::abs(numeric));
        if (!(scale > min_grad)) return;
        ++report.checked;
        const Scalar rel = std::abs(analytic - numeric) / scale;
        if (report.worst_index < 0 || !(rel <= report.max_rel_error)) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
};

}  // namespace

CheckReport renderer_gradcheck(std::uint64_t seed, const GradcheckOptions& o) {
    CheckReport rep;
    rep.name = "renderer";
    rep.seed = seed;
    VoxelField field = random_check_field(o.grid, seed);
    const Camera cam = random_check_camera(o.image, seed);
    RenderSettings rs;
    rs.compute_normals = false;
    std::mt19937_64 rng(seed + 17);
    std::normal_distribution<Scalar> n01;
    Image w(o.image, o.image);
    for (Eigen::Index i = 0; i < w.pixels.size(); ++i) w.pixels.data()[i] = n01(rng);

    FieldGradient g = render_backward(field, cam, rs, w);
    if (o.perturb_adjoint) {
        Eigen::Index target = 0;
        g.density_raw.abs().maxCoeff(&target);
        g.density_raw[target] *= 1.05;
    }
    auto loss = [&] { return (render(field, cam, rs).rgb.pixels * w.pixels).sum(); };
    ErrorTracker track{o.min_grad, rep};
    for (Eigen::Index i = 0; i < field.cell_count(); ++i) {
        const Scalar x0 = field.density_raw[i];
        field.density_raw[i] = x0 + o.h;
        const Scalar lp = loss();
        field.density_raw[i] = x0 - o.h;
        const Scalar lm = loss();
        field.density_raw[i] = x0;
        track.add(i, g.density_raw[i], (lp - lm) / (2 * o.h));
    }
    if (rep.worst_index >= 0) rep.worst_cell = cell_of(field, rep.worst_index);
    rep.pass = rep.checked > 0 && rep.max_rel_error < o.tolerance;
    return rep;
}

CheckReport smoothness_gradcheck(std::uint64_t seed, int n, Scalar h, Scalar tolerance) {
    CheckReport rep;
    rep.name = "smoothness";
    rep.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<Scalar> n01;
    VoxelField field(Bounds{Vec3::Zero(), Vec3::Ones()}, Vec3i::Constant(n));
    for (Eigen::Index i = 0; i < field.cell_count(); ++i) field.density_raw[i] = n01(rng);
    const SmoothConfig cfg;
    const SmoothTerm term = smoothness_term(field, cfg);
    ErrorTracker track{1e-6, rep};
    for (Eigen::Index i = 0; i < field.cell_count(); ++i) {
        const Scalar x0 = field.density_raw[i];
        field.density_raw[i] = x0 + h;
        const Scalar lp = smoothness_term(field, cfg).value;
        field.density_raw[i] = x0 - h;
        const Scalar lm = smoothness_term(field, cfg).value;
        field.density_raw[i] = x0;
        track.add(i, term.grad_density_raw[i], (lp - lm) / (2 * h));
    }
    if (rep.worst_index >= 0) rep.worst_cell = cell_of(field, rep.worst_index);
    rep.pass = rep.checked > 0 && rep.max_rel_error < tolerance;
    return rep;
}

CheckReport rasterizer_check(std::uint64_t seed, int size, int max_triangles, Scalar min_agreement) {
    CheckReport rep;
    rep.name = "rasterizer";
    rep.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Scalar> center(-0.8, 0.8), spread(-0.45, 0.45), az(0, 360), el(-60, 60);
    const int n_tri = std::uniform_int_distribution<int>(1, max_triangles)(rng);
    Points v(3 * n_tri, 3);
    Faces f(n_tri, 3);
    std::vector<int> labels(n_tri);
    for (int t = 0; t < n_tri; ++t) {
        const Vec3 c(center(rng), center(rng), center(rng));
        for (int k = 0; k < 3; ++k) {
            v.row(3 * t + k) = (c + Vec3(spread(rng), spread(rng), spread(rng))).transpose();
            f(t, k) = 3 * t + k;
        }
        labels[t] = std::uniform_int_distribution<int>(1, 24)(rng);
    }
    const Camera cam = camera_from_spherical(3.0, az(rng), el(rng), Vec3::Zero(), 60.0, size, size);
    const ConditionImage img = rasterize_condition(v, f, labels, cam);

    const auto frame = cam.frame();
    const Vec3 o = cam.position();
    int agree = 0;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const Vec3 d = cam.ray_direction(frame, r, c);
            Scalar best = std::numeric_limits<Scalar>::infinity();
            int label = 0;
            for (int t = 0; t < n_tri; ++t) {
                // Moller-Trumbore, both sides.
                const Vec3 a = v.row(f(t, 0)).transpose(), b = v.row(f(t, 1)).transpose(), cc = v.row(f(t, 2)).transpose();
                const Vec3 e1 = b - a, e2 = cc - a, p = d.cross(e2);
                const Scalar det = e1.dot(p);
                if (std::abs(det) < 1e-14) continue;
                const Vec3 s = o - a;
                const Scalar u = s.dot(p) / det;
                if (u < 0 || u > 1) continue;
                const Vec3 q = s.cross(e1);
                const Scalar w = d.dot(q) / det;
                if (w < 0 || u + w > 1) continue;
                const Scalar z = e2.dot(q) / det * d.dot(frame.forward);
                if (z >= 1e-3 && z < best) {
                    best = z;
                    label = labels[t];
                }
            }
            agree += img.labels(r, c) == label;
        }
    rep.checked = size * size;
    rep.agreement = Scalar(agree) / rep.checked;
    rep.pass = rep.agreement >= min_agreement;
    return rep;
}

}  // namespace vxa
