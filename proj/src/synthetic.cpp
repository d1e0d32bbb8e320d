#include "voxavatar/synthetic.hpp"

#include "voxavatar/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace vxa {

std::vector<int> face_components(const Faces& faces, int vertex_count) {
    std::vector<int> parent(vertex_count);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    for (int f = 0; f < faces.rows(); ++f)
        for (int c = 1; c < 3; ++c) {
            const int a = find(faces(f, 0)), b = find(faces(f, c));
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
    std::vector<int> id(vertex_count, -1), out(faces.rows());
    int next = 0;
    for (int f = 0; f < faces.rows(); ++f) {
        const int root = find(faces(f, 0));
        if (id[root] < 0) id[root] = next++;
        out[f] = id[root];
    }
    return out;
}

namespace {

// Edge ownership for shared edges: exactly one of two triangles on opposite
// sides of an edge claims points lying on it.
bool owns_edge(Scalar dx, Scalar dy) { return dy < 0 || (dy == 0 && dx > 0); }

}  // namespace

std::vector<std::uint8_t> voxelize_mesh(const Points& vertices, const Faces& faces, const VoxelField& layout) {
    const int nx = layout.dims.x(), ny = layout.dims.y(), nz = layout.dims.z();
    const Vec3 cs = layout.cell_size();
    const Vec3 lo = layout.bounds.min_corner;
    std::vector<std::uint8_t> inside(std::size_t(layout.cell_count()), 0);
    const std::vector<int> comp = face_components(faces, int(vertices.rows()));
    const int n_comp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;

    std::vector<std::vector<int>> by_comp(n_comp);
    for (int f = 0; f < faces.rows(); ++f) by_comp[comp[f]].push_back(f);

    std::vector<std::vector<Scalar>> columns(std::size_t(nx) * ny);
    for (const auto& tris : by_comp) {
        for (auto& c : columns) c.clear();
        for (int f : tris) {
            Vec3 a = vertices.row(faces(f, 0)).transpose();
            Vec3 b = vertices.row(faces(f, 1)).transpose();
            Vec3 c = vertices.row(faces(f, 2)).transpose();
            Scalar area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
            if (area == 0) continue;
            if (area < 0) {
                std::swap(b, c);
                area = -area;
            }
            const Scalar xmin = std::min({a.x(), b.x(), c.x()}), xmax = std::max({a.x(), b.x(), c.x()});
            const Scalar ymin = std::min({a.y(), b.y(), c.y()}), ymax = std::max({a.y(), b.y(), c.y()});
            const int i0 = std::max(0, int(std::ceil((xmin - lo.x()) / cs.x() - 0.5)));
            const int i1 = std::min(nx - 1, int(std::floor((xmax - lo.x()) / cs.x() - 0.5)));
            const int j0 = std::max(0, int(std::ceil((ymin - lo.y()) / cs.y() - 0.5)));
            const int j1 = std::min(ny - 1, int(std::floor((ymax - lo.y()) / cs.y() - 0.5)));
            const Vec3* v[3] = {&a, &b, &c};
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) {
                    const Scalar px = lo.x() + (i + 0.5) * cs.x(), py = lo.y() + (j + 0.5) * cs.y();
                    Scalar w[3];
                    bool in = true;
                    for (int e = 0; e < 3 && in; ++e) {
                        const Vec3* p0 = v[(e + 1) % 3];
                        const Vec3* p1 = v[(e + 2) % 3];
                        // Evaluate from a canonical endpoint so neighbours get exactly opposite values.
                        const bool flip = std::make_pair(p1->x(), p1->y()) < std::make_pair(p0->x(), p0->y());
                        if (flip) std::swap(p0, p1);
                        const Scalar dx = p1->x() - p0->x(), dy = p1->y() - p0->y();
                        const Scalar raw = dx * (py - p0->y()) - dy * (px - p0->x());
                        w[e] = flip ? -raw : raw;
                        in = w[e] > 0 || (w[e] == 0 && owns_edge(flip ? -dx : dx, flip ? -dy : dy));
                    }
                    if (!in) continue;
                    const Scalar z = (w[0] * a.z() + w[1] * b.z() + w[2] * c.z()) / area;
                    columns[std::size_t(j) * nx + i].push_back(z);
                }
        }
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                auto& zs = columns[std::size_t(j) * nx + i];
                if (zs.size() < 2) continue;
                std::sort(zs.begin(), zs.end());
                for (std::size_t s = 0; s + 1 < zs.size(); s += 2) {
                    const int k0 = std::max(0, int(std::ceil((zs[s] - lo.z()) / cs.z() - 0.5)));
                    const int k1 = std::min(nz - 1, int(std::floor((zs[s + 1] - lo.z()) / cs.z() - 0.5)));
                    for (int k = k0; k <= k1; ++k) inside[std::size_t(layout.index(i, j, k))] = 1;
                }
            }
    }
    return inside;
}

VoxelField ground_truth_field(const Points& vertices, const Faces& faces, const std::vector<int>& face_labels,
                              const Bounds& bounds, Scalar target_voxels, Scalar sigma_inside) {
    if (!(sigma_inside > 0)) throw InvalidInput("ground-truth density must be positive");
    if (face_labels.size() != std::size_t(faces.rows())) throw InvalidInput("one label per face required");
    VoxelField f(bounds, dims_for(bounds, target_voxels));
    const Scalar raw_in = raw_for_density(sigma_inside, f.density_shift);
    const Scalar raw_out = raw_for_density(1e-6, f.density_shift);
    const auto occ = voxelize_mesh(vertices, faces, f);

    std::vector<int> vertex_label(vertices.rows(), 0);
    for (int fi = faces.rows() - 1; fi >= 0; --fi)
        for (int c = 0; c < 3; ++c) vertex_label[faces(fi, c)] = face_labels[fi];

    f.color.setZero();
    for (int k = 0; k < f.dims.z(); ++k)
        for (int j = 0; j < f.dims.y(); ++j)
            for (int i = 0; i < f.dims.x(); ++i) {
                const Eigen::Index idx = f.index(i, j, k);
                if (!occ[idx]) {
                    f.density_raw[idx] = raw_out;
                    continue;
                }
                f.density_raw[idx] = raw_in;
                const Vec3 p = f.cell_center(i, j, k);
                Eigen::Index best = 0;
                (vertices.rowwise() - p.transpose()).rowwise().squaredNorm().minCoeff(&best);
                const auto& rgb = kPalette[vertex_label[best]];
                f.color.row(idx) << rgb[0] / 255.0, rgb[1] / 255.0, rgb[2] / 255.0;
            }
    return f;
}

std::vector<Camera> fixed_views(int count, Scalar radius, const Vec3& target, int resolution, Scalar fov_y,
                                Scalar el_min, Scalar el_max) {
    if (count < 1) throw InvalidInput("need at least one view");
    const Scalar golden = 180.0 * (3.0 - std::sqrt(5.0));
    std::vector<Camera> views;
    views.reserve(count);
    for (int i = 0; i < count; ++i) {
        const Scalar el = count == 1 ? 0.5 * (el_min + el_max) : el_min + (el_max - el_min) * i / Scalar(count - 1);
        views.push_back(camera_from_spherical(radius, std::fmod(golden * i, 360.0), el, target, fov_y, resolution,
                                              resolution));
    }
    return views;
}

Scalar occupancy_iou(const VoxelField& truth, const VoxelField& recovered, Scalar threshold) {
    std::int64_t inter = 0, uni = 0;
    for (int k = 0; k < truth.dims.z(); ++k)
        for (int j = 0; j < truth.dims.y(); ++j)
            for (int i = 0; i < truth.dims.x(); ++i) {
                const bool a = truth.sigma(truth.index(i, j, k)) > threshold;
                const FieldSample s = trilinear(recovered, truth.cell_center(i, j, k));
                const bool b = activate_density(s.density_raw, recovered.density_shift) > threshold;
                inter += a && b;
                uni += a || b;
            }
    return uni == 0 ? 1.0 : Scalar(inter) / Scalar(uni);
}

Bounds padded_bounds(const Points& points, Scalar pad) {
    if (points.rows() == 0) throw InvalidInput("cannot bound an empty point set");
    Bounds b{points.colwise().minCoeff().transpose(), points.colwise().maxCoeff().transpose()};
    b.min_corner.array() -= pad;
    b.max_corner.array() += pad;
    b.validate();
    return b;
}

}  // namespace vxa
