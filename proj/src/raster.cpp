#include "voxavatar/raster.hpp"

#include "voxavatar/parallel.hpp"

#include <cmath>
#include <limits>

namespace vxa {

int palette_label(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (int i = 0; i < int(kPalette.size()); ++i)
        if (kPalette[i][0] == r && kPalette[i][1] == g && kPalette[i][2] == b) return i;
    return -1;
}

namespace {

struct ScreenVertex {
    Scalar x, y, inv_z;
};

struct ScreenTriangle {
    std::array<ScreenVertex, 3> v;
    Scalar inv_area;
    std::array<bool, 3> top_left;  // edge (v[i], v[(i+1)%3])
    int row_min, row_max, col_min, col_max;
    std::uint8_t label;
};

inline Scalar edge(const ScreenVertex& a, const ScreenVertex& b, Scalar px, Scalar py) {
    return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// Clip polygon to z >= near (camera space). Returns at most 4 vertices.
int clip_near(const std::array<Vec3, 3>& in, Scalar near, std::array<Vec3, 4>& out) {
    int n = 0;
    for (int i = 0; i < 3; ++i) {
        const Vec3& a = in[i];
        const Vec3& b = in[(i + 1) % 3];
        const bool a_in = a.z() >= near, b_in = b.z() >= near;
        if (a_in) out[n++] = a;
        if (a_in != b_in) {
            const Scalar t = (near - a.z()) / (b.z() - a.z());
            out[n++] = a + t * (b - a);
        }
    }
    return n;
}

}  // namespace

ConditionImage rasterize_condition(const Points& vertices, const Faces& faces, const std::vector<int>& face_labels,
                                   const Camera& camera, Scalar near) {
    if (Eigen::Index(face_labels.size()) != faces.rows()) throw InvalidInput("face label count differs from face count");
    const Camera::Frame frame = camera.frame();
    const Vec3 pos = camera.position();
    const int W = camera.width, H = camera.height;
    const Scalar sx_scale = 0.5 * W / (camera.tan_half_fov() * camera.aspect());
    const Scalar sy_scale = 0.5 * H / camera.tan_half_fov();

    Points cam(vertices.rows(), 3);
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        const Vec3 d = vertices.row(i).transpose() - pos;
        cam.row(i) << d.dot(frame.right), d.dot(frame.up), d.dot(frame.forward);
    }

    std::vector<ScreenTriangle> tris;
    tris.reserve(faces.rows());
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const int label = face_labels[f];
        if (label < 0 || label > int(kPalette.size()) - 1) throw InvalidInput("face label outside 0..24");
        std::array<Vec3, 3> tri;
        for (int c = 0; c < 3; ++c) {
            const int vi = faces(f, c);
            if (vi < 0 || vi >= vertices.rows()) throw InvalidInput("face index out of range");
            tri[c] = cam.row(vi).transpose();
        }
        std::array<Vec3, 4> poly;
        const int n = clip_near(tri, near, poly);
        for (int k = 1; k + 1 < n; ++k) {
            ScreenTriangle st;
            const Vec3* src[3] = {&poly[0], &poly[k], &poly[k + 1]};
            for (int c = 0; c < 3; ++c) {
                const Vec3& p = *src[c];
                st.v[c] = {W * 0.5 + p.x() / p.z() * sx_scale, H * 0.5 - p.y() / p.z() * sy_scale, 1.0 / p.z()};
            }
            Scalar area = edge(st.v[0], st.v[1], st.v[2].x, st.v[2].y);
            if (!(std::abs(area) > 0) || !std::isfinite(area)) continue;
            if (area < 0) {
                std::swap(st.v[1], st.v[2]);
                area = -area;
            }
            st.inv_area = 1.0 / area;
            for (int e = 0; e < 3; ++e) {
                const auto& a = st.v[e];
                const auto& b = st.v[(e + 1) % 3];
                st.top_left[e] = (a.y == b.y && b.x > a.x) || (b.y < a.y);
            }
            Scalar xmin = std::min({st.v[0].x, st.v[1].x, st.v[2].x});
            Scalar xmax = std::max({st.v[0].x, st.v[1].x, st.v[2].x});
            Scalar ymin = std::min({st.v[0].y, st.v[1].y, st.v[2].y});
            Scalar ymax = std::max({st.v[0].y, st.v[1].y, st.v[2].y});
            // Pixel centers at (col + 0.5, row + 0.5).
            st.col_min = int(std::max(0.0, std::ceil(xmin - 0.5)));
            st.col_max = int(std::min(Scalar(W - 1), std::floor(xmax - 0.5)));
            st.row_min = int(std::max(0.0, std::ceil(ymin - 0.5)));
            st.row_max = int(std::min(Scalar(H - 1), std::floor(ymax - 0.5)));
            if (st.col_min > st.col_max || st.row_min > st.row_max) continue;
            st.label = std::uint8_t(label);
            tris.push_back(st);
        }
    }

    ConditionImage out;
    out.width = W;
    out.height = H;
    out.labels = LabelArray::Zero(H, W);
    out.depth = DepthArray::Constant(H, W, std::numeric_limits<Scalar>::infinity());

    const int bands = std::min(H, 16);
    parallel_chunks(bands, [&](int b) {
        const auto [r0, r1] = band_range(H, bands, b);
        for (const ScreenTriangle& t : tris) {
            const int ra = std::max(r0, t.row_min), rb = std::min(r1 - 1, t.row_max);
            for (int r = ra; r <= rb; ++r) {
                const Scalar py = r + 0.5;
                for (int c = t.col_min; c <= t.col_max; ++c) {
                    const Scalar px = c + 0.5;
                    Scalar e[3];
                    bool inside = true;
                    for (int k = 0; k < 3 && inside; ++k) {
                        e[k] = edge(t.v[k], t.v[(k + 1) % 3], px, py);
                        inside = e[k] > 0 || (e[k] == 0 && t.top_left[k]);
                    }
                    if (!inside) continue;
                    // e[k] is the barycentric weight of the vertex opposite edge k.
                    const Scalar inv_z =
                        (e[1] * t.v[0].inv_z + e[2] * t.v[1].inv_z + e[0] * t.v[2].inv_z) * t.inv_area;
                    const Scalar z = 1.0 / inv_z;
                    if (z < out.depth(r, c)) {
                        out.depth(r, c) = z;
                        out.labels(r, c) = t.label;
                    }
                }
            }
        }
    });

    out.rgb.resize(Eigen::Index(W) * H, 3);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const auto& col = kPalette[out.labels(r, c)];
            out.rgb.row(Eigen::Index(r) * W + c) << col[0], col[1], col[2];
        }
    return out;
}

std::array<std::int64_t, 25> label_histogram(const ConditionImage& image) {
    std::array<std::int64_t, 25> counts{};
    for (Eigen::Index i = 0; i < image.labels.size(); ++i) ++counts[image.labels.data()[i]];
    return counts;
}

LabelArray labels_from_palette(const PixelArray<std::uint8_t>& rgb, int width, int height) {
    if (rgb.rows() != Eigen::Index(width) * height) throw InvalidInput("palette image size mismatch");
    LabelArray labels(height, width);
    for (Eigen::Index i = 0; i < rgb.rows(); ++i) {
        const int l = palette_label(rgb(i, 0), rgb(i, 1), rgb(i, 2));
        if (l < 0) throw InvalidInput("color not in part palette");
        labels.data()[i] = std::uint8_t(l);
    }
    return labels;
}

Image palette_target(const ConditionImage& c) {
    Image img = Image::constant(c.width, c.height, 1, 1, 1);
    for (Eigen::Index i = 0; i < c.labels.size(); ++i) {
        const int l = c.labels.data()[i];
        if (l == 0) continue;
        for (int ch = 0; ch < 3; ++ch) img.pixels(i, ch) = kPalette[l][ch] / 255.0;
    }
    return img;
}

}  // namespace vxa
