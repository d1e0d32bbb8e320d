#include "voxavatar/renderer.hpp"

#include "voxavatar/parallel.hpp"

#include <random>
#include <vector>

namespace vxa {

void RenderSettings::validate() const {
    if (!(step_fraction > 0 && step_fraction <= 1)) throw InvalidInput("step_fraction must be in (0, 1]");
    if (!(near < far)) throw InvalidInput("render near must be less than far");
    if (!(early_stop_transmittance >= 0 && early_stop_transmittance < 1))
        throw InvalidInput("early_stop_transmittance must be in [0, 1)");
}

Vec3 resolve_background(const RenderSettings& s) {
    if (s.background_mode == BackgroundMode::Fixed) return s.background;
    std::mt19937_64 rng(s.background_seed);
    std::uniform_real_distribution<Scalar> u(0.0, 1.0);
    Vec3 c;
    for (int i = 0; i < 3; ++i) c[i] = u(rng);
    return c;
}

namespace {

struct Sample {
    TrilinearStencil stencil;
    Scalar t;
    Scalar raw;
    Scalar alpha;
    Vec3 color;
};

// Ray / box overlap clipped to [near, far]. False when empty.
bool clip_ray(const Bounds& b, const Vec3& o, const Vec3& d, Scalar near, Scalar far, Scalar& t0, Scalar& t1) {
    t0 = near;
    t1 = far;
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0) {
            if (o[a] < b.min_corner[a] || o[a] > b.max_corner[a]) return false;
            continue;
        }
        Scalar ta = (b.min_corner[a] - o[a]) / d[a];
        Scalar tb = (b.max_corner[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t0 < t1;
}

class RayMarcher {
public:
    RayMarcher(const VoxelField& field, const Camera& camera, const RenderSettings& settings)
        : field_(field), camera_(camera), settings_(settings) {
        settings.validate();
        field.validate();
        frame_ = camera.frame();
        origin_ = camera.position();
        step_ = settings.step_fraction * field.voxel_size();
        background_ = resolve_background(settings);
    }

    // Marches one ray, filling `samples`; returns final transmittance and the
    // accumulated foreground color.
    Scalar march(int row, int col, std::vector<Sample>& samples, Vec3& color, Vec3& dir) const {
        samples.clear();
        color.setZero();
        dir = camera_.ray_direction(frame_, row, col);
        Scalar t0, t1;
        if (!clip_ray(field_.bounds, origin_, dir, settings_.near, settings_.far, t0, t1)) return 1;
        Scalar transmittance = 1;
        for (Eigen::Index i = 0;; ++i) {
            const Scalar t = t0 + (Scalar(i) + 0.5) * step_;
            if (t >= t1) break;
            Sample s;
            s.t = t;
            if (!trilinear_stencil(field_, origin_ + t * dir, s.stencil)) continue;
            s.raw = 0;
            s.color.setZero();
            for (int c = 0; c < 8; ++c) {
                const Scalar w = s.stencil.weight[c];
                if (w == 0) continue;  // keeps -inf cells from turning into NaN
                s.raw += w * field_.density_raw[s.stencil.cell[c]];
                s.color += w * field_.color.row(s.stencil.cell[c]).matrix().transpose();
            }
            const Scalar sigma = activate_density(s.raw, field_.density_shift);
            s.alpha = -std::expm1(-sigma * step_);
            color += transmittance * s.alpha * s.color;
            transmittance *= 1 - s.alpha;
            samples.push_back(s);
            if (transmittance < settings_.early_stop_transmittance) break;
        }
        return transmittance;
    }

    Vec3 normal_at(const Vec3& p) const {
        const Scalar h = 0.5 * field_.cell_size().minCoeff();
        Vec3 g;
        for (int a = 0; a < 3; ++a) {
            Vec3 e = Vec3::Zero();
            e[a] = h;
            const Scalar fp = trilinear(field_, p + e).density_raw;
            const Scalar fm = trilinear(field_, p - e).density_raw;
            g[a] = std::isfinite(fp) && std::isfinite(fm) ? (fp - fm) / (2 * h) : 0;
        }
        const Scalar n = g.norm();
        return n < 1e-8 ? Vec3::Zero() : Vec3(-g / n);
    }

    const Vec3& background() const { return background_; }
    Scalar step() const { return step_; }
    const Vec3& origin() const { return origin_; }

private:
    const VoxelField& field_;
    const Camera& camera_;
    const RenderSettings& settings_;
    Camera::Frame frame_;
    Vec3 origin_;
    Scalar step_;
    Vec3 background_;
};

constexpr int kBands = 4;  // fixed so reductions do not depend on the worker count

}  // namespace

RenderOutput render(const VoxelField& field, const Camera& camera, const RenderSettings& settings) {
    const RayMarcher marcher(field, camera, settings);
    const int W = camera.width, H = camera.height;
    RenderOutput out;
    out.rgb = Image(W, H);
    out.alpha = DepthArray::Zero(H, W);
    out.depth = DepthArray::Zero(H, W);
    out.normal = PixelArray<Scalar>::Zero(Eigen::Index(W) * H, 3);
    const int bands = std::min(H, 16);
    parallel_chunks(bands, [&](int b) {
        std::vector<Sample> samples;
        const auto [r0, r1] = band_range(H, bands, b);
        for (int r = r0; r < r1; ++r)
            for (int c = 0; c < W; ++c) {
                Vec3 color, dir;
                const Scalar trans = marcher.march(r, c, samples, color, dir);
                const Eigen::Index px = Eigen::Index(r) * W + c;
                out.rgb.pixels.row(px) = (color + trans * marcher.background()).transpose();
                const Scalar alpha = 1 - trans;
                out.alpha(r, c) = alpha;
                Scalar td = 0, T = 1;
                for (const Sample& s : samples) {
                    td += T * s.alpha * s.t;
                    T *= 1 - s.alpha;
                }
                out.depth(r, c) = alpha > 0 ? td / std::max(alpha, 1e-6) : 0;
                if (settings.compute_normals && alpha > 1e-6)
                    out.normal.row(px) = marcher.normal_at(marcher.origin() + out.depth(r, c) * dir).transpose();
            }
    });
    return out;
}

FieldGradient render_backward(const VoxelField& field, const Camera& camera, const RenderSettings& settings,
                              const Image& pixel_grad) {
    if (pixel_grad.width != camera.width || pixel_grad.height != camera.height ||
        pixel_grad.size() != Eigen::Index(camera.width) * camera.height)
        throw InvalidInput("pixel gradient dimensions do not match the camera");
    if (!pixel_grad.pixels.allFinite()) throw InvalidInput("pixel gradient not finite");
    const RayMarcher marcher(field, camera, settings);
    const int W = camera.width, H = camera.height;
    const Scalar delta = marcher.step();
    const int bands = std::min(H, kBands);

    std::vector<FieldGradient> partial(bands);
    parallel_chunks(bands, [&](int b) {
        FieldGradient& acc = partial[b];
        acc = FieldGradient::zeros(field);
        std::vector<Sample> samples;
        const auto [r0, r1] = band_range(H, bands, b);
        for (int r = r0; r < r1; ++r)
            for (int c = 0; c < W; ++c) {
                const Vec3 g = pixel_grad.pixel(r, c).matrix().transpose();
                if (g.isZero(0)) continue;
                Vec3 fg, dir;
                const Scalar trans = marcher.march(r, c, samples, fg, dir);
                const Vec3 total = fg + trans * marcher.background();
                Vec3 prefix = Vec3::Zero();
                Scalar T = 1;
                for (const Sample& s : samples) {
                    const Vec3 contrib = T * s.alpha * s.color;
                    prefix += contrib;
                    // d total / d sigma_i = delta * (T_i (1 - a_i) c_i - (total - prefix_i))
                    const Scalar dsigma = delta * g.dot(T * (1 - s.alpha) * s.color - (total - prefix));
                    const Scalar draw = dsigma * activate_density_derivative(s.raw, field.density_shift);
                    const Vec3 dcolor = T * s.alpha * g;
                    for (int k = 0; k < 8; ++k) {
                        const Scalar w = s.stencil.weight[k];
                        if (w == 0) continue;
                        const Eigen::Index cell = s.stencil.cell[k];
                        acc.density_raw[cell] += w * draw;
                        acc.color.row(cell) += w * dcolor.transpose().array();
                    }
                    T *= 1 - s.alpha;
                }
            }
    });
    FieldGradient grad = std::move(partial[0]);
    for (int b = 1; b < bands; ++b) {
        grad.density_raw += partial[b].density_raw;
        grad.color += partial[b].color;
    }
    return grad;
}

}  // namespace vxa
