#include "voxavatar/guidance.hpp"

#include <cmath>
#include <numbers>

namespace vxa {

NoiseSchedule NoiseSchedule::cosine(int steps) {
    if (steps < 2) throw InvalidInput("noise schedule needs at least 2 steps");
    constexpr Scalar s = 0.008;
    auto f = [&](Scalar u) {
        const Scalar c = std::cos((u + s) / (1 + s) * std::numbers::pi / 2);
        return c * c;
    };
    std::vector<Scalar> ab(steps);
    Scalar prod = 1;
    for (int t = 0; t < steps; ++t) {
        const Scalar beta = std::min(1 - f(Scalar(t + 1) / steps) / f(Scalar(t) / steps), 0.999);
        prod *= 1 - beta;
        ab[t] = prod;
    }
    return from_alpha_bar(std::move(ab));
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<Scalar> alpha_bar) {
    if (alpha_bar.empty()) throw InvalidInput("empty noise schedule");
    for (size_t t = 0; t < alpha_bar.size(); ++t) {
        if (!(alpha_bar[t] > 0 && alpha_bar[t] <= 1)) throw InvalidInput("alpha_bar values must lie in (0, 1]");
        if (t > 0 && !(alpha_bar[t] < alpha_bar[t - 1])) throw InvalidInput("alpha_bar must be strictly decreasing");
    }
    NoiseSchedule s;
    s.alpha_bar_ = std::move(alpha_bar);
    return s;
}

Scalar NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t >= steps()) throw InvalidInput("noise level t=" + std::to_string(t) + " outside [0, T)");
    return alpha_bar_[t];
}

int NoiseSchedule::sample_t(std::mt19937_64& rng) const {
    const int lo = std::clamp(int(std::lround(t_min * steps())), 0, steps() - 1);
    const int hi = std::clamp(int(std::lround(t_max * steps())), lo, steps() - 1);
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

Scalar weight(Weighting w, const NoiseSchedule& schedule, int t) {
    switch (w) {
        case Weighting::OneMinusAlphaBar: return 1 - schedule.alpha_bar(t);
        case Weighting::Constant: return 1;
    }
    return 1;
}

Image add_noise(const Image& x, int t, const Image& eps, const NoiseSchedule& schedule) {
    if (!x.same_shape(eps)) throw InvalidInput("image and noise shapes differ");
    const Scalar ab = schedule.alpha_bar(t);
    Image z(x.width, x.height);
    z.pixels = std::sqrt(ab) * x.pixels + std::sqrt(1 - ab) * eps.pixels;
    return z;
}

Image standard_normal_image(int width, int height, std::mt19937_64& rng) {
    std::normal_distribution<Scalar> n(0.0, 1.0);
    Image img(width, height);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = n(rng);
    return img;
}

Image sds_pixel_grad(const SdsRequest& request, GuidanceOracle& oracle, const NoiseSchedule& schedule, Weighting w) {
    if (!request.x.same_shape(request.eps)) throw InvalidInput("image and noise shapes differ");
    if (request.condition &&
        (request.condition->width != request.x.width || request.condition->height != request.x.height))
        throw InvalidInput("condition image shape differs from the rendered image");
    const Image z = add_noise(request.x, request.t, request.eps, schedule);
    const NoiseQuery query{z, request.t, schedule.alpha_bar(request.t), request.condition, request.prompt,
                           request.cfg_scale};
    const Image eps_hat = oracle.predict_noise(query);
    if (!eps_hat.same_shape(z) || eps_hat.size() != z.size())
        throw GuidanceUnavailable("oracle returned an image of the wrong shape");
    if (!eps_hat.pixels.allFinite()) throw GuidanceUnavailable("oracle returned non-finite noise");
    Image grad(z.width, z.height);
    grad.pixels = weight(w, schedule, request.t) * (eps_hat.pixels - request.eps.pixels);
    return grad;
}

Image point_mass_noise(const Image& z_t, const Image& target, Scalar alpha_bar) {
    if (!z_t.same_shape(target)) throw InvalidInput("target image shape differs from z_t");
    if (!(alpha_bar < 1)) throw InvalidInput("point-mass oracle undefined at alpha_bar = 1");
    Image eps(z_t.width, z_t.height);
    eps.pixels = (z_t.pixels - std::sqrt(alpha_bar) * target.pixels) / std::sqrt(1 - alpha_bar);
    return eps;
}

Image TargetImageOracle::predict_noise(const NoiseQuery& q) { return point_mass_noise(q.z_t, target_, q.alpha_bar); }

Image SilhouetteOracle::predict_noise(const NoiseQuery& q) {
    if (!q.condition) throw InvalidInput("silhouette oracle requires a condition image");
    return point_mass_noise(q.z_t, palette_target(*q.condition), q.alpha_bar);
}

std::unique_ptr<GuidanceOracle> builtin_target_oracle(Image target) {
    return std::make_unique<TargetImageOracle>(std::move(target));
}

std::unique_ptr<GuidanceOracle> builtin_silhouette_oracle() { return std::make_unique<SilhouetteOracle>(); }

}  // namespace vxa
