#pragma once

#include "voxavatar/core.hpp"
#include "voxavatar/raster.hpp"

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace vxa {

/// Discrete diffusion schedule: alpha_bar[t] for t in [0, T), strictly
/// decreasing, all in (0, 1].
class NoiseSchedule {
public:
    /// Cosine schedule (offset s = 0.008) with per-step betas clipped to 0.999.
    static NoiseSchedule cosine(int steps = 1000);
    /// Explicit schedule; throws InvalidInput when the invariants fail.
    static NoiseSchedule from_alpha_bar(std::vector<Scalar> alpha_bar);

    int steps() const { return int(alpha_bar_.size()); }
    Scalar alpha_bar(int t) const;
    const std::vector<Scalar>& values() const { return alpha_bar_; }

    Scalar t_min = 0.02;  // sampling range as fractions of T
    Scalar t_max = 0.98;

    /// Uniform integer t in [round(t_min T), round(t_max T)] clamped to [0, T).
    int sample_t(std::mt19937_64& rng) const;

private:
    std::vector<Scalar> alpha_bar_;
};

enum class Weighting {
    OneMinusAlphaBar,  // w(t) = 1 - alpha_bar_t
    Constant,          // w(t) = 1
};

Scalar weight(Weighting w, const NoiseSchedule& schedule, int t);

/// Everything an oracle sees for one prediction.
struct NoiseQuery {
    const Image& z_t;
    int t;
    Scalar alpha_bar;
    const ConditionImage* condition;  // may be null
    const std::string& prompt;
    Scalar cfg_scale = 7.5;
};

/// Noise-prediction model epsilon_phi(z_t; y, t, c).
class GuidanceOracle {
public:
    virtual ~GuidanceOracle() = default;
    /// Predicted noise with the shape of query.z_t. May throw
    /// GuidanceUnavailable (external oracles) or InvalidInput.
    virtual Image predict_noise(const NoiseQuery& query) = 0;
};

/// z_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps.
Image add_noise(const Image& x, int t, const Image& eps, const NoiseSchedule& schedule);

/// Image of independent standard normal draws.
Image standard_normal_image(int width, int height, std::mt19937_64& rng);

struct SdsRequest {
    const Image& x;
    int t;
    const Image& eps;
    const ConditionImage* condition = nullptr;
    std::string prompt;
    Scalar cfg_scale = 7.5;
};

/// Pixel-space SDS factor w(t) (eps_hat - eps). The oracle output is treated
/// as a constant. Oracle failures surface as GuidanceUnavailable.
Image sds_pixel_grad(const SdsRequest& request, GuidanceOracle& oracle, const NoiseSchedule& schedule, Weighting w);

/// Exact noise predictor for a point mass at `target`:
/// eps_hat = (z_t - sqrt(abar) target) / sqrt(1 - abar).
class TargetImageOracle final : public GuidanceOracle {
public:
    explicit TargetImageOracle(Image target) : target_(std::move(target)) {}
    Image predict_noise(const NoiseQuery& query) override;
    const Image& target() const { return target_; }

private:
    Image target_;
};

/// Same math as TargetImageOracle with the target taken from the query's
/// condition image (palette colors over white).
class SilhouetteOracle final : public GuidanceOracle {
public:
    Image predict_noise(const NoiseQuery& query) override;
};

/// Shared closed form used by the built-in oracles.
Image point_mass_noise(const Image& z_t, const Image& target, Scalar alpha_bar);

std::unique_ptr<GuidanceOracle> builtin_target_oracle(Image target);
std::unique_ptr<GuidanceOracle> builtin_silhouette_oracle();

}  // namespace vxa
