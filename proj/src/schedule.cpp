#include "voxavatar/schedule.hpp"

#include "voxavatar/body_model.hpp"

#include <algorithm>
#include <cmath>

namespace vxa {

namespace {

void check_increasing(const std::vector<int>& steps, const char* name) {
    for (size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] < 0) throw ConfigError(std::string(name) + " must be non-negative");
        if (i > 0 && steps[i] <= steps[i - 1]) throw ConfigError(std::string(name) + " must be strictly increasing");
    }
}

int count_reached(const std::vector<int>& steps, int step) {
    return int(std::upper_bound(steps.begin(), steps.end(), step) - steps.begin());
}

}  // namespace

void StagePlan::validate() const {
    check_increasing(grid_double_steps, "grid_double_steps");
    check_increasing(radius_stage_steps, "radius_stage_steps");
    if (!(bbox_threshold > 0)) throw ConfigError("bbox_threshold must be positive");
    if (radius_stages.empty()) throw ConfigError("radius_stages must not be empty");
    for (size_t i = 0; i < radius_stages.size(); ++i) {
        const auto [lo, hi] = radius_stages[i];
        if (!(lo > 0 && lo < hi)) throw ConfigError("radius stage needs 0 < r_min < r_max");
        if (i > 0 && (lo > radius_stages[i - 1].first || hi > radius_stages[i - 1].second))
            throw ConfigError("radius stages must be non-increasing");
    }
    if (radius_mode == RadiusMode::Stages && radius_stages.size() != radius_stage_steps.size() + 1)
        throw ConfigError("radius_stages needs exactly one more entry than radius_stage_steps");
    if (!(radius_decay >= 0 && radius_decay < 1)) throw ConfigError("radius_decay must lie in [0, 1)");
    if (!(focus_probability >= 0 && focus_probability <= 1)) throw ConfigError("focus_probability must lie in [0, 1]");
    if (!(final_voxels >= 8)) throw ConfigError("final_voxels must be at least 8");
    if (final_voxels / std::ldexp(1.0, int(grid_double_steps.size())) < 8)
        throw ConfigError("too many doublings for final_voxels");
    if (coarse_iters < 0) throw ConfigError("coarse_iters must be non-negative");
    if (!(elevation_min <= elevation_max && elevation_min > -90 && elevation_max < 90))
        throw ConfigError("elevation band must lie inside (-90, 90)");
    if (!(fov_y > 0 && fov_y < 180)) throw ConfigError("fov_y must lie in (0, 180)");
    if (render_resolution < 1 || focus_resolution < 1) throw ConfigError("render resolutions must be positive");
}

void StagePlan::disable_progressive() {
    grid_double_steps.clear();
    bbox_shrink_step = -1;
    radius_stages.resize(1);
    radius_stage_steps.clear();
    radius_mode = RadiusMode::Stages;
    focus_probability = 0;
}

StagePlan StagePlan::scaled(Scalar factor) const {
    StagePlan p = *this;
    auto scale = [&](int s) { return int(std::lround(s * factor)); };
    for (int& s : p.grid_double_steps) s = scale(s);
    for (int& s : p.radius_stage_steps) s = scale(s);
    if (p.bbox_shrink_step >= 0) p.bbox_shrink_step = scale(p.bbox_shrink_step);
    p.focus_start_step = scale(p.focus_start_step);
    p.coarse_iters = scale(p.coarse_iters);
    return p;
}

Scalar grid_plan(int step, const StagePlan& plan) {
    const int pending = int(plan.grid_double_steps.size()) - count_reached(plan.grid_double_steps, step);
    return plan.final_voxels / std::ldexp(1.0, pending);
}

int radius_stage(int step, const StagePlan& plan) { return count_reached(plan.radius_stage_steps, step); }

RadiusRange radius_range(int step, const StagePlan& plan) {
    const int stage = radius_stage(step, plan);
    if (plan.radius_mode == RadiusMode::Decay) {
        const Scalar f = std::pow(1 - plan.radius_decay, stage);
        return {plan.radius_stages.front().first * f, plan.radius_stages.front().second * f};
    }
    return plan.radius_stages.at(std::min<size_t>(stage, plan.radius_stages.size() - 1));
}

Camera sample_camera(int step, const StagePlan& plan, const Vec3& target, std::mt19937_64& rng) {
    std::uniform_real_distribution<Scalar> u01(0.0, 1.0);
    const auto [r_min, r_max] = radius_range(step, plan);
    const Scalar az = 360.0 * u01(rng);
    const Scalar el = plan.elevation_min + (plan.elevation_max - plan.elevation_min) * u01(rng);
    const Scalar r = r_min + (r_max - r_min) * u01(rng);
    return camera_from_spherical(r, az, el, target, plan.fov_y, plan.render_resolution, plan.render_resolution);
}

FocusTargets FocusTargets::defaults() {
    return {{
        {"head", {kHead}, 0.35, 0.5},
        {"left_hand", {kLeftWrist, kLeftHand}, 0.25, 0.4},
        {"right_hand", {kRightWrist, kRightHand}, 0.25, 0.4},
        {"torso", {kSpine1, kSpine2, kSpine3}, 0.5, 0.8},
        {"left_foot", {kLeftAnkle, kLeftFoot}, 0.25, 0.4},
        {"right_foot", {kRightAnkle, kRightFoot}, 0.25, 0.4},
    }};
}

void FocusTargets::validate(int joint_count) const {
    for (const auto& r : regions) {
        if (r.joints.empty()) throw ConfigError("focus region '" + r.name + "' has no joints");
        for (int j : r.joints)
            if (j < 0 || j >= joint_count)
                throw ConfigError("focus region '" + r.name + "' references joint " + std::to_string(j));
        if (!(r.min_distance > 0 && r.min_distance <= r.max_distance))
            throw ConfigError("focus region '" + r.name + "' needs 0 < min_distance <= max_distance");
    }
}

std::optional<FocusView> focus_camera(int step, const StagePlan& plan, const FocusTargets& targets,
                                      const Points& joints, std::mt19937_64& rng) {
    if (step < plan.focus_start_step || targets.regions.empty() || plan.focus_probability <= 0) return std::nullopt;
    std::uniform_real_distribution<Scalar> u01(0.0, 1.0);
    if (!(u01(rng) < plan.focus_probability)) return std::nullopt;
    const int region = std::uniform_int_distribution<int>(0, int(targets.regions.size()) - 1)(rng);
    const FocusRegion& fr = targets.regions[region];
    Vec3 target = Vec3::Zero();
    for (int j : fr.joints) target += joints.row(j).transpose();
    target /= Scalar(fr.joints.size());
    const Scalar az = 360.0 * u01(rng);
    const Scalar el = plan.elevation_min + (plan.elevation_max - plan.elevation_min) * u01(rng);
    const Scalar r = fr.min_distance + (fr.max_distance - fr.min_distance) * u01(rng);
    return FocusView{camera_from_spherical(r, az, el, target, plan.fov_y, plan.focus_resolution, plan.focus_resolution),
                     region};
}

}  // namespace vxa
