#pragma once

#include "voxavatar/camera.hpp"
#include "voxavatar/core.hpp"

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace vxa {

enum class RadiusMode {
    Stages,  // explicit (r_min, r_max) per stage
    Decay,   // first stage scaled by (1 - radius_decay)^stage
};

using RadiusRange = std::pair<Scalar, Scalar>;

/// Progressive-generation plan. Defaults are the full-scale coarse-stage values.
struct StagePlan {
    std::vector<int> grid_double_steps{500, 1500, 2000};
    int bbox_shrink_step = 3000;  // negative disables the shrink
    Scalar bbox_threshold = 0.1;  // activated density
    std::vector<RadiusRange> radius_stages{{1.4, 2.1}, {1.0, 1.5}, {0.8, 1.2}};
    std::vector<int> radius_stage_steps{1000, 2000};
    RadiusMode radius_mode = RadiusMode::Stages;
    Scalar radius_decay = 0.2;
    int focus_start_step = 1000;
    Scalar focus_probability = 0.3;
    Scalar final_voxels = 160.0 * 160.0 * 160.0;
    int coarse_iters = 5000;

    Scalar elevation_min = -10;
    Scalar elevation_max = 60;
    Scalar fov_y = 60;
    int render_resolution = 64;
    int focus_resolution = 512;

    /// Throws ConfigError on the first violated invariant.
    void validate() const;

    /// Every progressive strategy off: constant resolution, no shrink, a single
    /// radius stage (the first), no focus mode.
    void disable_progressive();

    /// Multiplies every checkpoint step (and coarse_iters) by `factor`, rounding.
    StagePlan scaled(Scalar factor) const;
};

/// Target voxel count at `step`: final_voxels / 2^(doublings still pending).
Scalar grid_plan(int step, const StagePlan& plan);

/// Number of radius stage transitions reached at `step`.
int radius_stage(int step, const StagePlan& plan);
RadiusRange radius_range(int step, const StagePlan& plan);

/// Azimuth uniform in [0, 360), elevation uniform in the plan's band, radius
/// uniform in radius_range(step), looking at `target`.
Camera sample_camera(int step, const StagePlan& plan, const Vec3& target, std::mt19937_64& rng);

struct FocusRegion {
    std::string name;
    std::vector<int> joints;
    Scalar min_distance = 0.3;
    Scalar max_distance = 0.5;
};

struct FocusTargets {
    std::vector<FocusRegion> regions;

    /// head, left_hand, right_hand, torso, left_foot, right_foot.
    static FocusTargets defaults();
    /// Throws ConfigError for empty regions, bad joint indices or ranges.
    void validate(int joint_count) const;
};

struct FocusView {
    Camera camera;
    int region = -1;
};

/// Close-up camera on a body region with probability focus_probability once
/// step >= focus_start_step; std::nullopt otherwise. Consumes one uniform draw
/// per eligible step whether or not focus is chosen.
std::optional<FocusView> focus_camera(int step, const StagePlan& plan, const FocusTargets& targets,
                                      const Points& joints, std::mt19937_64& rng);

}  // namespace vxa
