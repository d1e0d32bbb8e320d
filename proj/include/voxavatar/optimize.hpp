#pragma once

#include "voxavatar/body_model.hpp"
#include "voxavatar/guidance.hpp"
#include "voxavatar/regularize.hpp"
#include "voxavatar/renderer.hpp"
#include "voxavatar/schedule.hpp"
#include "voxavatar/voxel_field.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vxa {

// ---------------------------------------------------------------------------
// Initialization

/// Ellipsoidal blob: raw = peak * max(0, 1 - |(p - c) / r|^2) with c the body's
/// bounding-box center and r half its extent per axis. Colors mid-gray.
/// The default peak makes the activated center density 1.
VoxelField init_blob(const Bounds& bounds, const Vec3i& dims, const PosedBody& body,
                     std::optional<Scalar> peak = std::nullopt, Scalar density_shift = kDefaultDensityShift);

/// Raw value whose activation is 1 under the given shift.
inline Scalar blob_peak(Scalar density_shift = kDefaultDensityShift) { return raw_for_density(1.0, density_shift); }

/// Adds strength * exp(-d^2 / (2 s^2)) to the raw density, d = distance from
/// the cell center to the nearest body vertex, s = field voxel size. Cells
/// farther than 5 s from every vertex are left untouched.
VoxelField add_body_density_bias(VoxelField field, const PosedBody& body, Scalar strength);

// ---------------------------------------------------------------------------
// Adaptive-moment optimizer

struct AdamParams {
    Scalar lr_density = 0.1;
    Scalar lr_color = 0.05;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.99;
    Scalar epsilon = 1e-8;

    void validate() const;
};

/// One bias-corrected update of `param` in place; `step` is the 1-based update
/// count. Entries whose gradient is exactly zero only decay their moments and
/// keep their value, so cells no ray reached this step do not drift.
void adam_update(Eigen::Ref<Eigen::ArrayXd> param, const Eigen::Ref<const Eigen::ArrayXd>& grad,
                 Eigen::Ref<Eigen::ArrayXd> m, Eigen::Ref<Eigen::ArrayXd> v, Scalar lr, Scalar beta1, Scalar beta2,
                 Scalar epsilon, long step);

struct OptimState {
    VoxelField field;
    Eigen::ArrayXd m_density, v_density;
    PixelArray<Scalar> m_color, v_color;
    long updates = 0;       // accepted optimizer steps
    long rejected = 0;      // steps dropped for non-finite gradients
    int iteration = 0;

    explicit OptimState(VoxelField f = {});
};

/// Applies one update (colors are clamped to [0,1]). Returns false and leaves
/// the state untouched when the gradient contains NaN or infinity.
bool adaptive_step(OptimState& state, const FieldGradient& grad, const AdamParams& params);

/// Resamples the field and both moment grids onto a new lattice together.
void resample_state(OptimState& state, const Bounds& bounds, Scalar target_voxels);

// ---------------------------------------------------------------------------
// Training

enum class OracleKind { Silhouette, Target, External };
enum class BackgroundChoice { Auto, White, Random };

struct RunConfig {
    std::string prompt = "a 3D human avatar";
    std::string template_path;  // empty: built-in procedural body
    std::string pose_path;      // empty: default A-pose with beta = 0
    ShapeParams beta;
    PoseParams pose = a_pose();

    StagePlan plan;
    FocusTargets focus = FocusTargets::defaults();
    SmoothConfig smooth;
    AdamParams adam;

    OracleKind oracle = OracleKind::Silhouette;
    std::string oracle_endpoint;
    int oracle_timeout_ms = 30000;
    Weighting weighting = Weighting::OneMinusAlphaBar;
    Scalar cfg_scale = 7.5;
    int noise_steps = 1000;

    Scalar step_fraction = 0.5;
    BackgroundChoice background = BackgroundChoice::Auto;

    Scalar bounds_padding = 0.1;  // meters around the posed body
    Scalar bias_strength = 2.0;   // raw-density units; 0 disables the body bias

    std::uint64_t seed = 0;
    std::string output_dir;       // empty: nothing written
    int snapshot_every = 500;     // 0 disables snapshots
    int snapshot_resolution = 128;

    void validate() const;
};

struct ScheduleEvent {
    int step = 0;
    std::string kind;  // grid_double | bbox_shrink | radius_stage | focus_first | guidance_skip | rejected_step
    Scalar voxels = 0;
    Vec3i dims = Vec3i::Zero();
    Bounds bounds;
    RadiusRange radius{0, 0};
    Scalar threshold = 0;
    bool audit_ok = true;  // bbox_shrink: every above-threshold cell retained
    std::string detail;
};

struct LossRecord {
    int step = 0;
    Scalar sds_grad_rms = 0;  // RMS of w(t)(eps_hat - eps) over the image
    Scalar smooth = 0;        // L_smooth of the density-gradient field
    int t = 0;
    bool focus = false;
    bool skipped = false;
};

struct RunReport {
    int iterations = 0;
    int skipped = 0;
    long rejected = 0;
    bool degraded = false;
    std::uint64_t seed = 0;
    std::vector<ScheduleEvent> events;
    std::vector<LossRecord> history;
    std::vector<std::string> snapshots;
    Scalar final_smooth = 0;
    double seconds = 0;

    std::string to_json() const;
};

/// Fixed viewpoint with its own target image (synthetic recovery runs).
struct FixedView {
    Camera camera;
    Image target;
    /// Optional target opacity. When set, `target` is the color over black and
    /// is composited onto whatever background the run renders with.
    std::optional<DepthArray> alpha;
};

/// Extra inputs that are not part of the config file.
struct TrainOptions {
    /// Used for OracleKind::External (or any kind when set); null builds the
    /// oracle from the config.
    GuidanceOracle* oracle = nullptr;
    /// When non-empty each iteration draws one of these views and guides it
    /// toward its target with the point-mass oracle; the stage plan's camera
    /// sampling is bypassed.
    std::vector<FixedView> fixed_views;
    /// Optional starting field (otherwise blob + body bias).
    std::optional<VoxelField> initial_field;
    /// Called after every iteration with the current state.
    std::function<void(const OptimState&, const LossRecord&)> on_iteration;
    /// Print a progress line every n iterations to stderr (0 = silent).
    int progress_every = 0;
};

struct TrainResult {
    VoxelField field;
    RunReport report;
};

/// Posed body of a config (template + pose file or inline pose).
struct BodySetup {
    BodyTemplate tpl;
    PosedBody body;
};
BodySetup load_body(const RunConfig& config);

/// Initial field: bounds = padded body box, lattice from grid_plan(0), blob + bias.
VoxelField initial_field(const RunConfig& config, const PosedBody& body);

/// The coarse-stage optimization loop.
TrainResult train_coarse(const RunConfig& config, const TrainOptions& options = {});

/// n_views renders at azimuths 360 i / n_views, fixed elevation and radius,
/// over a white background.
std::vector<Image> turntable(const VoxelField& field, int n_views, int resolution, Scalar radius, Scalar elevation,
                             const Vec3& target, Scalar fov_y = 60);

}  // namespace vxa
