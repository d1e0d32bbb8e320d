#include "voxavatar/optimize.hpp"

#include "voxavatar/image_io.hpp"
#include "voxavatar/raster.hpp"
#include "voxavatar/spatial.hpp"
#include "voxavatar/synthetic.hpp"
#include "voxavatar/wire.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <nlohmann/json.hpp>

namespace vxa {

// ---------------------------------------------------------------------------
// Initialization

VoxelField init_blob(const Bounds& bounds, const Vec3i& dims, const PosedBody& body, std::optional<Scalar> peak,
                     Scalar density_shift) {
    if (body.vertices.rows() == 0) throw InvalidInput("blob initialization needs a non-empty body");
    const auto [lo, hi] = point_bounds(body.vertices);
    const Vec3 radii = 0.5 * (hi - lo);
    if (!(radii.array() > 1e-9).all()) throw InvalidInput("body extent is degenerate on some axis");
    const Vec3 center = 0.5 * (lo + hi);
    const Scalar p = peak.value_or(blob_peak(density_shift));

    VoxelField f(bounds, dims, 0.0, 0.5);
    f.density_shift = density_shift;
    for (int k = 0; k < dims.z(); ++k)
        for (int j = 0; j < dims.y(); ++j)
            for (int i = 0; i < dims.x(); ++i) {
                const Vec3 q = (f.cell_center(i, j, k) - center).cwiseQuotient(radii);
                f.density_raw[f.index(i, j, k)] = p * std::max(0.0, 1.0 - q.squaredNorm());
            }
    return f;
}

VoxelField add_body_density_bias(VoxelField field, const PosedBody& body, Scalar strength) {
    if (!(strength >= 0)) throw InvalidInput("bias strength must be non-negative");
    if (strength == 0 || body.vertices.rows() == 0) return field;
    const Scalar s = field.voxel_size();
    const PointIndex index(body.vertices, 5 * s);
    for (int k = 0; k < field.dims.z(); ++k)
        for (int j = 0; j < field.dims.y(); ++j)
            for (int i = 0; i < field.dims.x(); ++i) {
                const auto hit = index.nearest(field.cell_center(i, j, k), 5 * s);
                if (!hit) continue;
                field.density_raw[field.index(i, j, k)] +=
                    strength * std::exp(-hit->distance * hit->distance / (2 * s * s));
            }
    return field;
}

// ---------------------------------------------------------------------------
// Optimizer

void AdamParams::validate() const {
    if (!(lr_density >= 0 && lr_color >= 0)) throw ConfigError("learning rates must be non-negative");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("moment decay rates must lie in [0, 1)");
    if (!(epsilon > 0)) throw ConfigError("optimizer epsilon must be positive");
}

void adam_update(Eigen::Ref<Eigen::ArrayXd> param, const Eigen::Ref<const Eigen::ArrayXd>& grad,
                 Eigen::Ref<Eigen::ArrayXd> m, Eigen::Ref<Eigen::ArrayXd> v, Scalar lr, Scalar beta1, Scalar beta2,
                 Scalar epsilon, long step) {
    const Scalar c1 = 1 - std::pow(beta1, Scalar(step));
    const Scalar c2 = 1 - std::pow(beta2, Scalar(step));
    for (Eigen::Index i = 0; i < param.size(); ++i) {
        const Scalar g = grad[i];
        m[i] = beta1 * m[i] + (1 - beta1) * g;
        v[i] = beta2 * v[i] + (1 - beta2) * g * g;
        // Entries without gradient this step (unseen cells) keep their value.
        if (g == 0) continue;
        param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon);
    }
}

OptimState::OptimState(VoxelField f) : field(std::move(f)) {
    const Eigen::Index n = field.cell_count();
    m_density = v_density = Eigen::ArrayXd::Zero(n);
    m_color = v_color = PixelArray<Scalar>::Zero(n, 3);
}

bool adaptive_step(OptimState& state, const FieldGradient& grad, const AdamParams& p) {
    const Eigen::Index n = state.field.cell_count();
    if (grad.density_raw.size() != n || grad.color.rows() != n)
        throw InvalidInput("gradient dims do not match the field");
    if (!grad.density_raw.allFinite() || !grad.color.allFinite()) {
        ++state.rejected;
        return false;
    }
    const long step = ++state.updates;
    adam_update(state.field.density_raw, grad.density_raw, state.m_density, state.v_density, p.lr_density, p.beta1,
                p.beta2, p.epsilon, step);
    Eigen::Map<Eigen::ArrayXd> color(state.field.color.data(), 3 * n);
    adam_update(color, Eigen::Map<const Eigen::ArrayXd>(grad.color.data(), 3 * n),
                Eigen::Map<Eigen::ArrayXd>(state.m_color.data(), 3 * n),
                Eigen::Map<Eigen::ArrayXd>(state.v_color.data(), 3 * n), p.lr_color, p.beta1, p.beta2, p.epsilon, step);
    state.field.color = state.field.color.min(1.0).max(0.0);
    return true;
}

void resample_state(OptimState& state, const Bounds& bounds, Scalar target_voxels) {
    VoxelField next = resample(state.field, bounds, target_voxels);
    state.m_density = resample_array(state.field, state.m_density, next);
    state.v_density = resample_array(state.field, state.v_density, next);
    PixelArray<Scalar> mc(next.cell_count(), 3), vc(next.cell_count(), 3);
    for (int c = 0; c < 3; ++c) {
        mc.col(c) = resample_array(state.field, state.m_color.col(c), next);
        vc.col(c) = resample_array(state.field, state.v_color.col(c), next);
    }
    state.m_color = std::move(mc);
    state.v_color = std::move(vc);
    state.field = std::move(next);
}

// ---------------------------------------------------------------------------
// Training

void RunConfig::validate() const {
    plan.validate();
    smooth.validate();
    adam.validate();
    if (beta.beta.size() != kShapeDims || !beta.beta.allFinite()) throw ConfigError("beta must have 10 finite entries");
    if (!pose.xi.allFinite()) throw ConfigError("pose must be finite");
    if (oracle == OracleKind::External && oracle_endpoint.empty())
        throw ConfigError("external oracle needs oracle.endpoint");
    if (oracle_timeout_ms <= 0) throw ConfigError("oracle timeout must be positive");
    if (noise_steps < 2) throw ConfigError("noise schedule needs at least 2 steps");
    if (!(step_fraction > 0 && step_fraction <= 1)) throw ConfigError("step_fraction must lie in (0, 1]");
    if (!(bounds_padding >= 0)) throw ConfigError("bounds padding must be non-negative");
    if (!(bias_strength >= 0)) throw ConfigError("bias strength must be non-negative");
    if (snapshot_every < 0 || snapshot_resolution < 1) throw ConfigError("invalid snapshot settings");
}

BodySetup load_body(const RunConfig& config) {
    BodySetup s;
    s.tpl = config.template_path.empty() ? make_default_template() : load_template_json(config.template_path);
    s.tpl.validate();
    ShapeParams beta = config.beta;
    PoseParams pose = config.pose;
    if (!config.pose_path.empty()) {
        const PoseFile pf = load_pose_json(config.pose_path, s.tpl.joint_count());
        beta = pf.beta;
        pose = pf.pose;
    }
    if (pose.xi.rows() != s.tpl.joint_count())
        throw ConfigError("pose has " + std::to_string(pose.xi.rows()) + " joints, template has " +
                          std::to_string(s.tpl.joint_count()));
    s.body = pose_body(s.tpl, beta, pose);
    return s;
}

VoxelField initial_field(const RunConfig& config, const PosedBody& body) {
    const Bounds bounds = padded_bounds(body.vertices, config.bounds_padding);
    VoxelField f = init_blob(bounds, dims_for(bounds, grid_plan(0, config.plan)), body);
    return add_body_density_bias(std::move(f), body, config.bias_strength);
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(id)};
    return std::mt19937_64(seq);
}

ScheduleEvent event(int step, const char* kind) {
    ScheduleEvent e;
    e.step = step;
    e.kind = kind;
    return e;
}

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Scalar turntable_radius(const Bounds& b, Scalar fov_y) {
    const Scalar ext = b.extent().maxCoeff();
    return 0.6 * ext / std::tan(fov_y * std::numbers::pi / 360.0) + 0.5 * ext;
}

}  // namespace

std::string RunReport::to_json() const {
    nlohmann::json j;
    j["iterations"] = iterations;
    j["skipped"] = skipped;
    j["rejected"] = rejected;
    j["degraded"] = degraded;
    j["seed"] = seed;
    j["seconds"] = seconds;
    j["final_smooth"] = final_smooth;
    j["snapshots"] = snapshots;
    auto& ev = j["events"] = nlohmann::json::array();
    for (const auto& e : events) {
        nlohmann::json x{{"step", e.step}, {"kind", e.kind}};
        if (e.kind == "grid_double" || e.kind == "bbox_shrink") {
            x["voxels"] = e.voxels;
            x["dims"] = {e.dims.x(), e.dims.y(), e.dims.z()};
            x["bounds_min"] = vec_json(e.bounds.min_corner);
            x["bounds_max"] = vec_json(e.bounds.max_corner);
        }
        if (e.kind == "bbox_shrink") {
            x["threshold"] = e.threshold;
            x["audit_ok"] = e.audit_ok;
        }
        if (e.kind == "radius_stage" || e.kind == "focus_first") x["radius"] = {e.radius.first, e.radius.second};
        if (!e.detail.empty()) x["detail"] = e.detail;
        ev.push_back(std::move(x));
    }
    auto& h = j["history"] = nlohmann::json::array();
    for (const auto& r : history)
        h.push_back({{"step", r.step}, {"t", r.t}, {"sds_grad_rms", r.sds_grad_rms}, {"smooth", r.smooth},
                     {"focus", r.focus}, {"skipped", r.skipped}});
    return j.dump(1);
}

std::vector<Image> turntable(const VoxelField& field, int n_views, int resolution, Scalar radius, Scalar elevation,
                             const Vec3& target, Scalar fov_y) {
    if (n_views < 1 || resolution < 1) throw InvalidInput("turntable needs at least one view and pixel");
    RenderSettings rs;
    rs.compute_normals = false;
    std::vector<Image> frames;
    for (int i = 0; i < n_views; ++i) {
        const Camera cam =
            camera_from_spherical(radius, 360.0 * i / n_views, elevation, target, fov_y, resolution, resolution);
        frames.push_back(render(field, cam, rs).rgb);
    }
    return frames;
}

TrainResult train_coarse(const RunConfig& config, const TrainOptions& options) {
    const auto t_start = std::chrono::steady_clock::now();
    config.validate();
    const BodySetup setup = load_body(config);
    config.focus.validate(setup.tpl.joint_count());
    const StagePlan& plan = config.plan;
    const NoiseSchedule schedule = NoiseSchedule::cosine(config.noise_steps);

    // Oracles.
    std::unique_ptr<GuidanceOracle> owned;
    std::vector<std::unique_ptr<GuidanceOracle>> view_oracles;
    GuidanceOracle* oracle = options.oracle;
    if (!options.fixed_views.empty()) {
        for (const auto& v : options.fixed_views) {
            if (v.target.width != v.camera.width || v.target.height != v.camera.height)
                throw InvalidInput("fixed view target does not match its camera resolution");
            if (v.alpha && (v.alpha->rows() != v.camera.height || v.alpha->cols() != v.camera.width))
                throw InvalidInput("fixed view alpha does not match its camera resolution");
            view_oracles.push_back(builtin_target_oracle(v.target));
        }
    } else if (!oracle) {
        switch (config.oracle) {
            case OracleKind::Silhouette: owned = builtin_silhouette_oracle(); break;
            case OracleKind::Target:
                throw ConfigError("the target oracle needs fixed views with target images");
            case OracleKind::External:
                owned = external_oracle(config.oracle_endpoint, std::chrono::milliseconds(config.oracle_timeout_ms));
                break;
        }
        oracle = owned.get();
    }
    const bool builtin_guidance = !options.fixed_views.empty() || config.oracle != OracleKind::External;

    RenderSettings rs;
    rs.step_fraction = config.step_fraction;
    rs.compute_normals = false;
    const bool random_bg = config.background == BackgroundChoice::Random ||
                           (config.background == BackgroundChoice::Auto && !builtin_guidance);
    rs.background_mode = random_bg ? BackgroundMode::RandomPerImage : BackgroundMode::Fixed;

    OptimState state(options.initial_field ? *options.initial_field : initial_field(config, setup.body));
    state.field.validate();

    auto cam_rng = stream(config.seed, 1);
    auto noise_rng = stream(config.seed, 2);
    auto bg_rng = stream(config.seed, 3);

    const auto [body_lo, body_hi] = point_bounds(setup.body.vertices);
    const Vec3 body_center = 0.5 * (body_lo + body_hi);

    if (!config.output_dir.empty()) std::filesystem::create_directories(config.output_dir);

    RunReport report;
    report.seed = config.seed;
    int prev_stage = -1;
    bool focus_seen = false;

    auto snapshot = [&](int step) {
        if (config.output_dir.empty()) return;
        const std::filesystem::path dir = std::filesystem::path(config.output_dir) / "snapshots";
        std::filesystem::create_directories(dir);
        char stem[32];
        std::snprintf(stem, sizeof stem, "step_%05d", step);
        const std::string base = (dir / stem).string();
        save_field(state.field, base + ".vxaf");
        const auto frames = turntable(state.field, 4, config.snapshot_resolution,
                                      turntable_radius(state.field.bounds, plan.fov_y), 15.0,
                                      state.field.bounds.center(), plan.fov_y);
        for (int v = 0; v < 4; ++v) write_png(base + "_view" + std::to_string(v) + ".png", frames[v]);
        report.snapshots.push_back(base + ".vxaf");
    };

    for (int step = 0; step < plan.coarse_iters; ++step) {
        state.iteration = step;

        // (1) voxel doubling
        if (std::binary_search(plan.grid_double_steps.begin(), plan.grid_double_steps.end(), step)) {
            resample_state(state, state.field.bounds, grid_plan(step, plan));
            ScheduleEvent e = event(step, "grid_double");
            e.voxels = grid_plan(step, plan);
            e.dims = state.field.dims;
            e.bounds = state.field.bounds;
            report.events.push_back(e);
        }
        // (2) bbox shrink, audited against an exhaustive scan of the old grid
        if (step == plan.bbox_shrink_step) {
            const VoxelField old = state.field;
            const Bounds nb = shrink_bbox(old, plan.bbox_threshold);
            resample_state(state, nb, grid_plan(step, plan));
            ScheduleEvent e = event(step, "bbox_shrink");
            e.voxels = grid_plan(step, plan);
            e.dims = state.field.dims;
            e.bounds = nb;
            e.threshold = plan.bbox_threshold;
            for (int k = 0; k < old.dims.z() && e.audit_ok; ++k)
                for (int j = 0; j < old.dims.y() && e.audit_ok; ++j)
                    for (int i = 0; i < old.dims.x() && e.audit_ok; ++i)
                        if (old.sigma(old.index(i, j, k)) > plan.bbox_threshold && !nb.contains(old.cell_center(i, j, k)))
                            e.audit_ok = false;
            report.events.push_back(e);
        }
        const int stage = radius_stage(step, plan);
        if (stage != prev_stage && options.fixed_views.empty()) {
            ScheduleEvent e = event(step, "radius_stage");
            e.radius = radius_range(step, plan);
            report.events.push_back(e);
        }
        prev_stage = stage;

        // (3) camera
        Camera camera;
        GuidanceOracle* step_oracle = oracle;
        const FixedView* current_view = nullptr;
        LossRecord rec;
        rec.step = step;
        if (!options.fixed_views.empty()) {
            const int v = std::uniform_int_distribution<int>(0, int(options.fixed_views.size()) - 1)(cam_rng);
            current_view = &options.fixed_views[v];
            camera = current_view->camera;
            step_oracle = view_oracles[v].get();
        } else if (auto fv = focus_camera(step, plan, config.focus, setup.body.joints, cam_rng)) {
            camera = fv->camera;
            rec.focus = true;
            if (!focus_seen) {
                ScheduleEvent e = event(step, "focus_first");
                e.radius = {fv->camera.radius, fv->camera.radius};
                e.detail = config.focus.regions[fv->region].name;
                report.events.push_back(e);
                focus_seen = true;
            }
        } else {
            camera = sample_camera(step, plan, body_center, cam_rng);
        }

        // (4) render x = g(theta, P) and condition c = h(body, P) from the same camera
        const Camera condition_camera = camera;
        const ConditionImage condition =
            rasterize_condition(setup.body.vertices, setup.tpl.faces, setup.tpl.face_labels, condition_camera);
        rs.background_seed = bg_rng();
        if (!(condition_camera == camera)) throw std::logic_error("render and condition cameras diverged");
        const RenderOutput out = render(state.field, camera, rs);
        std::unique_ptr<GuidanceOracle> composited;
        if (!options.fixed_views.empty() && current_view->alpha) {
            Image target = current_view->target;
            const Vec3 bg = resolve_background(rs);
            const auto& a = *current_view->alpha;
            for (Eigen::Index p = 0; p < target.pixels.rows(); ++p)
                target.pixels.row(p) += (1 - a.data()[p]) * bg.transpose().array();
            composited = builtin_target_oracle(std::move(target));
            step_oracle = composited.get();
        }

        // (5) SDS pixel gradient
        rec.t = schedule.sample_t(noise_rng);
        const Image eps = standard_normal_image(camera.width, camera.height, noise_rng);
        Image pixel_grad;
        try {
            pixel_grad = sds_pixel_grad({out.rgb, rec.t, eps, &condition, config.prompt, config.cfg_scale},
                                        *step_oracle, schedule, config.weighting);
        } catch (const GuidanceUnavailable& err) {
            ++report.skipped;
            rec.skipped = true;
            ScheduleEvent e = event(step, "guidance_skip");
            e.detail = err.what();
            report.events.push_back(e);
            report.history.push_back(rec);
            if (options.on_iteration) options.on_iteration(state, rec);
            continue;
        }
        rec.sds_grad_rms = std::sqrt(pixel_grad.pixels.square().mean());

        // (6) backward, (7) smoothness, (8) update
        FieldGradient grad = render_backward(state.field, camera, rs, pixel_grad);
        rec.smooth = add_smoothness_gradient(state.field, config.smooth, grad.density_raw);
        if (!adaptive_step(state, grad, config.adam)) {
            ScheduleEvent e = event(step, "rejected_step");
            e.detail = "non-finite gradient";
            report.events.push_back(e);
        }
        report.history.push_back(rec);
        if (options.on_iteration) options.on_iteration(state, rec);
        if (options.progress_every > 0 && (step + 1) % options.progress_every == 0)
            std::fprintf(stderr, "iter %d/%d  dims %dx%dx%d  grad_rms %.4g  smooth %.4g\n", step + 1, plan.coarse_iters,
                         state.field.dims.x(), state.field.dims.y(), state.field.dims.z(), rec.sds_grad_rms,
                         rec.smooth);

        // (9) snapshot
        if (config.snapshot_every > 0 && (step + 1) % config.snapshot_every == 0) snapshot(step + 1);
    }

    report.iterations = plan.coarse_iters;
    report.rejected = state.rejected;
    report.degraded = report.skipped * 10 > report.iterations;
    if ((state.field.dims >= 3).all()) {
        SmoothConfig probe = config.smooth;
        probe.target = SmoothTarget::DensityGradient;
        report.final_smooth = smoothness_term(state.field, probe).value;
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (!config.output_dir.empty()) {
        save_field(state.field, (std::filesystem::path(config.output_dir) / "final.vxaf").string());
        std::ofstream(std::filesystem::path(config.output_dir) / "report.json") << report.to_json() << "\n";
    }
    return {std::move(state.field), std::move(report)};
}

}  // namespace vxa
