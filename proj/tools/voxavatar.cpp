// voxavatar command-line driver.
//
// Exit codes: 0 ok, 1 usage or input error, 2 degraded run / failed check,
// 3 internal error.

#include "voxavatar/config.hpp"
#include "voxavatar/diagnostics.hpp"
#include "voxavatar/image_io.hpp"
#include "voxavatar/mesh_export.hpp"
#include "voxavatar/optimize.hpp"
#include "voxavatar/parallel.hpp"
#include "voxavatar/raster.hpp"
#include "voxavatar/wire.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>

namespace fs = std::filesystem;
using namespace vxa;

namespace {

enum Exit { kOk = 0, kUsage = 1, kDegraded = 2, kInternal = 3 };

// "--key=value", "--key value" or a bare "--flag" (meaning true).
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& args) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string a = args[i];
        if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
        a = a.substr(2);
        const auto eq = a.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(a.substr(0, eq), a.substr(eq + 1));
        } else if (i + 1 < args.size() && args[i + 1].rfind("--", 0) != 0) {
            out.emplace_back(a, args[++i]);
        } else {
            out.emplace_back(a, "true");
        }
    }
    return out;
}

Vec3 parse_vec3(const std::string& s) {
    Vec3 v;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &v.x(), &v.y(), &v.z()) != 3)
        throw InvalidInput("expected x,y,z, got '" + s + "'");
    return v;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

struct GenerateArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> iters;
    int progress = 100;
};

int cmd_generate(const GenerateArgs& a, const std::vector<std::string>& extras) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
    apply_overrides(cfg, parse_overrides(extras));
    if (!a.out.empty()) cfg.output_dir = a.out;
    if (a.seed) cfg.seed = *a.seed;
    if (a.iters) cfg.plan.coarse_iters = *a.iters;
    cfg.validate();
    if (!cfg.output_dir.empty()) {
        fs::create_directories(cfg.output_dir);
        write_text(fs::path(cfg.output_dir) / "config.txt", dump_config(cfg));
    }
    TrainOptions opts;
    opts.progress_every = a.progress;
    const TrainResult res = train_coarse(cfg, opts);
    std::cout << nlohmann::json{{"iterations", res.report.iterations},
                                {"skipped", res.report.skipped},
                                {"rejected", res.report.rejected},
                                {"degraded", res.report.degraded},
                                {"final_smooth", res.report.final_smooth},
                                {"seconds", res.report.seconds}}
                     .dump()
              << "\n";
    return res.report.degraded ? kDegraded : kOk;
}

struct TurntableArgs {
    std::string field;
    std::string out;
    int views = 8;
    int resolution = 256;
    double radius = 0;  // 0: fit the field bounds
    double elevation = 10;
    double fov = 60;
};

int cmd_turntable(const TurntableArgs& a) {
    const VoxelField field = load_field(a.field);
    const Vec3 center = field.bounds.center();
    Scalar radius = a.radius;
    if (radius <= 0) {
        const Scalar half_diag = 0.5 * field.bounds.extent().norm();
        radius = 1.1 * half_diag / std::tan(0.5 * a.fov * std::numbers::pi / 180.0);
    }
    const auto frames = turntable(field, a.views, a.resolution, radius, a.elevation, center, a.fov);
    fs::create_directories(a.out);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.png", i);
        write_png((fs::path(a.out) / name).string(), frames[i]);
    }
    std::cout << nlohmann::json{{"frames", frames.size()}, {"radius", radius}}.dump() << "\n";
    return kOk;
}

int cmd_export_mesh(const std::string& field_path, const std::string& out, double iso) {
    const VoxelField field = load_field(field_path);
    const TriangleMesh mesh = bake_colors(marching_cubes(field, iso), field);
    export_mesh(mesh, out, mesh_format_for(out));
    std::cout << nlohmann::json{{"vertices", mesh.vertices.rows()}, {"faces", mesh.faces.rows()}}.dump() << "\n";
    return kOk;
}

struct ConditionArgs {
    std::string template_path;
    std::string pose;
    std::string out = "condition";
    std::string focus;
    std::string target;
    double radius = 0;  // 0: 2.0 for full body, region midpoint for --focus
    double azimuth = 90;  // front view: the body faces +z
    double elevation = 0;
    double fov = 60;
    int size = 256;
};

int cmd_render_condition(const ConditionArgs& a) {
    RunConfig cfg;
    cfg.template_path = a.template_path;
    cfg.pose_path = a.pose;
    const BodySetup setup = load_body(cfg);
    const auto [lo, hi] = point_bounds(setup.body.vertices);
    Vec3 target = 0.5 * (lo + hi);
    Scalar radius = a.radius > 0 ? a.radius : 2.0;
    if (!a.focus.empty()) {
        const auto& regions = cfg.focus.regions;
        const auto it = std::find_if(regions.begin(), regions.end(), [&](const FocusRegion& r) { return r.name == a.focus; });
        if (it == regions.end()) throw InvalidInput("unknown focus region '" + a.focus + "'");
        target.setZero();
        for (int j : it->joints) target += setup.body.joints.row(j).transpose();
        target /= Scalar(it->joints.size());
        if (a.radius <= 0) radius = 0.5 * (it->min_distance + it->max_distance);
    }
    if (!a.target.empty()) target = parse_vec3(a.target);
    const Camera cam = camera_from_spherical(radius, a.azimuth, a.elevation, target, a.fov, a.size, a.size);
    const ConditionImage c = rasterize_condition(setup.body.vertices, setup.tpl.faces, setup.tpl.face_labels, cam);
    if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_condition_pngs(a.out, c);
    const auto hist = label_histogram(c);
    std::cout << nlohmann::json{{"histogram", hist}}.dump() << "\n";
    return kOk;
}

int cmd_gradcheck(std::uint64_t seed, int seeds, bool perturb) {
    bool ok = true;
    auto emit = [&](const CheckReport& r) {
        std::cout << r.to_json() << "\n";
        ok = ok && r.pass;
    };
    GradcheckOptions go;
    go.perturb_adjoint = perturb;
    for (int i = 0; i < seeds; ++i) emit(renderer_gradcheck(seed + i, go));
    for (int i = 0; i < seeds; ++i) emit(smoothness_gradcheck(seed + i));
    for (int i = 0; i < 20; ++i) emit(rasterizer_check(seed + i));
    std::cout << nlohmann::json{{"pass", ok}}.dump() << "\n";
    return ok ? kOk : kDegraded;
}

// Loopback conformance run of the external-guidance path against the builtin
// point-mass oracle.
int cmd_serve_selftest(std::uint64_t seed, int requests) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Scalar> u01(0, 1);
    const int w = 12, h = 9;
    Image target(w, h);
    for (Eigen::Index i = 0; i < target.pixels.size(); ++i) target.pixels.data()[i] = u01(rng);

    LoopbackServer server([&](const std::string& line) {
        return handle_wire_line(line, [&](const WireRequest& r) { return point_mass_noise(r.z_t, target, r.alpha_bar); });
    });
    auto remote = external_oracle("tcp://127.0.0.1:" + std::to_string(server.port()), std::chrono::milliseconds(5000));
    auto local = builtin_target_oracle(target);

    const std::string prompt = "selftest";
    Scalar max_diff = 0;
    for (int k = 0; k < requests; ++k) {
        Image z(w, h);
        // f32-representable inputs so both sides see identical values.
        for (Eigen::Index i = 0; i < z.pixels.size(); ++i) z.pixels.data()[i] = float(4 * u01(rng) - 2);
        const Scalar ab = float(0.01 + 0.98 * u01(rng));
        const NoiseQuery q{z, int(1000 * u01(rng)), ab, nullptr, prompt, 7.5};
        max_diff = std::max(max_diff, (remote->predict_noise(q).pixels - local->predict_noise(q).pixels).abs().maxCoeff());
    }

    auto is_error = [](const std::string& reply) {
        const auto j = nlohmann::json::parse(reply, nullptr, false);
        return !j.is_discarded() && j.contains("error");
    };
    auto echo = [&](const WireRequest& r) { return point_mass_noise(r.z_t, target, r.alpha_bar); };
    const bool malformed = is_error(handle_wire_line("{not json", echo));
    const bool version = is_error(handle_wire_line(R"({"v":2,"id":7})", echo));

    const bool pass = max_diff <= 1e-6 && malformed && version;
    std::cout << nlohmann::json{{"requests", requests},
                                {"max_abs_diff", max_diff},
                                {"malformed_rejected", malformed},
                                {"version_rejected", version},
                                {"pass", pass}}
                     .dump()
              << "\n";
    return pass ? kOk : kDegraded;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Voxel radiance-field avatar generation with pose-conditioned score distillation"};
    app.require_subcommand(1, 1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Run the coarse optimization");
    generate->add_option("-c,--config", gen.config, "Config file")->check(CLI::ExistingFile);
    generate->add_option("-o,--out", gen.out, "Run directory (overrides output_dir)");
    generate->add_option("--seed", gen.seed, "Random seed");
    generate->add_option("--iters", gen.iters, "Coarse iterations (overrides plan.coarse_iters)");
    generate->add_option("--progress", gen.progress, "Progress line every n iterations (0 = quiet)")->capture_default_str();
    generate->allow_extras();
    generate->footer("Any config key can be overridden as --key=value, e.g. --plan.none or --smooth.lambda=0.");

    TurntableArgs tt;
    auto* turn = app.add_subcommand("turntable", "Render a rotating view sequence of a field");
    turn->add_option("field", tt.field, "Field file (.vxaf)")->required();
    turn->add_option("-o,--out", tt.out, "Output directory")->required();
    turn->add_option("-n,--views", tt.views, "Number of views")->capture_default_str()->check(CLI::PositiveNumber);
    turn->add_option("-r,--resolution", tt.resolution, "Image size in pixels")->capture_default_str()->check(CLI::PositiveNumber);
    turn->add_option("--radius", tt.radius, "Camera distance (0 = fit bounds)")->capture_default_str();
    turn->add_option("--elevation", tt.elevation, "Camera elevation in degrees")->capture_default_str();
    turn->add_option("--fov", tt.fov, "Vertical field of view in degrees")->capture_default_str();

    std::string mesh_field, mesh_out;
    double iso = 0.1;
    auto* mesh = app.add_subcommand("export-mesh", "Extract a colored surface mesh (OBJ or binary PLY)");
    mesh->add_option("field", mesh_field, "Field file (.vxaf)")->required();
    mesh->add_option("-o,--out", mesh_out, "Output path ending in .obj or .ply")->required();
    mesh->add_option("--iso", iso, "Density level")->capture_default_str();

    ConditionArgs ca;
    auto* cond = app.add_subcommand("render-condition", "Rasterize the body part-label condition image");
    cond->add_option("--template", ca.template_path, "Body template JSON (default: built-in body)");
    cond->add_option("--pose", ca.pose, "Pose JSON (default: A-pose)");
    cond->add_option("-o,--out", ca.out, "Output stem; writes _rgb, _labels and _depth PNGs")->capture_default_str();
    cond->add_option("--focus", ca.focus, "Aim at a focus region (head, left_hand, ...)");
    cond->add_option("--target", ca.target, "Look-at point x,y,z");
    cond->add_option("--radius", ca.radius, "Camera distance");
    cond->add_option("--azimuth", ca.azimuth, "Azimuth in degrees (90 = front)")->capture_default_str();
    cond->add_option("--elevation", ca.elevation, "Elevation in degrees")->capture_default_str();
    cond->add_option("--fov", ca.fov, "Vertical field of view in degrees")->capture_default_str();
    cond->add_option("--size", ca.size, "Image size in pixels")->capture_default_str()->check(CLI::PositiveNumber);

    std::uint64_t gc_seed = 0;
    int gc_seeds = 5;
    bool perturb = false;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference and brute-force self checks");
    grad->add_option("--seed", gc_seed, "First seed")->capture_default_str();
    grad->add_option("--seeds", gc_seeds, "Seeds per gradient check")->capture_default_str()->check(CLI::PositiveNumber);
    grad->add_flag("--perturb-adjoint", perturb)->group("");

    std::uint64_t st_seed = 0;
    int st_requests = 100;
    auto* self = app.add_subcommand("serve-selftest", "Loopback wire-protocol conformance run");
    self->add_option("--seed", st_seed, "Seed")->capture_default_str();
    self->add_option("--requests", st_requests, "Random requests")->capture_default_str()->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (threads > 0) set_worker_count(threads);
        if (*generate) return cmd_generate(gen, generate->remaining());
        if (*turn) return cmd_turntable(tt);
        if (*mesh) return cmd_export_mesh(mesh_field, mesh_out, iso);
        if (*cond) return cmd_render_condition(ca);
        if (*grad) return cmd_gradcheck(gc_seed, gc_seeds, perturb);
        if (*self) return cmd_serve_selftest(st_seed, st_requests);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}
