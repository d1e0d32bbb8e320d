#include "voxavatar/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vxa {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    const std::string t = trim(s);
    if (t.empty() || t == "none") return out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = t.find(sep, start);
        out.push_back(trim(std::string_view(t).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

struct Parser {
    const std::string& key;
    int line;

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(key + ": " + what, line); }

    Scalar number(const std::string& v) const {
        Scalar x = 0;
        const std::string t = trim(v);
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
        if (ec != std::errc() || p != t.data() + t.size() || t.empty()) fail("expected a number, got '" + t + "'");
        return x;
    }
    long integer(const std::string& v) const {
        long x = 0;
        const std::string t = trim(v);
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
        if (ec != std::errc() || p != t.data() + t.size() || t.empty()) fail("expected an integer, got '" + t + "'");
        return x;
    }
    bool boolean(const std::string& v) const {
        const std::string t = trim(v);
        if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
        if (t == "false" || t == "0" || t == "no" || t == "off") return false;
        fail("expected true or false, got '" + t + "'");
    }
    std::vector<int> ints(const std::string& v) const {
        std::vector<int> out;
        for (const auto& s : split(v, ',')) out.push_back(int(integer(s)));
        return out;
    }
    std::vector<Scalar> numbers(const std::string& v) const {
        std::vector<Scalar> out;
        for (const auto& s : split(v, ',')) out.push_back(number(s));
        return out;
    }
    RadiusRange range(const std::string& v) const {
        const auto parts = split(v, ':');
        if (parts.size() != 2) fail("expected lo:hi, got '" + v + "'");
        return {number(parts[0]), number(parts[1])};
    }
};

FocusRegion& region_named(RunConfig& c, const std::string& name) {
    for (auto& r : c.focus.regions)
        if (r.name == name) return r;
    c.focus.regions.push_back(FocusRegion{name, {}, 0.3, 0.5});
    return c.focus.regions.back();
}

std::string fmt(Scalar v) {
    // shortest text that parses back to the same double
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        if constexpr (std::is_floating_point_v<T>)
            out += fmt(xs[i]);
        else
            out += std::to_string(xs[i]);
    }
    return out.empty() ? "none" : out;
}

}  // namespace

void apply_setting(RunConfig& c, const std::string& key, const std::string& raw_value, int line) {
    const Parser p{key, line};
    const std::string v = trim(raw_value);
    StagePlan& plan = c.plan;

    if (key == "prompt") c.prompt = v;
    else if (key == "seed") c.seed = std::uint64_t(p.integer(v));
    else if (key == "output_dir") c.output_dir = v;
    else if (key == "body.template") c.template_path = v;
    else if (key == "body.pose_file") c.pose_path = v;
    else if (key == "body.arm_angle") c.pose = a_pose(p.number(v), int(c.pose.xi.rows()));
    else if (key == "body.beta") {
        const auto b = p.numbers(v);
        if (b.size() != std::size_t(kShapeDims)) p.fail("expected 10 shape coefficients");
        c.beta.beta = Eigen::Map<const Eigen::VectorXd>(b.data(), kShapeDims);
    } else if (key == "body.pose") {
        const auto x = p.numbers(v);
        if (x.empty() || x.size() % 3 != 0) p.fail("expected 3 numbers per joint");
        c.pose.xi = Eigen::Map<const Points>(x.data(), Eigen::Index(x.size() / 3), 3);
    }
    else if (key == "plan.none") {
        if (p.boolean(v)) plan.disable_progressive();
    }
    else if (key == "plan.grid_double_steps") plan.grid_double_steps = p.ints(v);
    else if (key == "plan.bbox_shrink_step") plan.bbox_shrink_step = int(p.integer(v));
    else if (key == "plan.bbox_threshold") plan.bbox_threshold = p.number(v);
    else if (key == "plan.radius_stages") {
        plan.radius_stages.clear();
        for (const auto& s : split(v, ',')) plan.radius_stages.push_back(p.range(s));
    }
    else if (key == "plan.radius_stage_steps") plan.radius_stage_steps = p.ints(v);
    else if (key == "plan.radius_mode") {
        if (v == "stages") plan.radius_mode = RadiusMode::Stages;
        else if (v == "decay") plan.radius_mode = RadiusMode::Decay;
        else p.fail("expected stages or decay");
    }
    else if (key == "plan.radius_decay") plan.radius_decay = p.number(v);
    else if (key == "plan.focus_start_step") plan.focus_start_step = int(p.integer(v));
    else if (key == "plan.focus_probability") plan.focus_probability = p.number(v);
    else if (key == "plan.final_voxels") plan.final_voxels = p.number(v);
    else if (key == "plan.coarse_iters") plan.coarse_iters = int(p.integer(v));
    else if (key == "plan.elevation_min") plan.elevation_min = p.number(v);
    else if (key == "plan.elevation_max") plan.elevation_max = p.number(v);
    else if (key == "plan.fov_y") plan.fov_y = p.number(v);
    else if (key == "plan.render_resolution") plan.render_resolution = int(p.integer(v));
    else if (key == "plan.focus_resolution") plan.focus_resolution = int(p.integer(v));
    else if (key == "smooth.kernel_size") c.smooth.kernel_size = int(p.integer(v));
    else if (key == "smooth.sigma") c.smooth.sigma = p.number(v);
    else if (key == "smooth.lambda") c.smooth.lambda = p.number(v);
    else if (key == "smooth.target") {
        if (v == "gradient") c.smooth.target = SmoothTarget::DensityGradient;
        else if (v == "density") c.smooth.target = SmoothTarget::Density;
        else p.fail("expected gradient or density");
    }
    else if (key == "adam.lr_density") c.adam.lr_density = p.number(v);
    else if (key == "adam.lr_color") c.adam.lr_color = p.number(v);
    else if (key == "adam.beta1") c.adam.beta1 = p.number(v);
    else if (key == "adam.beta2") c.adam.beta2 = p.number(v);
    else if (key == "adam.epsilon") c.adam.epsilon = p.number(v);
    else if (key == "oracle.kind") {
        if (v == "silhouette") c.oracle = OracleKind::Silhouette;
        else if (v == "target") c.oracle = OracleKind::Target;
        else if (v == "external") c.oracle = OracleKind::External;
        else p.fail("expected silhouette, target or external");
    }
    else if (key == "oracle.endpoint") c.oracle_endpoint = v;
    else if (key == "oracle.timeout_ms") c.oracle_timeout_ms = int(p.integer(v));
    else if (key == "oracle.weighting") {
        if (v == "one_minus_alpha_bar") c.weighting = Weighting::OneMinusAlphaBar;
        else if (v == "constant") c.weighting = Weighting::Constant;
        else p.fail("expected one_minus_alpha_bar or constant");
    }
    else if (key == "oracle.cfg_scale") c.cfg_scale = p.number(v);
    else if (key == "oracle.noise_steps") c.noise_steps = int(p.integer(v));
    else if (key == "render.step_fraction") c.step_fraction = p.number(v);
    else if (key == "render.background") {
        if (v == "auto") c.background = BackgroundChoice::Auto;
        else if (v == "white") c.background = BackgroundChoice::White;
        else if (v == "random") c.background = BackgroundChoice::Random;
        else p.fail("expected auto, white or random");
    }
    else if (key == "init.bounds_padding") c.bounds_padding = p.number(v);
    else if (key == "init.bias_strength") c.bias_strength = p.number(v);
    else if (key == "snapshot.every") c.snapshot_every = int(p.integer(v));
    else if (key == "snapshot.resolution") c.snapshot_resolution = int(p.integer(v));
    else if (key == "focus.clear") {
        if (p.boolean(v)) c.focus.regions.clear();
    }
    else if (key.rfind("focus.", 0) == 0) {
        const auto dot = key.rfind('.');
        const std::string name = key.substr(6, dot - 6), field = key.substr(dot + 1);
        if (name.empty() || dot <= 6) p.fail("expected focus.<region>.joints or focus.<region>.distance");
        if (field == "joints") region_named(c, name).joints = p.ints(v);
        else if (field == "distance") {
            const auto [lo, hi] = p.range(v);
            region_named(c, name).min_distance = lo;
            region_named(c, name).max_distance = hi;
        } else p.fail("unknown focus field '" + field + "'");
    }
    else throw ConfigError("unknown key '" + key + "'", line);
}

static std::string quote(const std::string& v) {
    std::string out = "\"";
    for (char ch : v) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    return out + "\"";
}

RunConfig parse_config(const std::string& text, RunConfig c) {
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        // '#' starts a comment unless it sits inside a double-quoted value.
        std::string stripped;
        bool quoted = false, escaped = false;
        for (char ch : line) {
            if (!quoted && ch == '#') break;
            if (quoted && !escaped && ch == '\\') escaped = true;
            else {
                if (ch == '"' && !escaped) quoted = !quoted;
                escaped = false;
            }
            stripped += ch;
        }
        if (quoted) throw ConfigError("unterminated quote", n);
        const std::string body = trim(stripped);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", n);
        const std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) throw ConfigError("missing key before '='", n);
        std::string value = trim(std::string_view(body).substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            std::string plain;
            for (std::size_t i = 1; i + 1 < value.size(); ++i) {
                if (value[i] == '\\' && i + 2 < value.size()) ++i;
                plain += value[i];
            }
            value = plain;
        }
        apply_setting(c, key, value, n);
    }
    return c;
}

RunConfig load_config(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str(), std::move(base));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void apply_overrides(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& overrides) {
    for (const auto& [k, v] : overrides) apply_setting(config, k, v);
}

std::string dump_config(const RunConfig& c) {
    std::ostringstream o;
    const StagePlan& p = c.plan;
    std::vector<Scalar> beta(c.beta.beta.data(), c.beta.beta.data() + c.beta.beta.size());
    std::vector<Scalar> pose;
    for (Eigen::Index j = 0; j < c.pose.xi.rows(); ++j)
        for (int d = 0; d < 3; ++d) pose.push_back(c.pose.xi(j, d));
    std::string stages;
    for (std::size_t i = 0; i < p.radius_stages.size(); ++i)
        stages += (i ? ", " : "") + fmt(p.radius_stages[i].first) + ":" + fmt(p.radius_stages[i].second);
    o << "prompt = " << quote(c.prompt) << "\n"
      << "seed = " << c.seed << "\n";
    if (!c.output_dir.empty()) o << "output_dir = " << c.output_dir << "\n";
    if (!c.template_path.empty()) o << "body.template = " << c.template_path << "\n";
    if (!c.pose_path.empty()) o << "body.pose_file = " << c.pose_path << "\n";
    o << "body.beta = " << join(beta) << "\n"
      << "body.pose = " << join(pose) << "\n"
      << "plan.grid_double_steps = " << join(p.grid_double_steps) << "\n"
      << "plan.bbox_shrink_step = " << p.bbox_shrink_step << "\n"
      << "plan.bbox_threshold = " << fmt(p.bbox_threshold) << "\n"
      << "plan.radius_stages = " << stages << "\n"
      << "plan.radius_stage_steps = " << join(p.radius_stage_steps) << "\n"
      << "plan.radius_mode = " << (p.radius_mode == RadiusMode::Stages ? "stages" : "decay") << "\n"
      << "plan.radius_decay = " << fmt(p.radius_decay) << "\n"
      << "plan.focus_start_step = " << p.focus_start_step << "\n"
      << "plan.focus_probability = " << fmt(p.focus_probability) << "\n"
      << "plan.final_voxels = " << fmt(p.final_voxels) << "\n"
      << "plan.coarse_iters = " << p.coarse_iters << "\n"
      << "plan.elevation_min = " << fmt(p.elevation_min) << "\n"
      << "plan.elevation_max = " << fmt(p.elevation_max) << "\n"
      << "plan.fov_y = " << fmt(p.fov_y) << "\n"
      << "plan.render_resolution = " << p.render_resolution << "\n"
      << "plan.focus_resolution = " << p.focus_resolution << "\n"
      << "smooth.kernel_size = " << c.smooth.kernel_size << "\n"
      << "smooth.sigma = " << fmt(c.smooth.sigma) << "\n"
      << "smooth.lambda = " << fmt(c.smooth.lambda) << "\n"
      << "smooth.target = " << (c.smooth.target == SmoothTarget::DensityGradient ? "gradient" : "density") << "\n"
      << "adam.lr_density = " << fmt(c.adam.lr_density) << "\n"
      << "adam.lr_color = " << fmt(c.adam.lr_color) << "\n"
      << "adam.beta1 = " << fmt(c.adam.beta1) << "\n"
      << "adam.beta2 = " << fmt(c.adam.beta2) << "\n"
      << "adam.epsilon = " << fmt(c.adam.epsilon) << "\n"
      << "oracle.kind = "
      << (c.oracle == OracleKind::Silhouette ? "silhouette" : c.oracle == OracleKind::Target ? "target" : "external")
      << "\n";
    if (!c.oracle_endpoint.empty()) o << "oracle.endpoint = " << c.oracle_endpoint << "\n";
    o << "oracle.timeout_ms = " << c.oracle_timeout_ms << "\n"
      << "oracle.weighting = " << (c.weighting == Weighting::OneMinusAlphaBar ? "one_minus_alpha_bar" : "constant")
      << "\n"
      << "oracle.cfg_scale = " << fmt(c.cfg_scale) << "\n"
      << "oracle.noise_steps = " << c.noise_steps << "\n"
      << "render.step_fraction = " << fmt(c.step_fraction) << "\n"
      << "render.background = "
      << (c.background == BackgroundChoice::Auto ? "auto" : c.background == BackgroundChoice::White ? "white" : "random")
      << "\n"
      << "init.bounds_padding = " << fmt(c.bounds_padding) << "\n"
      << "init.bias_strength = " << fmt(c.bias_strength) << "\n"
      << "snapshot.every = " << c.snapshot_every << "\n"
      << "snapshot.resolution = " << c.snapshot_resolution << "\n"
      << "focus.clear = true\n";
    for (const auto& r : c.focus.regions)
        o << "focus." << r.name << ".joints = " << join(r.joints) << "\n"
          << "focus." << r.name << ".distance = " << fmt(r.min_distance) << ":" << fmt(r.max_distance) << "\n";
    return o.str();
}

}  // namespace vxa
