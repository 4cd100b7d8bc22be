#include "cmflow/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cmflow {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(Mode m) {
    switch (m) {
        case Mode::run:
            return "run";
        case Mode::verify:
            return "verify";
        case Mode::oracle:
            return "oracle";
        case Mode::unique:
            return "unique";
    }
    return "run";
}

Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::run, Mode::verify, Mode::oracle, Mode::unique}) {
        if (s == to_string(m)) {
            return m;
        }
    }
    throw ConfigError("mode must be one of run, verify, oracle, unique; got '" + s + "'");
}

namespace {

// Typed access to one JSON object; rejects keys outside `allowed`.
class Section {
public:
    Section(const json& j, std::string where, std::set<std::string> allowed)
        : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) {
            throw ConfigError("'" + where_ + "' must be an object");
        }
        for (const auto& item : j_.items()) {
            if (!allowed.contains(item.key())) {
                throw ConfigError("unknown key '" + name(item.key()) + "'");
            }
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& required(const std::string& key) const {
        if (!j_.contains(key)) {
            throw ConfigError("missing key '" + name(key) + "'");
        }
        return j_.at(key);
    }

    double number(const std::string& key) const {
        const json& v = required(key);
        if (!v.is_number()) {
            throw ConfigError("'" + name(key) + "' must be a number");
        }
        return v.get<double>();
    }
    double number(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }

    long long integer(const std::string& key) const {
        const json& v = required(key);
        if (!v.is_number_integer()) {
            throw ConfigError("'" + name(key) + "' must be an integer");
        }
        return v.get<long long>();
    }
    long long integer(const std::string& key, long long fallback) const {
        return has(key) ? integer(key) : fallback;
    }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const json& v = j_.at(key);
        if (!v.is_boolean()) {
            throw ConfigError("'" + name(key) + "' must be true or false");
        }
        return v.get<bool>();
    }

    std::string text(const std::string& key) const {
        const json& v = required(key);
        if (!v.is_string()) {
            throw ConfigError("'" + name(key) + "' must be a string");
        }
        return v.get<std::string>();
    }
    std::string text(const std::string& key, const std::string& fallback) const {
        return has(key) ? text(key) : fallback;
    }

    std::string name(const std::string& key) const {
        return where_.empty() ? key : where_ + "." + key;
    }

private:
    const json& j_;
    std::string where_;
};

FieldSpec parse_field(const json& j, const std::string& where, bool allow_body_forms,
                      const std::filesystem::path& base_dir) {
    std::set<std::string> allowed{"constant", "harmonics", "samples"};
    if (allow_body_forms) {
        allowed.insert({"ball", "offset_ball"});
    } else {
        allowed.insert("manufactured");
    }
    const Section s(j, where, allowed);
    if (j.size() != 1) {
        throw ConfigError("'" + where + "' must have exactly one of the keys: constant, harmonics, " +
                          "samples" + (allow_body_forms ? ", ball, offset_ball" : ", manufactured"));
    }
    FieldSpec spec;
    if (s.has("constant")) {
        spec.kind = FieldSpec::Kind::constant;
        spec.value = s.number("constant");
    } else if (s.has("ball")) {
        spec.kind = FieldSpec::Kind::ball;
        spec.value = s.number("ball");
    } else if (s.has("harmonics")) {
        spec.kind = FieldSpec::Kind::harmonics;
        const json& list = s.required("harmonics");
        if (!list.is_array() || list.empty()) {
            throw ConfigError("'" + s.name("harmonics") + "' must be a non-empty list of [l, m, a]");
        }
        for (const json& t : list) {
            if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() ||
                !t[1].is_number_integer() || !t[2].is_number()) {
                throw ConfigError("'" + s.name("harmonics") +
                                  "' entries must be [degree, order, coefficient]");
            }
            spec.harmonics.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<double>()});
        }
    } else if (s.has("samples")) {
        spec.kind = FieldSpec::Kind::samples;
        std::filesystem::path p = s.text("samples");
        if (p.is_relative()) {
            p = base_dir / p;
        }
        spec.path = p.lexically_normal().string();
    } else if (s.has("offset_ball")) {
        spec.kind = FieldSpec::Kind::offset_ball;
        const Section b(s.required("offset_ball"), s.name("offset_ball"), {"radius", "center"});
        spec.value = b.number("radius");
        const json& c = b.required("center");
        if (!c.is_array() || c.size() < 2 || c.size() > 3) {
            throw ConfigError("'" + b.name("center") + "' must be a list of 2 or 3 numbers");
        }
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (!c[i].is_number()) {
                throw ConfigError("'" + b.name("center") + "' must contain numbers");
            }
            spec.center[i] = c[i].get<double>();
        }
    } else {
        spec.kind = FieldSpec::Kind::manufactured;
        spec.target.push_back(parse_field(s.required("manufactured"), s.name("manufactured"), true, base_dir));
    }
    return spec;
}

ordered_json field_json(const FieldSpec& spec) {
    ordered_json j;
    switch (spec.kind) {
        case FieldSpec::Kind::constant:
            j["constant"] = spec.value;
            break;
        case FieldSpec::Kind::ball:
            j["ball"] = spec.value;
            break;
        case FieldSpec::Kind::harmonics: {
            ordered_json list = ordered_json::array();
            for (const auto& h : spec.harmonics) {
                list.push_back({h.l, h.m, h.a});
            }
            j["harmonics"] = list;
            break;
        }
        case FieldSpec::Kind::samples:
            j["samples"] = spec.path;
            break;
        case FieldSpec::Kind::offset_ball:
            j["offset_ball"] = {{"radius", spec.value},
                                {"center", {spec.center[0], spec.center[1], spec.center[2]}}};
            break;
        case FieldSpec::Kind::manufactured:
            j["manufactured"] = field_json(spec.target.at(0));
            break;
    }
    return j;
}

Integrator parse_integrator(const std::string& s) {
    if (s == "euler") {
        return Integrator::euler;
    }
    if (s == "heun") {
        return Integrator::heun;
    }
    throw ConfigError("numerics.integrator must be 'euler' or 'heun'; got '" + s + "'");
}

DerivativeScheme parse_scheme(const std::string& s) {
    if (s == "spectral") {
        return DerivativeScheme::spectral;
    }
    if (s == "fd4") {
        return DerivativeScheme::fd4;
    }
    throw ConfigError("geometry.scheme must be 'spectral' or 'fd4'; got '" + s + "'");
}

std::vector<double> read_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read samples file '" + path + "'");
    }
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        for (char& ch : line) {
            if (ch == ',' || ch == ';') {
                ch = ' ';
            }
        }
        std::istringstream tokens(line);
        std::string token;
        while (tokens >> token) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(token, &used));
                if (used != token.size()) {
                    throw std::invalid_argument(token);
                }
            } catch (const std::exception&) {
                throw ConfigError("samples file '" + path + "': not a number: '" + token + "'");
            }
        }
    }
    return values;
}

double harmonic_value(const FieldSpec::Harmonic& t, const SphereGrid& grid, std::size_t i) {
    const int am = std::abs(t.m);
    if (grid.dim_n() == 2) {
        const double angle = am * grid.theta(i);
        return t.a * (t.m >= 0 ? std::cos(angle) : std::sin(angle));
    }
    const double legendre =
        std::assoc_legendre(static_cast<unsigned>(t.l), static_cast<unsigned>(am), std::cos(grid.theta(i)));
    const double angle = am * grid.phi(i);
    return t.a * legendre * (t.m >= 0 ? std::cos(angle) : std::sin(angle));
}

void check_harmonics(const FieldSpec& spec, int dim_n) {
    for (const auto& t : spec.harmonics) {
        if (t.l < 0 || std::abs(t.m) > t.l) {
            throw ConfigError("harmonic [" + std::to_string(t.l) + ", " + std::to_string(t.m) +
                              "]: need l >= 0 and |m| <= l");
        }
        if (dim_n == 2 && std::abs(t.m) != t.l) {
            throw ConfigError("harmonic [" + std::to_string(t.l) + ", " + std::to_string(t.m) +
                              "]: on S^1 the order must satisfy |m| = l");
        }
        if (t.l > 127) {
            throw ConfigError("harmonic degree above 127 is not supported");
        }
    }
}

}  // namespace

GridPtr make_grid(const RunConfig& c) { return SphereGrid::build(c.dim_n, c.resolution, c.scheme); }

ScalarField build_field(const FieldSpec& spec, const GridPtr& grid, const RunConfig& c) {
    const SphereGrid& g = *grid;
    switch (spec.kind) {
        case FieldSpec::Kind::constant:
        case FieldSpec::Kind::ball:
            return g.constant(spec.value);
        case FieldSpec::Kind::harmonics: {
            check_harmonics(spec, g.dim_n());
            std::vector<double> v(g.size(), 0.0);
            for (std::size_t i = 0; i < v.size(); ++i) {
                for (const auto& t : spec.harmonics) {
                    v[i] += harmonic_value(t, g, i);
                }
            }
            return ScalarField(grid, std::move(v));
        }
        case FieldSpec::Kind::samples: {
            auto v = read_samples(spec.path);
            if (v.size() != g.size()) {
                throw ConfigError("samples file '" + spec.path + "' has " + std::to_string(v.size()) +
                                  " values; the grid has " + std::to_string(g.size()) + " nodes");
            }
            return ScalarField(grid, std::move(v));
        }
        case FieldSpec::Kind::offset_ball: {
            if (g.dim_n() == 2 && spec.center[2] != 0.0) {
                throw ConfigError("offset_ball center on S^1 must have 2 components");
            }
            const auto center = spec.center;
            const double r = spec.value;
            return g.sample([&](const Vec3& x) {
                return r + center[0] * x[0] + center[1] * x[1] + center[2] * x[2];
            });
        }
        case FieldSpec::Kind::manufactured: {
            const ScalarField target = build_body(spec.target.at(0), grid, c, "f.manufactured");
            return manufactured_f(target, g, c.p, c.q, c.k);
        }
    }
    throw InternalError("unhandled field kind");
}

ScalarField build_body(const FieldSpec& spec, const GridPtr& grid, const RunConfig& c,
                       const std::string& what) {
    ScalarField h = build_field(spec, grid, c);
    if (!(h.min() > 0.0)) {
        throw ConfigError(what + " must be positive at every node (the origin must lie inside the body)");
    }
    const double lam = body_geometry(h, *grid, c.k).min_eig_b;
    if (!(lam > c.numerics.epsilon_convex * mean(h, *grid))) {
        throw ConfigError(what + " is not strictly convex (min eigenvalue of b = " +
                          std::to_string(lam) + ")");
    }
    return h;
}

FlowParams make_params(const RunConfig& c, const GridPtr& grid) {
    FlowParams params{c.k, c.p, c.q, build_field(c.f, grid, c), c.numerics};
    if (!(params.f.min() > 0.0)) {
        throw ConfigError("f must be positive at every node");
    }
    params.validate();
    return params;
}

RunConfig parse_config_json(const json& j, const std::filesystem::path& base_dir) {
    const Section top(j, "", {"mode", "geometry", "exponents", "f", "h0", "initial_bodies", "numerics",
                              "oracle", "output"});
    RunConfig c;
    c.mode = parse_mode(top.text("mode", "run"));

    const Section geo(top.required("geometry"), "geometry", {"dim_n", "k", "resolution", "scheme"});
    c.dim_n = static_cast<int>(geo.integer("dim_n"));
    if (c.dim_n != 2 && c.dim_n != 3) {
        throw ConfigError("geometry.dim_n must be 2 or 3");
    }
    c.k = static_cast<int>(geo.integer("k"));
    require_valid_k(c.k, c.dim_n);
    const Section res(geo.required("resolution"), "geometry.resolution", {"azimuth", "polar"});
    c.resolution.azimuth = static_cast<int>(res.integer("azimuth"));
    c.resolution.polar = c.dim_n == 3 ? static_cast<int>(res.integer("polar")) : 0;
    if (c.dim_n == 2 && res.has("polar")) {
        throw ConfigError("geometry.resolution.polar applies to dim_n = 3 only");
    }
    c.scheme = parse_scheme(geo.text("scheme", "spectral"));

    const Section ex(top.required("exponents"), "exponents", {"p", "q"});
    c.p = ex.number("p");
    c.q = ex.number("q");
    if (c.p == 0.0) {
        throw ConfigError("exponents.p violates the constraint p ≠ 0");
    }

    c.f = parse_field(top.required("f"), "f", false, base_dir);
    if (c.mode == Mode::unique) {
        const json& list = top.required("initial_bodies");
        if (!list.is_array() || list.size() < 2) {
            throw ConfigError("'initial_bodies' must list at least two bodies");
        }
        for (std::size_t i = 0; i < list.size(); ++i) {
            c.initial_bodies.push_back(
                parse_field(list[i], "initial_bodies[" + std::to_string(i) + "]", true, base_dir));
        }
        if (top.has("h0")) {
            c.h0 = parse_field(top.required("h0"), "h0", true, base_dir);
        } else {
            c.h0 = c.initial_bodies.front();
        }
    } else {
        c.h0 = parse_field(top.required("h0"), "h0", true, base_dir);
        if (top.has("initial_bodies")) {
            throw ConfigError("'initial_bodies' is only used in unique mode");
        }
    }

    FlowControls& n = c.numerics;
    if (top.has("numerics")) {
        const Section s(top.required("numerics"), "numerics",
                        {"dt_init", "dt_safety", "tol_residual", "tol_rhs", "max_steps",
                         "epsilon_convex", "monotonicity_tol", "fixed_dt", "integrator",
                         "transient_time", "seed"});
        n.dt_init = s.number("dt_init", n.dt_init);
        n.dt_safety = s.number("dt_safety", n.dt_safety);
        n.tol_residual = s.number("tol_residual", n.tol_residual);
        n.tol_rhs = s.number("tol_rhs", n.tol_rhs);
        n.max_steps = s.integer("max_steps", n.max_steps);
        n.epsilon_convex = s.number("epsilon_convex", n.epsilon_convex);
        n.monotonicity_tol = s.number("monotonicity_tol", n.monotonicity_tol);
        n.fixed_dt = s.boolean("fixed_dt", n.fixed_dt);
        n.integrator = parse_integrator(s.text("integrator", "euler"));
        n.transient_time = s.number("transient_time", n.transient_time);
        const long long seed = s.integer("seed", 0);
        if (seed < 0) {
            throw ConfigError("numerics.seed must be non-negative");
        }
        c.seed = static_cast<unsigned long long>(seed);
    }

    if (top.has("oracle")) {
        const Section s(top.required("oracle"), "oracle",
                        {"c_mode", "c", "newton_tol", "newton_max_iter", "unique_tol"});
        const std::string mode = s.text("c_mode", "fixed");
        if (mode != "fixed" && mode != "free") {
            throw ConfigError("oracle.c_mode must be 'fixed' or 'free'");
        }
        c.oracle.c_mode = mode == "fixed" ? CMode::fixed : CMode::free;
        c.oracle.c = s.number("c", c.oracle.c);
        c.oracle.newton_tol = s.number("newton_tol", c.oracle.newton_tol);
        c.oracle.newton_max_iter = static_cast<int>(s.integer("newton_max_iter", c.oracle.newton_max_iter));
        c.oracle.unique_tol = s.number("unique_tol", c.oracle.unique_tol);
        if (!(c.oracle.newton_tol > 0.0) || !(c.oracle.c > 0.0) || c.oracle.newton_max_iter < 1) {
            throw ConfigError("oracle: newton_tol and c must be positive, newton_max_iter >= 1");
        }
    }

    if (top.has("output")) {
        const Section s(top.required("output"), "output", {"directory", "emit_every"});
        c.output_dir = s.text("directory", c.output_dir);
        c.emit_every = s.integer("emit_every", c.emit_every);
    }
    if (c.emit_every < 1) {
        throw ConfigError("output.emit_every must be >= 1");
    }

    // Evaluate every field once so that bad inputs fail before any run.
    const GridPtr grid = make_grid(c);
    make_params(c, grid);
    if (c.mode == Mode::unique) {
        for (std::size_t i = 0; i < c.initial_bodies.size(); ++i) {
            build_body(c.initial_bodies[i], grid, c, "initial_bodies[" + std::to_string(i) + "]");
        }
    } else {
        build_body(c.h0, grid, c, "h0");
    }
    return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file '" + path.string() + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config_json(j, std::filesystem::absolute(path).parent_path());
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["mode"] = to_string(c.mode);
    ordered_json res{{"azimuth", c.resolution.azimuth}};
    if (c.dim_n == 3) {
        res["polar"] = c.resolution.polar;
    }
    j["geometry"] = {{"dim_n", c.dim_n},
                     {"k", c.k},
                     {"resolution", res},
                     {"scheme", c.scheme == DerivativeScheme::spectral ? "spectral" : "fd4"}};
    j["exponents"] = {{"p", c.p}, {"q", c.q}};
    j["f"] = field_json(c.f);
    j["h0"] = field_json(c.h0);
    if (c.mode == Mode::unique) {
        ordered_json list = ordered_json::array();
        for (const auto& b : c.initial_bodies) {
            list.push_back(field_json(b));
        }
        j["initial_bodies"] = list;
    }
    const FlowControls& n = c.numerics;
    j["numerics"] = {{"dt_init", n.dt_init},
                     {"dt_safety", n.dt_safety},
                     {"tol_residual", n.tol_residual},
                     {"tol_rhs", n.tol_rhs},
                     {"max_steps", n.max_steps},
                     {"epsilon_convex", n.epsilon_convex},
                     {"monotonicity_tol", n.monotonicity_tol},
                     {"fixed_dt", n.fixed_dt},
                     {"integrator", n.integrator == Integrator::euler ? "euler" : "heun"},
                     {"transient_time", n.transient_time},
                     {"seed", c.seed}};
    j["oracle"] = {{"c_mode", c.oracle.c_mode == CMode::fixed ? "fixed" : "free"},
                   {"c", c.oracle.c},
                   {"newton_tol", c.oracle.newton_tol},
                   {"newton_max_iter", c.oracle.newton_max_iter},
                   {"unique_tol", c.oracle.unique_tol}};
    j["output"] = {{"directory", c.output_dir}, {"emit_every", c.emit_every}};
    return j;
}

RunConfig parse_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read manifest '" + path.string() + "'");
    }
    const json j = json::parse(in);
    if (!j.contains("config")) {
        throw ConfigError("manifest '" + path.string() + "' has no 'config' entry");
    }
    return parse_config_json(j.at("config"), std::filesystem::absolute(path).parent_path());
}

}  // namespace cmflow
