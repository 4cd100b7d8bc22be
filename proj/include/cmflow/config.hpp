#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmflow/flow_engine.hpp"
#include "cmflow/oracle.hpp"

namespace cmflow {

enum class Mode { run, verify, oracle, unique };

const char* to_string(Mode m);
Mode parse_mode(const std::string& s);

// A scalar field on the sphere, described analytically or by a file.
struct FieldSpec {
    enum class Kind { constant, harmonics, samples, ball, offset_ball, manufactured };

    // One term a * Y_l^m. On S^2: P_l^|m|(cos theta) times cos(m phi) for
    // m >= 0 or sin(|m| phi) for m < 0, without normalization or
    // Condon-Shortley phase. On S^1: l == |m|, cos(l theta) or sin(l theta).
    struct Harmonic {
        int l = 0;
        int m = 0;
        double a = 0.0;
        friend bool operator==(const Harmonic&, const Harmonic&) = default;
    };

    Kind kind = Kind::constant;
    double value = 0.0;                    // constant value or ball radius
    std::vector<Harmonic> harmonics;
    std::string path;                      // samples file, absolute after parsing
    std::array<double, 3> center{0, 0, 0};  // offset ball
    std::vector<FieldSpec> target;          // manufactured: the body it comes from

    friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

struct OracleSettings {
    CMode c_mode = CMode::fixed;
    double c = 1.0;
    double newton_tol = 1e-10;
    int newton_max_iter = 50;
    double unique_tol = 1e-3;  // pairwise normalized distance accepted in unique mode
    friend bool operator==(const OracleSettings&, const OracleSettings&) = default;
};

struct RunConfig {
    Mode mode = Mode::run;
    int dim_n = 2;
    int k = 1;
    Resolution resolution;
    DerivativeScheme scheme = DerivativeScheme::spectral;
    double p = 0.0;
    double q = 0.0;
    FieldSpec f;
    FieldSpec h0;
    std::vector<FieldSpec> initial_bodies;
    FlowControls numerics;
    unsigned long long seed = 0;
    OracleSettings oracle;
    std::string output_dir = "cmflow_out";
    long emit_every = 1;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Reads a JSON config. Unknown keys, missing keys and invalid combinations
// are ConfigErrors naming the key or constraint. Relative sample paths are
// resolved against the config file's directory.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

// Fully resolved config; parse_config_json(to_json(c), ...) == c.
nlohmann::ordered_json to_json(const RunConfig& c);

// Config echoed in a run manifest.
RunConfig parse_manifest(const std::filesystem::path& path);

GridPtr make_grid(const RunConfig& c);
ScalarField build_field(const FieldSpec& spec, const GridPtr& grid, const RunConfig& c);
FlowParams make_params(const RunConfig& c, const GridPtr& grid);

// Evaluates h0 (or an initial body) and checks it is positive and strictly
// convex; ConfigError otherwise.
ScalarField build_body(const FieldSpec& spec, const GridPtr& grid, const RunConfig& c,
                       const std::string& what);

}  // namespace cmflow
