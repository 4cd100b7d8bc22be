#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cmflow/runner.hpp"

namespace {

// The subcommand decides the mode; a mode written in the file must agree.
cmflow::RunConfig load(const std::string& mode, const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw cmflow::ConfigError("cannot read config file '" + path + "'");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw cmflow::ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) {
        throw cmflow::ConfigError("config file '" + path + "' must hold a JSON object");
    }
    if (j.contains("mode") && j["mode"] != mode) {
        const auto& m = j["mode"];
        throw cmflow::ConfigError("config mode '" + (m.is_string() ? m.get<std::string>() : m.dump()) +
                                  "' does not match the '" + mode + "' command");
    }
    j["mode"] = mode;
    return cmflow::parse_config_json(j, std::filesystem::absolute(path).parent_path());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Normalized expanding curvature flow for convex bodies on S^1 and S^2"};
    app.require_subcommand(1);
    std::string config_path;
    std::string output_dir;
    long emit_every = 0;
    for (const char* mode : {"run", "verify", "oracle", "unique"}) {
        auto* sub = app.add_subcommand(mode);
        sub->add_option("--config", config_path, "JSON configuration file")->required();
        sub->add_option("--output", output_dir, "output directory (overrides output.directory)");
        sub->add_option("--emit-every", emit_every, "write diagnostics every m steps")
            ->check(CLI::PositiveNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : cmflow::kExitConfig;
    }

    cmflow::Outcome outcome;
    try {
        cmflow::RunConfig config = load(app.get_subcommands().front()->get_name(), config_path);
        if (!output_dir.empty()) {
            config.output_dir = output_dir;
        }
        if (emit_every > 0) {
            config.emit_every = emit_every;
        }
        outcome = cmflow::execute(config);
    } catch (const std::exception& e) {
        outcome = cmflow::error_outcome(e);
    }
    std::cout << outcome.record.dump() << std::endl;
    return outcome.exit_code;
}
