#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmflow/config.hpp"

namespace cmflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNotConverged = 2;
inline constexpr int kExitBreakdown = 3;

int exit_code_for(RunStatus s);

struct Outcome {
    int exit_code = kExitOk;
    nlohmann::ordered_json record;  // final structured record
};

// Creates the output directory and proves it writable; FilesystemError otherwise.
void prepare_output_dir(const std::filesystem::path& dir);

// Runs the configured mode and writes every output file.
Outcome execute(const RunConfig& config);

// Final record for an error that escaped execution.
Outcome error_outcome(const std::exception& e);

// Writes emitted diagnostics (steps = 0 mod every, plus the last step) as
// newline-delimited JSON and one "t value" plot file per monitored functional.
class DiagnosticsWriter {
public:
    DiagnosticsWriter(const std::filesystem::path& dir, long every);

    DiagnosticsSink sink();
    // Emits the final record unless it was already written.
    void finish(const DiagnosticsRecord& last);
    long records_written() const { return written_; }

private:
    void write(const DiagnosticsRecord& r);

    long every_;
    long written_ = 0;
    long last_step_ = -1;
    std::ofstream diagnostics_;
    std::vector<std::ofstream> plots_;
};

nlohmann::ordered_json record_json(const DiagnosticsRecord& r);

void write_solution(const std::filesystem::path& file, const FlowState& state, const FlowParams& params);

}  // namespace cmflow
