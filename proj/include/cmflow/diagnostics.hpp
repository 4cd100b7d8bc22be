#pragma once

#include <string>
#include <vector>

namespace cmflow {

struct FlowState;
struct FlowParams;

// Monitored quantities of one accepted step.
struct DiagnosticsRecord {
    double t = 0.0;
    long step = 0;
    double eta = 0.0;
    double W_k = 0.0;
    double Phi_pq = 0.0;
    double residual_var = 0.0;
    double residual_c = 0.0;
    double h_min = 0.0;
    double h_max = 0.0;
    double rho_min = 0.0;
    double rho_max = 0.0;
    double grad_h_max = 0.0;
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double min_eig_b = 0.0;
    double dt_used = 0.0;

    bool all_finite() const;
};

// Field names in output order; they match the members above.
const std::vector<std::string>& diagnostics_field_names();

// Values in the order of diagnostics_field_names().
std::vector<double> diagnostics_values(const DiagnosticsRecord& r);

DiagnosticsRecord monitor(const FlowState& state, const FlowParams& params);

// Running [min, max] of each bound monitor over the records it has seen.
struct BoundBrackets {
    struct Range {
        double lo = 0.0;
        double hi = 0.0;
    };
    Range h;
    Range rho;
    Range grad_h;
    Range eta;
    Range sigma;
    Range min_eig_b;
    bool empty = true;

    void include(const DiagnosticsRecord& r);
};

}  // namespace cmflow
