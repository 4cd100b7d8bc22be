#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "cmflow/convex_geometry.hpp"
#include "cmflow/diagnostics.hpp"
#include "cmflow/errors.hpp"
#include "cmflow/fields.hpp"
#include "cmflow/sphere_grid.hpp"

namespace cmflow {

enum class Integrator { euler, heun };

struct FlowControls {
    double dt_init = 1e-2;
    double dt_safety = 0.1;
    double tol_residual = 1e-8;
    double tol_rhs = 1e-12;
    long max_steps = 1'000'000;
    double epsilon_convex = kDefaultConvexTolerance;  // relative to mean(h)
    double monotonicity_tol = 1e-8;                   // per step, relative to W_k
    bool fixed_dt = false;                            // use dt_init every step
    Integrator integrator = Integrator::euler;
    long trace_every = 1;       // keep every m-th record in RunResult::trace
    double transient_time = 1.0;  // bound brackets start after this flow time

    friend bool operator==(const FlowControls&, const FlowControls&) = default;
};

struct FlowParams {
    int k = 1;
    double p = 2.0;
    double q = 1.0;
    ScalarField f;
    FlowControls controls;

    int dim_n() const;
    // Throws ConfigError on p == 0, invalid k, non-positive f or bad controls.
    void validate() const;
    // q > min(n + p, n).
    bool outside_theory() const;
    // k >= n + p - q - 1 and q <= n + p - 1.
    bool in_uniqueness_regime() const;
    // Degree of h -> h^(1-p) rho^(q-n) sigma_k under scaling, 1 - p + q - n + k.
    double scale_degree() const;
};

// Everything derived from one support function.
struct Evaluation {
    BodyGeometry geometry;
    ScalarField ratio;   // h^(1-p) rho^(q-n) sigma_k / f
    double h_sigma = 0.0;  // integral of h sigma_k
    double phi = 0.0;      // integral of f h^p rho^(n-q)
    double eta = 0.0;
    ScalarField rhs;
};

// Throws DomainError when h is not positive or not strictly convex.
Evaluation evaluate(const ScalarField& h, const FlowParams& params);

struct FlowState {
    double t = 0.0;
    long step = 0;
    double last_dt = 0.0;  // dt of the step that produced this state
    Evaluation eval;  // recomputed whenever h changes
    DiagnosticsRecord last_diag;

    const ScalarField& h() const { return eval.geometry.h; }
    const BodyGeometry& geometry() const { return eval.geometry; }
    double eta() const { return eval.eta; }

    static FlowState initial(const ScalarField& h0, const FlowParams& params);
};

double eta(const ScalarField& h, const SphereGrid& grid, const FlowParams& params);

ScalarField flow_rhs(const ScalarField& h, const SphereGrid& grid, const FlowParams& params);

double adaptive_dt(const FlowState& state, const FlowParams& params);

class ConvexityBreakdown : public DomainError {
public:
    ConvexityBreakdown(const std::string& what, FlowState last_good)
        : DomainError(what), last_good_(std::move(last_good)) {}
    const FlowState& last_good() const { return last_good_; }

private:
    FlowState last_good_;
};

// One accepted step. Halves dt up to 20 times while the update leaves the
// convex cone, then throws ConvexityBreakdown.
FlowState step(const FlowState& state, const FlowParams& params);

enum class RunStatus { converged, max_steps, convexity_breakdown, monotonicity_violation };

const char* to_string(RunStatus s);

using DiagnosticsSink = std::function<void(const DiagnosticsRecord&)>;

struct RunResult {
    RunStatus status = RunStatus::max_steps;
    FlowState state;
    std::vector<DiagnosticsRecord> trace;
    BoundBrackets brackets;
    double max_wk_decrease = 0.0;  // largest per-step relative decrease of W_k
    std::string message;
};

// Throws InputError if h0 is not positive and strictly convex.
RunResult run(const ScalarField& h0, const FlowParams& params, const DiagnosticsSink& sink = {});

}  // namespace cmflow
