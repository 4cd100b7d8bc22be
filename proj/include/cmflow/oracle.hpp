#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmflow/flow_engine.hpp"

namespace cmflow {

// f = h^(1-p) rho^(q-n) sigma_k(b) of a strictly convex target, so that the
// target solves the stationary equation with c = 1.
ScalarField manufactured_f(const ScalarField& h_target, const SphereGrid& grid, double p, double q,
                           int k);

enum class CMode { fixed, free };

struct StationaryProblem {
    FlowParams params;  // k, p, q, f; flow controls are ignored
    CMode c_mode = CMode::fixed;
    double c = 1.0;     // the constant in fixed mode, the starting guess in free mode
    double newton_tol = 1e-10;
    int newton_max_iter = 50;
};

// F(h) = c h^(1-p) rho^(q-n) sigma_k - f, per node.
Eigen::VectorXd stationary_residual(const StationaryProblem& problem, const ScalarField& h,
                                    double c);

// Central-difference Jacobian of stationary_residual with respect to h.
Eigen::MatrixXd newton_jacobian(const StationaryProblem& problem, const ScalarField& h, double c);

struct NewtonResult {
    ScalarField h;
    double c = 0.0;
    int iterations = 0;
    double residual = 0.0;  // ||F||_inf / ||f||_inf
};

// Damped Newton. In free mode c is an unknown and integrate(h) is pinned to
// integrate(h_init). Throws ModeError for fixed c when the scale degree is 0
// or the Jacobian is singular, DomainError when no convex iterate reduces the
// residual, and InternalError when the iteration budget runs out.
NewtonResult newton_solve(const StationaryProblem& problem, const ScalarField& h_init);

// c^(1/d) h when d != 0 (a solution with constant 1); h / mean(h) when d == 0.
ScalarField normalize_solution(const ScalarField& h, double c, double d);

// max |a - b| / max(|a|_inf, |b|_inf).
double relative_distance(const ScalarField& a, const ScalarField& b);

inline constexpr const char* kOutsideUniquenessRegime = "outside-uniqueness-regime";

struct ComparisonReport {
    double scale_degree = 0.0;
    double normalized_distance = 0.0;  // largest pairwise distance
    std::vector<double> c_values;
    std::vector<std::vector<double>> pairwise;  // -1 where a member failed
    bool in_uniqueness_regime = false;
    std::vector<std::string> markers;
    std::vector<std::string> member_status;
    std::vector<ScalarField> normalized;  // one per member (the raw final h on failure)

    bool all_converged() const;
};

// Gives member i its own diagnostics sink.
using SinkFactory = std::function<DiagnosticsSink(std::size_t)>;

// Flows every body (concurrently) and compares the normalized limits.
ComparisonReport uniqueness_experiment(const FlowParams& params,
                                       const std::vector<ScalarField>& initial_bodies,
                                       const SinkFactory& sink_for = {});

// Report for a set of already computed (h, c) pairs.
ComparisonReport compare_solutions(const FlowParams& params, const std::vector<ScalarField>& h,
                                   const std::vector<double>& c,
                                   const std::vector<std::string>& status);

}  // namespace cmflow
