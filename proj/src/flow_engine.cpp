#include "cmflow/flow_engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cmflow {

int FlowParams::dim_n() const { return f.grid()->dim_n(); }

void FlowParams::validate() const {
    if (p == 0.0) {
        throw ConfigError("exponent p must satisfy p ≠ 0");
    }
    require_valid_k(k, dim_n());
    if (!std::isfinite(p) || !std::isfinite(q)) {
        throw ConfigError("exponents p and q must be finite");
    }
    if (!(f.min() > 0.0)) {
        throw ConfigError("density f must be positive at every node");
    }
    const FlowControls& c = controls;
    if (!(c.dt_init > 0.0)) {
        throw ConfigError("dt_init must be positive");
    }
    if (!(c.dt_safety > 0.0 && c.dt_safety < 1.0)) {
        throw ConfigError("dt_safety must lie in (0, 1)");
    }
    if (c.max_steps < 0 || c.trace_every < 1) {
        throw ConfigError("max_steps must be >= 0 and trace_every >= 1");
    }
    if (!(c.epsilon_convex >= 0.0) || !(c.monotonicity_tol >= 0.0) || !(c.tol_residual >= 0.0) ||
        !(c.tol_rhs >= 0.0)) {
        throw ConfigError("tolerances must be non-negative");
    }
}

bool FlowParams::outside_theory() const {
    const double n = dim_n();
    return q > std::min(n + p, n);
}

bool FlowParams::in_uniqueness_regime() const {
    const double n = dim_n();
    return k >= n + p - q - 1.0 && q <= n + p - 1.0;
}

double FlowParams::scale_degree() const { return 1.0 - p + q - dim_n() + k; }

Evaluation evaluate(const ScalarField& h, const FlowParams& params) {
    const SphereGrid& grid = *params.f.grid();
    require_same_grid(h.grid(), grid, "evaluate");
    BodyGeometry geo = body_geometry(h, grid, params.k);
    const double threshold = params.controls.epsilon_convex * mean(h, grid);
    if (!(geo.min_eig_b > threshold)) {
        throw DomainError("body is not strictly convex: min eigenvalue of b = " +
                          std::to_string(geo.min_eig_b));
    }

    const double e_h = 1.0 - params.p;
    const double e_rho = params.q - grid.dim_n();
    const std::size_t size = h.size();
    std::vector<double> ratio(size);
    std::vector<double> h_sigma(size);
    std::vector<double> phi(size);
    for (std::size_t i = 0; i < size; ++i) {
        ratio[i] = power(h[i], e_h) * power(geo.rho[i], e_rho) * geo.sigma[i] / params.f[i];
        h_sigma[i] = h[i] * geo.sigma[i];
        // f h^p rho^(n-q) rewritten through the ratio
        phi[i] = h_sigma[i] / ratio[i];
    }
    Evaluation out{std::move(geo), ScalarField(h.grid(), std::move(ratio)), 0.0, 0.0, 0.0,
                   ScalarField(h.grid(), std::vector<double>(size))};
    out.h_sigma = integrate(ScalarField(h.grid(), std::move(h_sigma)), grid);
    out.phi = integrate(ScalarField(h.grid(), std::move(phi)), grid);
    if (!(out.h_sigma > 0.0)) {
        throw InternalError("integral of h sigma_k is not positive on a convex body");
    }
    out.eta = out.phi / out.h_sigma;
    for (std::size_t i = 0; i < size; ++i) {
        out.rhs[i] = h[i] * (out.eta * out.ratio[i] - 1.0);
    }
    return out;
}

FlowState FlowState::initial(const ScalarField& h0, const FlowParams& params) {
    FlowState s{0.0, 0, 0.0, evaluate(h0, params), {}};
    s.last_diag = monitor(s, params);
    return s;
}

double eta(const ScalarField& h, const SphereGrid& grid, const FlowParams& params) {
    require_same_grid(h.grid(), grid, "eta");
    return evaluate(h, params).eta;
}

ScalarField flow_rhs(const ScalarField& h, const SphereGrid& grid, const FlowParams& params) {
    require_same_grid(h.grid(), grid, "flow_rhs");
    return evaluate(h, params).rhs;
}

double adaptive_dt(const FlowState& state, const FlowParams& params) {
    const FlowControls& c = params.controls;
    if (c.fixed_dt) {
        return c.dt_init;
    }
    const Evaluation& e = state.eval;
    const BodyGeometry& g = e.geometry;
    const int n = params.dim_n();
    double coef = 0.0;
    for (std::size_t i = 0; i < g.h.size(); ++i) {
        // (eta / f) h^(2-p) rho^(q-n) equals eta h r / sigma_k
        const double a = e.eta * g.h[i] * e.ratio[i] / g.sigma[i];
        coef = std::max(coef, a * sigma_k_derivative_norm(g.b[i], n, params.k));
    }
    const double spacing = params.f.grid()->spacing();
    const double dt = c.dt_safety * spacing * spacing / coef;
    return std::min(dt, c.dt_init);
}

namespace {

Evaluation advance(const FlowState& s, const FlowParams& params, double dt) {
    ScalarField h = s.h();
    const ScalarField& k1 = s.eval.rhs;
    for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] += dt * k1[i];
    }
    if (params.controls.integrator == Integrator::euler) {
        return evaluate(h, params);
    }
    const Evaluation mid = evaluate(h, params);
    h = s.h();
    for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] += 0.5 * dt * (k1[i] + mid.rhs[i]);
    }
    return evaluate(h, params);
}

}  // namespace

FlowState step(const FlowState& state, const FlowParams& params) {
    constexpr int kMaxHalvings = 20;
    double dt = adaptive_dt(state, params);
    std::string last_error;
    for (int attempt = 0; attempt <= kMaxHalvings; ++attempt, dt *= 0.5) {
        try {
            FlowState next{state.t + dt, state.step + 1, dt, advance(state, params, dt), {}};
            next.last_diag = monitor(next, params);
            return next;
        } catch (const DomainError& e) {
            last_error = e.what();
        }
    }
    throw ConvexityBreakdown("convexity lost at step " + std::to_string(state.step + 1) +
                                 " after " + std::to_string(kMaxHalvings) +
                                 " dt halvings: " + last_error,
                             state);
}

const char* to_string(RunStatus s) {
    switch (s) {
        case RunStatus::converged:
            return "converged";
        case RunStatus::max_steps:
            return "max_steps";
        case RunStatus::convexity_breakdown:
            return "convexity_breakdown";
        case RunStatus::monotonicity_violation:
            return "monotonicity_violation";
    }
    return "unknown";
}

namespace {

bool converged(const FlowState& s, const FlowParams& params) {
    const FlowControls& c = params.controls;
    if (s.last_diag.residual_var < c.tol_residual) {
        return true;
    }
    const double scale = mean(s.h(), *params.f.grid());
    return s.eval.rhs.max_abs() < c.tol_rhs * scale;
}

}  // namespace

RunResult run(const ScalarField& h0, const FlowParams& params, const DiagnosticsSink& sink) {
    params.validate();
    std::optional<FlowState> start;
    try {
        start = FlowState::initial(h0, params);
    } catch (const DomainError& e) {
        throw InputError(std::string("initial body rejected: ") + e.what());
    }
    RunResult out{RunStatus::max_steps, std::move(*start), {}, {}, 0.0, {}};
    const FlowControls& c = params.controls;

    auto accept = [&] {
        const DiagnosticsRecord& r = out.state.last_diag;
        if (sink) {
            sink(r);
        }
        if (r.step % c.trace_every == 0) {
            out.trace.push_back(r);
        }
        if (r.t >= c.transient_time) {
            out.brackets.include(r);
        }
    };
    accept();

    while (true) {
        if (converged(out.state, params)) {
            out.status = RunStatus::converged;
            break;
        }
        if (out.state.step >= c.max_steps) {
            out.status = RunStatus::max_steps;
            break;
        }
        try {
            FlowState next = step(out.state, params);
            const double w0 = out.state.last_diag.W_k;
            const double decrease = (w0 - next.last_diag.W_k) / w0;
            out.max_wk_decrease = std::max(out.max_wk_decrease, decrease);
            out.state = std::move(next);
            accept();
            if (decrease > c.monotonicity_tol) {
                out.status = RunStatus::monotonicity_violation;
                out.message = "W_k decreased by " + std::to_string(decrease) +
                              " (relative) at step " + std::to_string(out.state.step);
                break;
            }
        } catch (const ConvexityBreakdown& e) {
            out.status = RunStatus::convexity_breakdown;
            out.message = e.what();
            break;
        }
    }
    if (out.trace.back().step != out.state.step) {
        out.trace.push_back(out.state.last_diag);
    }
    return out;
}

}  // namespace cmflow
