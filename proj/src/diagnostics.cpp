#include "cmflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "cmflow/flow_engine.hpp"

namespace cmflow {

const std::vector<std::string>& diagnostics_field_names() {
    static const std::vector<std::string> names{
        "t",       "step",    "eta",        "W_k",       "Phi_pq",    "residual_var",
        "residual_c", "h_min", "h_max",     "rho_min",   "rho_max",   "grad_h_max",
        "sigma_min", "sigma_max", "min_eig_b", "dt_used"};
    return names;
}

std::vector<double> diagnostics_values(const DiagnosticsRecord& r) {
    return {r.t,          static_cast<double>(r.step),
            r.eta,        r.W_k,
            r.Phi_pq,     r.residual_var,
            r.residual_c, r.h_min,
            r.h_max,      r.rho_min,
            r.rho_max,    r.grad_h_max,
            r.sigma_min,  r.sigma_max,
            r.min_eig_b,  r.dt_used};
}

bool DiagnosticsRecord::all_finite() const {
    const auto v = diagnostics_values(*this);
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

DiagnosticsRecord monitor(const FlowState& state, const FlowParams& params) {
    const SphereGrid& grid = *params.f.grid();
    const Evaluation& e = state.eval;
    const BodyGeometry& g = e.geometry;
    const Residual res = summarize_ratio(e.ratio, grid);

    double grad_max = 0.0;
    for (std::size_t i = 0; i < g.grad_h.size(); ++i) {
        grad_max = std::max(grad_max, g.grad_h.norm(i));
    }
    DiagnosticsRecord r;
    r.t = state.t;
    r.step = state.step;
    r.eta = e.eta;
    r.W_k = e.h_sigma / grid.dim_n();
    r.Phi_pq = e.phi;
    r.residual_var = res.var;
    r.residual_c = res.c;
    r.h_min = g.h.min();
    r.h_max = g.h.max();
    r.rho_min = g.rho.min();
    r.rho_max = g.rho.max();
    r.grad_h_max = grad_max;
    r.sigma_min = g.sigma.min();
    r.sigma_max = g.sigma.max();
    r.min_eig_b = g.min_eig_b;
    r.dt_used = state.last_dt;
    return r;
}

void BoundBrackets::include(const DiagnosticsRecord& r) {
    auto widen = [this](Range& range, double lo, double hi) {
        if (empty) {
            range = {lo, hi};
        } else {
            range.lo = std::min(range.lo, lo);
            range.hi = std::max(range.hi, hi);
        }
    };
    widen(h, r.h_min, r.h_max);
    widen(rho, r.rho_min, r.rho_max);
    widen(grad_h, r.grad_h_max, r.grad_h_max);
    widen(eta, r.eta, r.eta);
    widen(sigma, r.sigma_min, r.sigma_max);
    widen(min_eig_b, r.min_eig_b, r.min_eig_b);
    empty = false;
}

}  // namespace cmflow
