// Acceptance gate: one PASS/FAIL line per criterion. Tolerances are fixed
// here and must not be loosened. Pass criterion numbers as arguments to run
// a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "cmflow/flow_engine.hpp"
#include "cmflow/oracle.hpp"
#include "test_support.hpp"

using namespace cmflow;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
    }
    return r;
}

double sup_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return diff / scale;
}

std::vector<double> values(const ScalarField& f) { return {f.values().begin(), f.values().end()}; }

// The manufactured S^1 problem: h* = 1 + 0.1 cos 2theta, k = 1, p = 1.5, q = 2.
// Since q = n the rho factor drops out and f = h*^(1-p) (h* + h*'') in closed form.
double h_star(double t) { return 1.0 + 0.1 * std::cos(2 * t); }
double f_star(double t) { return std::pow(h_star(t), -0.5) * (1.0 - 0.3 * std::cos(2 * t)); }

FlowParams manufactured_params(const GridPtr& g) {
    std::vector<double> f(g->size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = f_star(g->theta(i));
    }
    return FlowParams{1, 1.5, 2.0, ScalarField(g, std::move(f)), {}};
}

// Phi with q = n: sum of w f h^p, computed without the library's functionals.
double phi_q_eq_n(const ScalarField& h, const FlowParams& params, const SphereGrid& g) {
    std::vector<double> terms(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        terms[i] = g.weights()[i] * params.f[i] * std::pow(h[i], params.p);
    }
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) {
        s += t;
    }
    return s;
}

Verdict criterion1() {
    double worst = 0.0;
    int cases = 0;
    for (const int n : {2, 3}) {
        const GridPtr g = n == 2 ? SphereGrid::build(2, Resolution::circle(128))
                                 : SphereGrid::build(3, Resolution::sphere(32, 64));
        for (int k = 1; k <= n - 1; ++k) {
            for (const auto [p, q] : {std::pair{2.0, 1.0}, std::pair{1.5, 2.0}, std::pair{-1.0, 3.5}}) {
                const FlowParams params{k, p, q, g->constant(binomial(n - 1, k)), {}};
                for (const double r : {0.5, 1.0, 2.0}) {
                    const ScalarField rhs = flow_rhs(g->constant(r), *g, params);
                    worst = std::max(worst, rhs.max_abs() / r);
                    ++cases;
                }
            }
        }
    }
    return {worst <= 1e-10, fmt("%d cases (n=2 N=128, n=3 32x64, all k, three (p,q) pairs), max |rhs|/r = %.2e <= 1e-10",
                                cases, worst)};
}

struct ConservationRun {
    double drift = 0.0;
    double max_wk_decrease = 0.0;
    bool completed = false;
};

ConservationRun conservation_run(double dt) {
    const GridPtr g = SphereGrid::build(2, Resolution::circle(64));
    FlowParams params = manufactured_params(g);
    params.controls.fixed_dt = true;
    params.controls.dt_init = dt;
    params.controls.integrator = Integrator::heun;
    params.controls.tol_residual = 0.0;
    params.controls.tol_rhs = 0.0;
    params.controls.max_steps = std::lround(5.0 / dt);
    const ScalarField h0 = g->constant(1.0);
    const RunResult r = run(h0, params);
    ConservationRun out;
    out.completed = r.status == RunStatus::max_steps && std::abs(r.state.t - 5.0) < 1e-9;
    const double phi0 = phi_q_eq_n(h0, params, *g);
    out.drift = std::abs(phi_q_eq_n(r.state.h(), params, *g) - phi0) / phi0;
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
        const double prev = r.trace[i - 1].W_k;
        out.max_wk_decrease = std::max(out.max_wk_decrease, (prev - r.trace[i].W_k) / prev);
    }
    return out;
}

ConservationRun conservation_cache[2];
bool conservation_done = false;

void ensure_conservation_runs() {
    if (!conservation_done) {
        conservation_cache[0] = conservation_run(1e-3);
        conservation_cache[1] = conservation_run(5e-4);
        conservation_done = true;
    }
}

Verdict criterion2() {
    ensure_conservation_runs();
    const auto& a = conservation_cache[0];
    const auto& b = conservation_cache[1];
    const double ratio = a.drift / b.drift;
    return {a.completed && b.completed && a.drift <= 1e-4 && ratio >= 3.5,
            fmt("N=64, Heun, fixed dt, t=5: drift %.2e at dt=1e-3 (<= 1e-4), %.2e at dt=5e-4, ratio %.2f (>= 3.5)",
                a.drift, b.drift, ratio)};
}

Verdict criterion3() {
    ensure_conservation_runs();
    const double worst = std::max(conservation_cache[0].max_wk_decrease, conservation_cache[1].max_wk_decrease);
    return {conservation_cache[0].completed && conservation_cache[1].completed && worst <= 1e-8,
            fmt("largest per-step relative W_1 decrease %.2e (<= 1e-8) over both runs", worst)};
}

Verdict criterion4() {
    const GridPtr g = SphereGrid::build(2, Resolution::circle(256));
    FlowParams params = manufactured_params(g);
    params.controls.tol_residual = 1e-7;
    params.controls.max_steps = 5000000;
    params.controls.trace_every = 1000000;
    const RunResult r = run(g->constant(1.0), params);
    const double var = r.state.last_diag.residual_var;
    const double c = r.state.last_diag.residual_c;
    const double d = params.scale_degree();
    std::vector<double> target(g->size());
    std::vector<double> normalized(g->size());
    for (std::size_t i = 0; i < g->size(); ++i) {
        target[i] = h_star(g->theta(i));
        normalized[i] = std::pow(c, 1.0 / d) * r.state.h()[i];
    }
    const double dist = sup_rel(normalized, target);

    StationaryProblem problem{params, CMode::fixed, 1.0, 1e-10, 50};
    const NewtonResult newton = newton_solve(problem, g->constant(1.0));
    const double newton_vs_flow = sup_rel(values(newton.h), normalized);
    const double newton_vs_target = sup_rel(values(newton.h), target);
    return {r.status == RunStatus::converged && var <= 1e-6 && dist <= 1e-4 && newton_vs_flow <= 1e-5,
            fmt("N=256, %ld steps, residual_var %.2e (<= 1e-6), distance to h* %.2e (<= 1e-4), "
                "Newton vs flow %.2e (<= 1e-5), Newton vs h* %.2e",
                r.state.step, var, dist, newton_vs_flow, newton_vs_target)};
}

// Steps h0 and 3 h0 with the dt schedule chosen by the first trajectory.
double scale_trajectory_error(const FlowParams& params, const ScalarField& h0, int steps) {
    FlowParams fixed = params;
    fixed.controls.fixed_dt = true;
    FlowState a = FlowState::initial(h0, params);
    FlowState b = FlowState::initial(3.0 * h0, fixed);
    double err = 0.0;
    for (int i = 0; i < steps; ++i) {
        a = step(a, params);
        fixed.controls.dt_init = a.last_dt;
        b = step(b, fixed);
        err = std::max(err, sup_rel(values(b.h()), values(3.0 * a.h())));
    }
    return err;
}

Verdict criterion5() {
    const GridPtr c = SphereGrid::build(2, Resolution::circle(256));
    const double e1 = scale_trajectory_error(manufactured_params(c), c->sample([](const Vec3& x) {
        return 1.0 + 0.2 * x[0];
    }), 500);
    const GridPtr s = SphereGrid::build(3, Resolution::sphere(32, 64));
    const FlowParams sp{2, 2.0, 1.0, s->sample([](const Vec3& x) { return 1.0 + 0.1 * x[0] * x[1]; }), {}};
    const double e2 = scale_trajectory_error(sp, s->sample([](const Vec3& x) { return 1.0 + 0.2 * x[2]; }), 500);
    return {std::max(e1, e2) <= 1e-12,
            fmt("500 steps, shared dt schedule: S^1 (N=256) %.2e, S^2 (32x64, k=2) %.2e (<= 1e-12)", e1, e2)};
}

Verdict criterion6() {
    const GridPtr g = SphereGrid::build(2, Resolution::circle(256));
    FlowParams params = manufactured_params(g);
    params.controls.tol_residual = 1e-7;
    params.controls.max_steps = 5000000;
    params.controls.trace_every = 1000000;
    const std::vector<ScalarField> bodies{
        g->constant(1.0), g->sample([](const Vec3& x) { return 1.0 + 0.2 * x[0]; }),
        g->sample([](const Vec3& x) { return 1.5 + 0.1 * std::cos(3 * std::atan2(x[1], x[0])); })};
    const ComparisonReport rep = uniqueness_experiment(params, bodies);
    double worst = 0.0;
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        for (std::size_t j = i + 1; j < bodies.size(); ++j) {
            worst = std::max(worst, sup_rel(values(rep.normalized[i]), values(rep.normalized[j])));
        }
    }
    std::string statuses;
    for (const auto& s : rep.member_status) {
        statuses += (statuses.empty() ? "" : ",") + s;
    }
    return {rep.all_converged() && rep.in_uniqueness_regime && worst <= 1e-3,
            fmt("three bodies, N=256, statuses [%s], in regime %s, max pairwise normalized distance %.2e (<= 1e-3)",
                statuses.c_str(), rep.in_uniqueness_regime ? "yes" : "no", worst)};
}

Verdict criterion7() {
    const GridPtr g = SphereGrid::build(3, Resolution::sphere(32, 64));
    bool pass = true;
    std::string detail;
    for (const int k : {1, 2}) {
        const double ck = binomial(2, k);
        FlowParams params{k, 2.0, 1.0, g->constant(ck), {}};
        params.controls.tol_residual = 1e-5;
        params.controls.max_steps = 5000000;
        params.controls.trace_every = 1000000;
        params.controls.transient_time = 1.0;
        const RunResult r = run(g->sample([](const Vec3& x) { return 1.0 + 0.2 * x[2]; }), params);
        const ScalarField& h = r.state.h();
        const auto [lo, hi] = std::minmax_element(h.values().begin(), h.values().end());
        const double spread = (*hi - *lo) / mean(h, *g);
        const BoundBrackets& b = r.brackets;
        auto inside = [](const BoundBrackets::Range& range, double scale) {
            return range.lo / scale >= 0.5 && range.hi / scale <= 2.0;
        };
        const bool bounded = !b.empty && inside(b.h, 1.0) && inside(b.rho, 1.0) && inside(b.eta, 1.0) &&
                             inside(b.min_eig_b, 1.0) && inside(b.sigma, ck);
        const bool ok = r.status == RunStatus::converged && r.state.last_diag.residual_var <= 1e-5 &&
                        spread <= 1e-4 && bounded;
        pass = pass && ok;
        detail += fmt("%sk=%d: %s after %ld steps (t=%.2f), residual_var %.2e, h spread %.1e (<= 1e-4), "
                      "t>=1 brackets h [%.3f,%.3f] rho [%.3f,%.3f] eta [%.3f,%.3f] min_eig_b [%.3f,%.3f] "
                      "sigma_k/C [%.3f,%.3f]",
                      detail.empty() ? "" : "; ", k, to_string(r.status), r.state.step, r.state.t,
                      r.state.last_diag.residual_var, spread, b.h.lo, b.h.hi, b.rho.lo, b.rho.hi, b.eta.lo,
                      b.eta.hi, b.min_eig_b.lo, b.min_eig_b.hi, b.sigma.lo / ck, b.sigma.hi / ck);
    }
    return {pass, detail};
}

// Least-squares slope of log(error) against log(1/spacing).
double fitted_order(const std::vector<double>& spacing, const std::vector<double>& err) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(err.size());
    for (std::size_t i = 0; i < err.size(); ++i) {
        const double x = -std::log(spacing[i]);
        const double y = std::log(err[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Verdict criterion8() {
    const auto field = cmflow::testing::exponential({0.3, -0.2, 0.4});
    std::vector<double> h2, e2;
    for (const int np : {12, 24, 48}) {
        const GridPtr g = SphereGrid::build(3, Resolution::sphere(np, 2 * np));
        h2.push_back(std::numbers::pi / np);
        e2.push_back(cmflow::testing::hessian_error(field, *g));
    }
    std::vector<double> h1, e1;
    for (const int n : {32, 64, 128}) {
        const GridPtr g = SphereGrid::build(2, Resolution::circle(n), DerivativeScheme::fd4);
        h1.push_back(2 * std::numbers::pi / n);
        e1.push_back(cmflow::testing::hessian_error(cmflow::testing::exponential({0.9, -0.6, 0.0}), *g));
    }
    const double o2 = fitted_order(h2, e2);
    const double o1 = fitted_order(h1, e1);
    return {std::abs(o2 - 7.0) <= 0.5 && std::abs(o1 - 4.0) <= 0.5,
            fmt("S^2 spectral/9-point (12x24, 24x48, 48x96): errors %.2e %.2e %.2e, fitted order %.2f (nominal 7); "
                "S^1 fd4 (32, 64, 128): errors %.2e %.2e %.2e, fitted order %.2f (nominal 4)",
                e2[0], e2[1], e2[2], o2, e1[0], e1[1], e1[2], o1)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"sphere stationarity", criterion1},
        {"Phi conservation", criterion2},
        {"W_k monotonicity", criterion3},
        {"manufactured-solution recovery", criterion4},
        {"scale equivariance", criterion5},
        {"uniqueness", criterion6},
        {"S^2 flow sanity", criterion7},
        {"operator convergence", criterion8},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::atoi(argv[i]));
    }
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.contains(id)) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    v.detail.c_str(), secs);
        std::fflush(stdout);
        failures += v.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
