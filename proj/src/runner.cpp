#include "cmflow/runner.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <random>

namespace cmflow {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// Monitored functionals that get a plot-data file.
const std::vector<std::string> kPlotted{"eta", "W_k", "Phi_pq", "residual_var", "residual_c"};

double plotted_value(const DiagnosticsRecord& r, std::size_t i) {
    switch (i) {
        case 0:
            return r.eta;
        case 1:
            return r.W_k;
        case 2:
            return r.Phi_pq;
        case 3:
            return r.residual_var;
        default:
            return r.residual_c;
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_output(const fs::path& file) {
    std::ofstream out(file);
    if (!out) {
        throw FilesystemError("cannot write '" + file.string() + "'");
    }
    return out;
}

void write_json(const fs::path& file, const ordered_json& j) {
    auto out = open_output(file);
    out << j.dump(2) << '\n';
}

ordered_json brackets_json(const BoundBrackets& b) {
    if (b.empty) {
        return nullptr;
    }
    auto range = [](const BoundBrackets::Range& r) { return ordered_json::array({r.lo, r.hi}); };
    return {{"h", range(b.h)},         {"rho", range(b.rho)},     {"grad_h", range(b.grad_h)},
            {"eta", range(b.eta)},     {"sigma", range(b.sigma)}, {"min_eig_b", range(b.min_eig_b)}};
}

ordered_json theory_json(const FlowParams& params) {
    return {{"scale_degree", params.scale_degree()},
            {"outside_theory", params.outside_theory()},
            {"in_uniqueness_regime", params.in_uniqueness_regime()}};
}

ordered_json run_summary(const RunResult& r) {
    return {{"status", to_string(r.status)},
            {"step", r.state.step},
            {"t", r.state.t},
            {"residual_var", r.state.last_diag.residual_var},
            {"residual_c", r.state.last_diag.residual_c},
            {"max_wk_decrease", r.max_wk_decrease},
            {"message", r.message}};
}

void write_field(const fs::path& file, const ScalarField& h) {
    auto out = open_output(file);
    const SphereGrid& g = *h.grid();
    out << (g.dim_n() == 2 ? "node,x,y,h\n" : "node,x,y,z,h\n");
    for (std::size_t i = 0; i < h.size(); ++i) {
        const Vec3& x = g.nodes()[i];
        out << i << ',' << fmt(x[0]) << ',' << fmt(x[1]);
        if (g.dim_n() == 3) {
            out << ',' << fmt(x[2]);
        }
        out << ',' << fmt(h[i]) << '\n';
    }
}

ScalarField shift_field(const ScalarField& v, int m) {
    const SphereGrid& g = *v.grid();
    const std::size_t na = static_cast<std::size_t>(g.resolution().azimuth);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t ring = i / na;
        const std::size_t j = i % na;
        out[ring * na + (j + static_cast<std::size_t>(m)) % na] = v[i];
    }
    return ScalarField(v.grid(), std::move(out));
}

struct Check {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string note;
};

ordered_json check_json(const Check& c) {
    return {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance}, {"note", c.note}};
}

double fixed_dt_phi_drift(const ScalarField& h0, FlowParams params, double dt, long steps, bool& ok) {
    params.controls.fixed_dt = true;
    params.controls.dt_init = dt;
    params.controls.max_steps = steps;
    params.controls.tol_residual = 0.0;
    params.controls.tol_rhs = 0.0;
    params.controls.trace_every = steps;
    const RunResult r = run(h0, params);
    ok = r.status == RunStatus::max_steps;
    return std::abs(r.trace.back().Phi_pq - r.trace.front().Phi_pq) / r.trace.front().Phi_pq;
}

Outcome finish(const RunConfig& c, const std::string& status, int exit_code, ordered_json extra) {
    Outcome o;
    o.exit_code = exit_code;
    o.record = {{"event", "final"}, {"mode", to_string(c.mode)}, {"status", status}, {"exit_code", exit_code}};
    for (auto& [key, value] : extra.items()) {
        o.record[key] = value;
    }
    return o;
}

Outcome execute_run(const RunConfig& c, const GridPtr& grid, const FlowParams& params, const fs::path& dir) {
    const ScalarField h0 = build_body(c.h0, grid, c, "h0");
    DiagnosticsWriter writer(dir, c.emit_every);
    const RunResult r = run(h0, params, writer.sink());
    writer.finish(r.state.last_diag);
    write_solution(dir / "solution.csv", r.state, params);

    ordered_json manifest{{"config", to_json(c)}, {"residual_c", r.state.last_diag.residual_c}};
    manifest["run"] = run_summary(r);
    manifest["theory"] = theory_json(params);
    manifest["bound_brackets"] = brackets_json(r.brackets);
    write_json(dir / "manifest.json", manifest);
    return finish(c, to_string(r.status), exit_code_for(r.status), run_summary(r));
}

Outcome execute_verify(const RunConfig& c, const GridPtr& grid, const FlowParams& params, const fs::path& dir) {
    const ScalarField h0 = build_body(c.h0, grid, c, "h0");
    std::vector<Check> checks;

    DiagnosticsWriter writer(dir, c.emit_every);
    const RunResult main = run(h0, params, writer.sink());
    writer.finish(main.state.last_diag);
    write_solution(dir / "solution.csv", main.state, params);
    checks.push_back({"monotonicity",
                      main.status != RunStatus::monotonicity_violation &&
                          main.status != RunStatus::convexity_breakdown &&
                          main.max_wk_decrease <= params.controls.monotonicity_tol,
                      main.max_wk_decrease, params.controls.monotonicity_tol,
                      "largest per-step relative decrease of W_k; run status " +
                          std::string(to_string(main.status))});

    {
        Check check{"conservation", true, 0.0, 0.0, ""};
        if (c.q != c.dim_n) {
            check.note = "skipped: Phi_{p,q} in the normal parametrization is conserved only for q = n";
        } else {
            const long steps = 200;
            const double dt = params.controls.dt_init;
            bool ok_a = false;
            bool ok_b = false;
            const double a = fixed_dt_phi_drift(h0, params, dt, steps, ok_a);
            const double b = fixed_dt_phi_drift(h0, params, dt / 2, 2 * steps, ok_b);
            const bool heun = params.controls.integrator == Integrator::heun;
            check.tolerance = heun ? 3.5 : 1.8;
            check.value = b > 0.0 ? a / b : INFINITY;
            check.passed = ok_a && ok_b && (a <= 1e-13 || check.value >= check.tolerance);
            check.note = "drift ratio when dt halves over t = " + fmt(steps * dt) + " (drift " + fmt(a) +
                         " at dt = " + fmt(dt) + ")";
            if (!ok_a || !ok_b) {
                check.note += "; fixed-dt run did not complete, dt_init may exceed the stability limit";
            }
        }
        checks.push_back(check);
    }

    {
        // identical dt sequence for h0 and 3 h0
        FlowState a = FlowState::initial(h0, params);
        FlowParams fixed = params;
        fixed.controls.fixed_dt = true;
        FlowState b = FlowState::initial(3.0 * h0, fixed);
        double err = 0.0;
        bool completed = true;
        try {
            for (int i = 0; i < 50; ++i) {
                a = step(a, params);
                fixed.controls.dt_init = a.last_dt;
                b = step(b, fixed);
                err = std::max(err, (b.h() - 3.0 * a.h()).max_abs() / (3.0 * a.h()).max_abs());
            }
        } catch (const ConvexityBreakdown&) {
            completed = false;
        }
        checks.push_back({"scale_equivariance", completed && err <= 1e-12, err, 1e-12,
                          "50 steps from h0 and 3 h0"});
    }

    {
        std::mt19937_64 rng(c.seed);
        const int na = grid->resolution().azimuth;
        const int m = std::uniform_int_distribution<int>(1, na - 1)(rng);
        FlowParams shifted = params;
        shifted.f = shift_field(params.f, m);
        FlowState a = FlowState::initial(h0, params);
        FlowState b = FlowState::initial(shift_field(h0, m), shifted);
        double err = 0.0;
        bool completed = true;
        try {
            for (int i = 0; i < 50; ++i) {
                a = step(a, params);
                b = step(b, shifted);
                err = std::max(err, (shift_field(a.h(), m) - b.h()).max_abs() / a.h().max_abs());
            }
        } catch (const ConvexityBreakdown&) {
            completed = false;
        }
        const double tol = c.dim_n == 2 ? 0.0 : 1e-12;
        checks.push_back({"rotation_equivariance", completed && err <= tol, err, tol,
                          "azimuthal shift by " + std::to_string(m) + " nodes, 50 steps" +
                              (c.dim_n == 2 ? " (exact)" : "")});
    }

    bool all = true;
    ordered_json list = ordered_json::array();
    for (const Check& ch : checks) {
        all = all && ch.passed;
        list.push_back(check_json(ch));
    }
    write_json(dir / "verify_report.json", {{"checks", list}, {"all_passed", all}});
    ordered_json manifest{{"config", to_json(c)}, {"residual_c", main.state.last_diag.residual_c}};
    manifest["run"] = run_summary(main);
    manifest["theory"] = theory_json(params);
    manifest["verify"] = list;
    write_json(dir / "manifest.json", manifest);

    int code = all ? kExitOk : kExitNotConverged;
    if (main.status == RunStatus::convexity_breakdown) {
        code = kExitBreakdown;
    }
    return finish(c, all ? "passed" : "failed", code, {{"checks", list}});
}

Outcome execute_oracle(const RunConfig& c, const GridPtr& grid, const FlowParams& params, const fs::path& dir) {
    const ScalarField h0 = build_body(c.h0, grid, c, "h0");
    DiagnosticsWriter writer(dir, c.emit_every);
    const RunResult r = run(h0, params, writer.sink());
    writer.finish(r.state.last_diag);
    write_solution(dir / "solution.csv", r.state, params);

    ordered_json manifest{{"config", to_json(c)}, {"residual_c", r.state.last_diag.residual_c}};
    manifest["run"] = run_summary(r);
    manifest["theory"] = theory_json(params);
    if (r.status != RunStatus::converged) {
        write_json(dir / "manifest.json", manifest);
        return finish(c, to_string(r.status), exit_code_for(r.status), run_summary(r));
    }

    const double d = params.scale_degree();
    const ScalarField flow_limit = normalize_solution(r.state.h(), r.state.last_diag.residual_c, d);
    StationaryProblem problem{params, c.oracle.c_mode, c.oracle.c, c.oracle.newton_tol, c.oracle.newton_max_iter};
    // A ball matching the size of the limit; the Newton iteration never sees the flow's shape.
    const ScalarField h_init = grid->constant(mean(flow_limit, *grid));
    const NewtonResult newton = newton_solve(problem, h_init);
    write_field(dir / "newton_solution.csv", newton.h);

    const ComparisonReport report = compare_solutions(params, {r.state.h(), newton.h},
                                                      {r.state.last_diag.residual_c, newton.c},
                                                      {"converged", "converged"});
    const double tol = 10.0 * std::max(params.controls.tol_residual, c.oracle.newton_tol);
    ordered_json rep{{"scale_degree", report.scale_degree},
                     {"normalized_distance", report.normalized_distance},
                     {"tolerance", tol},
                     {"c_values", report.c_values},
                     {"newton_iterations", newton.iterations},
                     {"newton_residual", newton.residual},
                     {"markers", report.markers}};
    if (c.f.kind == FieldSpec::Kind::manufactured) {
        const ScalarField target = build_body(c.f.target.at(0), grid, c, "f.manufactured");
        const ScalarField reference = d != 0.0 ? target : normalize_solution(target, 1.0, 0.0);
        rep["distance_to_target"] = relative_distance(flow_limit, reference);
    }
    const bool passed = report.normalized_distance <= tol;
    rep["passed"] = passed;
    write_json(dir / "oracle_report.json", rep);
    manifest["oracle"] = rep;
    write_json(dir / "manifest.json", manifest);
    return finish(c, passed ? "agreed" : "disagreed", passed ? kExitOk : kExitNotConverged, rep);
}

Outcome execute_unique(const RunConfig& c, const GridPtr& grid, const FlowParams& params, const fs::path& dir) {
    std::vector<ScalarField> bodies;
    for (std::size_t i = 0; i < c.initial_bodies.size(); ++i) {
        bodies.push_back(build_body(c.initial_bodies[i], grid, c, "initial_bodies[" + std::to_string(i) + "]"));
    }
    std::vector<std::unique_ptr<DiagnosticsWriter>> writers;
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        const fs::path sub = dir / ("member_" + std::to_string(i));
        prepare_output_dir(sub);
        writers.push_back(std::make_unique<DiagnosticsWriter>(sub, c.emit_every));
    }
    std::vector<std::optional<DiagnosticsRecord>> last(bodies.size());
    const ComparisonReport report = uniqueness_experiment(params, bodies, [&](std::size_t i) -> DiagnosticsSink {
        DiagnosticsSink inner = writers[i]->sink();
        return [inner, &last, i](const DiagnosticsRecord& r) {
            last[i] = r;
            inner(r);
        };
    });
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        if (last[i]) {
            writers[i]->finish(*last[i]);
        }
        write_field(dir / ("member_" + std::to_string(i)) / "normalized.csv", report.normalized[i]);
    }

    const bool converged = report.all_converged();
    const bool asserted = report.in_uniqueness_regime;
    const bool passed = converged && (!asserted || report.normalized_distance <= c.oracle.unique_tol);
    ordered_json rep{{"scale_degree", report.scale_degree},
                     {"normalized_distance", report.normalized_distance},
                     {"tolerance", c.oracle.unique_tol},
                     {"pairwise", report.pairwise},
                     {"c_values", report.c_values},
                     {"member_status", report.member_status},
                     {"in_uniqueness_regime", report.in_uniqueness_regime},
                     {"markers", report.markers},
                     {"passed", passed}};
    write_json(dir / "unique_report.json", rep);
    ordered_json manifest{{"config", to_json(c)}, {"residual_c", report.c_values}};
    manifest["theory"] = theory_json(params);
    manifest["unique"] = rep;
    write_json(dir / "manifest.json", manifest);

    int code = passed ? kExitOk : kExitNotConverged;
    for (const auto& s : report.member_status) {
        if (s == to_string(RunStatus::convexity_breakdown) || s == to_string(RunStatus::monotonicity_violation)) {
            code = kExitBreakdown;
        }
    }
    return finish(c, passed ? "passed" : "failed", code, rep);
}

}  // namespace

int exit_code_for(RunStatus s) {
    switch (s) {
        case RunStatus::converged:
            return kExitOk;
        case RunStatus::max_steps:
            return kExitNotConverged;
        case RunStatus::convexity_breakdown:
        case RunStatus::monotonicity_violation:
            return kExitBreakdown;
    }
    return kExitNotConverged;
}

void prepare_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw FilesystemError("cannot create output directory '" + dir.string() + "'");
    }
    const fs::path probe = dir / ".cmflow_write_probe";
    {
        std::ofstream out(probe);
        if (!(out << "ok")) {
            throw FilesystemError("output directory '" + dir.string() + "' is not writable");
        }
    }
    fs::remove(probe, ec);
}

Outcome execute(const RunConfig& config) {
    const fs::path dir = config.output_dir;
    prepare_output_dir(dir);
    const GridPtr grid = make_grid(config);
    FlowParams params = make_params(config, grid);
    // Emitted records go straight to disk; the in-memory trace only needs its endpoints.
    params.controls.trace_every = 1000000;
    switch (config.mode) {
        case Mode::run:
            return execute_run(config, grid, params, dir);
        case Mode::verify:
            return execute_verify(config, grid, params, dir);
        case Mode::oracle:
            return execute_oracle(config, grid, params, dir);
        case Mode::unique:
            return execute_unique(config, grid, params, dir);
    }
    throw InternalError("unknown mode");
}

Outcome error_outcome(const std::exception& e) {
    std::string kind = "Error";
    int code = kExitConfig;
    if (dynamic_cast<const ConfigError*>(&e)) {
        kind = "ConfigError";
    } else if (dynamic_cast<const FilesystemError*>(&e)) {
        kind = "FilesystemError";
    } else if (dynamic_cast<const ModeError*>(&e)) {
        kind = "ModeError";
    } else if (dynamic_cast<const InputError*>(&e)) {
        kind = "InputError";
    } else if (dynamic_cast<const UsageError*>(&e)) {
        kind = "UsageError";
    } else if (dynamic_cast<const DomainError*>(&e)) {
        kind = "DomainError";
        code = kExitBreakdown;
    } else if (dynamic_cast<const InternalError*>(&e)) {
        kind = "InternalError";
        code = kExitNotConverged;
    }
    Outcome o;
    o.exit_code = code;
    o.record = {{"event", "error"}, {"kind", kind}, {"message", e.what()}, {"exit_code", code}};
    return o;
}

DiagnosticsWriter::DiagnosticsWriter(const fs::path& dir, long every)
    : every_(every), diagnostics_(open_output(dir / "diagnostics.jsonl")) {
    for (const auto& name : kPlotted) {
        plots_.push_back(open_output(dir / ("plot_" + name + ".dat")));
        plots_.back() << "# t " << name << '\n';
    }
}

DiagnosticsSink DiagnosticsWriter::sink() {
    return [this](const DiagnosticsRecord& r) {
        if (r.step % every_ == 0) {
            write(r);
        }
    };
}

void DiagnosticsWriter::finish(const DiagnosticsRecord& last) {
    if (last.step != last_step_) {
        write(last);
    }
    diagnostics_.flush();
    for (auto& p : plots_) {
        p.flush();
    }
}

void DiagnosticsWriter::write(const DiagnosticsRecord& r) {
    diagnostics_ << record_json(r).dump() << '\n';
    for (std::size_t i = 0; i < plots_.size(); ++i) {
        plots_[i] << fmt(r.t) << ' ' << fmt(plotted_value(r, i)) << '\n';
    }
    last_step_ = r.step;
    ++written_;
}

ordered_json record_json(const DiagnosticsRecord& r) {
    ordered_json j;
    const auto& names = diagnostics_field_names();
    const auto values = diagnostics_values(r);
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == "step") {
            j[names[i]] = r.step;
        } else {
            j[names[i]] = values[i];
        }
    }
    return j;
}

void write_solution(const fs::path& file, const FlowState& state, const FlowParams& params) {
    auto out = open_output(file);
    const SphereGrid& g = *params.f.grid();
    const BodyGeometry& geo = state.geometry();
    out << (g.dim_n() == 2 ? "node,x,y,h,rho,sigma_k,residual\n" : "node,x,y,z,h,rho,sigma_k,residual\n");
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3& x = g.nodes()[i];
        out << i << ',' << fmt(x[0]) << ',' << fmt(x[1]);
        if (g.dim_n() == 3) {
            out << ',' << fmt(x[2]);
        }
        out << ',' << fmt(geo.h[i]) << ',' << fmt(geo.rho[i]) << ',' << fmt(geo.sigma[i]) << ','
            << fmt(state.eval.ratio[i]) << '\n';
    }
}

}  // namespace cmflow
