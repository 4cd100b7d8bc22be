#include "cmflow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

namespace cmflow {

namespace {

bool strictly_convex(const ScalarField& h, const SphereGrid& grid, int k) {
    if (!(h.min() > 0.0)) {
        return false;
    }
    return body_geometry(h, grid, k).min_eig_b > kDefaultConvexTolerance * mean(h, grid);
}

}  // namespace

ScalarField manufactured_f(const ScalarField& h_target, const SphereGrid& grid, double p, double q,
                           int k) {
    const BodyGeometry geo = body_geometry(h_target, grid, k);
    if (!(geo.min_eig_b > kDefaultConvexTolerance * mean(h_target, grid))) {
        throw DomainError("manufactured_f: target body is not strictly convex");
    }
    const double e_rho = q - grid.dim_n();
    std::vector<double> f(h_target.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = power(h_target[i], 1.0 - p) * power(geo.rho[i], e_rho) * geo.sigma[i];
    }
    return ScalarField(h_target.grid(), std::move(f));
}

Eigen::VectorXd stationary_residual(const StationaryProblem& problem, const ScalarField& h,
                                    double c) {
    const FlowParams& prm = problem.params;
    const SphereGrid& grid = *prm.f.grid();
    const BodyGeometry geo = body_geometry(h, grid, prm.k);
    const double e_rho = prm.q - grid.dim_n();
    Eigen::VectorXd r(static_cast<Eigen::Index>(h.size()));
    for (std::size_t i = 0; i < h.size(); ++i) {
        r[static_cast<Eigen::Index>(i)] =
            c * power(h[i], 1.0 - prm.p) * power(geo.rho[i], e_rho) * geo.sigma[i] - prm.f[i];
    }
    return r;
}

Eigen::MatrixXd newton_jacobian(const StationaryProblem& problem, const ScalarField& h, double c) {
    const auto n = static_cast<Eigen::Index>(h.size());
    Eigen::MatrixXd jac(n, n);
    ScalarField probe = h;
    // Central differences: the second derivatives of rho and sigma_2 with
    // respect to nodal values grow like the squared derivative-matrix
    // entries, so forward differences stall near 1e-6 relative accuracy.
    constexpr double step = 1e-6;
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto u = static_cast<std::size_t>(j);
        const double delta = step * std::max(std::abs(h[u]), 1.0);
        probe[u] = h[u] + delta;
        const Eigen::VectorXd plus = stationary_residual(problem, probe, c);
        probe[u] = h[u] - delta;
        jac.col(j) = (plus - stationary_residual(problem, probe, c)) / (2.0 * delta);
        probe[u] = h[u];
    }
    return jac;
}

NewtonResult newton_solve(const StationaryProblem& problem, const ScalarField& h_init) {
    const FlowParams& prm = problem.params;
    prm.validate();
    if (!(problem.newton_tol > 0.0)) {
        throw ConfigError("newton_tol must be positive");
    }
    const SphereGrid& grid = *prm.f.grid();
    require_same_grid(h_init.grid(), grid, "newton_solve");
    if (!strictly_convex(h_init, grid, prm.k)) {
        throw InputError("newton_solve: initial guess is not positive and strictly convex");
    }
    const bool free_c = problem.c_mode == CMode::free;
    if (!free_c && prm.scale_degree() == 0.0) {
        throw ModeError(
            "scale degree d = 0: solutions form a one-parameter scaling family and the fixed-c "
            "Jacobian is singular; use free-c mode");
    }

    const auto n = static_cast<Eigen::Index>(h_init.size());
    const double f_norm = prm.f.max_abs();
    const double area = grid.area();
    const double target_mass = integrate(h_init, grid);
    const auto& w = grid.weights();

    ScalarField h = h_init;
    double c = problem.c;

    // Scaled merit: residual sup-norm, plus the mass constraint in free mode.
    auto merit = [&](const ScalarField& hh, double cc, Eigen::VectorXd& res) {
        res = stationary_residual(problem, hh, cc);
        double m = res.lpNorm<Eigen::Infinity>() / f_norm;
        if (free_c) {
            m = std::max(m, std::abs(integrate(hh, grid) - target_mass) / target_mass);
        }
        return m;
    };

    Eigen::VectorXd res;
    double current = merit(h, c, res);
    for (int iter = 0; iter < problem.newton_max_iter; ++iter) {
        if (current <= problem.newton_tol) {
            return NewtonResult{h, c, iter, current};
        }
        const Eigen::Index size = free_c ? n + 1 : n;
        Eigen::MatrixXd jac(size, size);
        Eigen::VectorXd rhs(size);
        jac.topLeftCorner(n, n) = newton_jacobian(problem, h, c);
        rhs.head(n) = -res;
        if (free_c) {
            // d F / d c = F(h, 1) + f, the constraint row is the quadrature
            jac.col(n).head(n) = stationary_residual(problem, h, 1.0) + Eigen::Map<const Eigen::VectorXd>(prm.f.values().data(), n);
            for (Eigen::Index j = 0; j < n; ++j) {
                jac(n, j) = w[static_cast<std::size_t>(j)] / area;
            }
            jac(n, n) = 0.0;
            rhs[n] = -(integrate(h, grid) - target_mass) / area;
        }
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (lu.rank() < size) {
            throw ModeError("Newton Jacobian is singular (rank " + std::to_string(lu.rank()) +
                            " of " + std::to_string(size) +
                            "); the problem may need free-c mode");
        }
        const Eigen::VectorXd delta = lu.solve(rhs);

        // Damped update: halve until the iterate is convex and the merit drops.
        double lambda = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 40 && !accepted; ++halving, lambda *= 0.5) {
            ScalarField trial = h;
            for (Eigen::Index j = 0; j < n; ++j) {
                trial[static_cast<std::size_t>(j)] += lambda * delta[j];
            }
            const double trial_c = free_c ? c + lambda * delta[n] : c;
            if (!(trial_c > 0.0) || !strictly_convex(trial, grid, prm.k)) {
                continue;
            }
            Eigen::VectorXd trial_res;
            const double m = merit(trial, trial_c, trial_res);
            if (m < current) {
                h = std::move(trial);
                c = trial_c;
                res = std::move(trial_res);
                current = m;
                accepted = true;
            }
        }
        if (!accepted) {
            throw DomainError("newton_solve: no damped step stays convex and reduces the residual");
        }
    }
    if (current <= problem.newton_tol) {
        return NewtonResult{h, c, problem.newton_max_iter, current};
    }
    throw InternalError("newton_solve did not converge in " +
                        std::to_string(problem.newton_max_iter) + " iterations (residual " +
                        std::to_string(current) + ")");
}

ScalarField normalize_solution(const ScalarField& h, double c, double d) {
    if (d != 0.0) {
        return std::pow(c, 1.0 / d) * h;
    }
    return (1.0 / mean(h, *h.grid())) * h;
}

double relative_distance(const ScalarField& a, const ScalarField& b) {
    return (a - b).max_abs() / std::max(a.max_abs(), b.max_abs());
}

bool ComparisonReport::all_converged() const {
    return std::all_of(member_status.begin(), member_status.end(),
                       [](const std::string& s) { return s == to_string(RunStatus::converged); });
}

ComparisonReport compare_solutions(const FlowParams& params, const std::vector<ScalarField>& h,
                                   const std::vector<double>& c,
                                   const std::vector<std::string>& status) {
    ComparisonReport report;
    report.scale_degree = params.scale_degree();
    report.in_uniqueness_regime = params.in_uniqueness_regime();
    if (!report.in_uniqueness_regime) {
        report.markers.emplace_back(kOutsideUniquenessRegime);
    }
    report.c_values = c;
    report.member_status = status;
    const std::size_t m = h.size();
    std::vector<bool> ok(m);
    for (std::size_t i = 0; i < m; ++i) {
        ok[i] = status[i] == to_string(RunStatus::converged);
        report.normalized.push_back(ok[i] ? normalize_solution(h[i], c[i], report.scale_degree) : h[i]);
        if (!ok[i]) {
            report.markers.push_back("member " + std::to_string(i) + " failed: " + status[i]);
        }
    }
    report.pairwise.assign(m, std::vector<double>(m, -1.0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (ok[i] && ok[j]) {
                const double dist = relative_distance(report.normalized[i], report.normalized[j]);
                report.pairwise[i][j] = dist;
                report.normalized_distance = std::max(report.normalized_distance, dist);
            }
        }
    }
    return report;
}

ComparisonReport uniqueness_experiment(const FlowParams& params,
                                       const std::vector<ScalarField>& initial_bodies,
                                       const SinkFactory& sink_for) {
    if (initial_bodies.size() < 2) {
        throw ConfigError("uniqueness experiment needs at least two initial bodies");
    }
    params.validate();
    struct Member {
        ScalarField h;
        double c;
        std::string status;
    };
    std::vector<std::future<Member>> jobs;
    for (std::size_t i = 0; i < initial_bodies.size(); ++i) {
        const ScalarField& h0 = initial_bodies[i];
        DiagnosticsSink sink = sink_for ? sink_for(i) : DiagnosticsSink{};
        jobs.push_back(std::async(std::launch::async, [&params, &h0, sink]() -> Member {
            try {
                const RunResult r = run(h0, params, sink);
                return {r.state.h(), r.state.last_diag.residual_c, to_string(r.status)};
            } catch (const Error& e) {
                return {h0, 0.0, std::string("rejected: ") + e.what()};
            }
        }));
    }
    std::vector<ScalarField> h;
    std::vector<double> c;
    std::vector<std::string> status;
    for (auto& job : jobs) {
        Member m = job.get();
        h.push_back(std::move(m.h));
        c.push_back(m.c);
        status.push_back(std::move(m.status));
    }
    return compare_solutions(params, h, c, status);
}

}  // namespace cmflow
