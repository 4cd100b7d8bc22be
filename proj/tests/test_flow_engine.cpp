#include <cmath>
#include <numbers>

#include "cmflow/flow_engine.hpp"
#include "doctest.h"

using namespace cmflow;
using std::numbers::pi;

namespace {

GridPtr circle(int n) { return SphereGrid::build(2, Resolution::circle(n)); }
GridPtr sphere(int np, int na) { return SphereGrid::build(3, Resolution::sphere(np, na)); }

double binomial(int n, int k) { return std::tgamma(n + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(n - k + 1.0)); }

FlowParams make_params(int k, double p, double q, ScalarField f) {
    FlowParams params{k, p, q, std::move(f), {}};
    return params;
}

// f manufactured from 1 + 0.1 cos 2theta with p = 1.5, q = 2 (k = 1, n = 2).
ScalarField manufactured_density(const GridPtr& g) {
    return g->sample([](const Vec3& x) {
        const double c2 = x[0] * x[0] - x[1] * x[1];
        return std::pow(1.0 + 0.1 * c2, -0.5) * (1.0 - 0.3 * c2);
    });
}

ScalarField offset_ball(const GridPtr& g, double a) {
    return g->sample([a](const Vec3& x) { return 1.0 + a * x[0]; });
}

double phi_drift(const GridPtr& g, const FlowParams& base, const ScalarField& h0, double dt,
                 double horizon) {
    FlowParams params = base;
    params.controls.fixed_dt = true;
    params.controls.dt_init = dt;
    params.controls.tol_residual = 0.0;
    params.controls.tol_rhs = 0.0;
    params.controls.max_steps = std::lround(horizon / dt);
    params.controls.trace_every = params.controls.max_steps;
    const RunResult r = run(h0, params);
    REQUIRE(r.status == RunStatus::max_steps);
    (void)g;
    return std::abs(r.trace.back().Phi_pq - r.trace.front().Phi_pq) / r.trace.front().Phi_pq;
}

}  // namespace

TEST_CASE("FlowParams validation and flags") {
    auto g = circle(32);
    CHECK_THROWS_AS(make_params(1, 0.0, 1.0, g->constant(1.0)).validate(), ConfigError);
    CHECK_THROWS_AS(make_params(2, 2.0, 1.0, g->constant(1.0)).validate(), ConfigError);
    CHECK_THROWS_AS(make_params(1, 2.0, 1.0, g->constant(-1.0)).validate(), ConfigError);
    auto bad = make_params(1, 2.0, 1.0, g->constant(1.0));
    bad.controls.dt_safety = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_NOTHROW(make_params(1, 2.0, 1.0, g->constant(1.0)).validate());

    CHECK_FALSE(make_params(1, 2.0, 1.0, g->constant(1.0)).outside_theory());
    CHECK(make_params(1, -1.0, 1.5, g->constant(1.0)).outside_theory());  // q > n + p = 1
    CHECK(make_params(1, 2.0, 2.5, g->constant(1.0)).outside_theory());   // q > n = 2

    const auto c4 = make_params(1, 1.5, 2.0, g->constant(1.0));
    CHECK(c4.in_uniqueness_regime());
    CHECK(c4.scale_degree() == doctest::Approx(0.5));
    CHECK_FALSE(make_params(1, 3.0, 1.0, g->constant(1.0)).in_uniqueness_regime());
}

TEST_CASE("eta") {
    SUBCASE("unit circle, f = 1, any p and q") {
        auto g = circle(64);
        for (auto [p, q] : {std::pair{2.0, 1.0}, std::pair{-0.7, 3.1}, std::pair{1.5, 2.0}}) {
            CHECK(std::abs(eta(g->constant(1.0), *g, make_params(1, p, q, g->constant(1.0))) - 1.0) <=
                  1e-13);
        }
    }
    SUBCASE("round bodies: r^(n+p-q-k-1) / C(n-1, k)") {
        for (auto g : {circle(32), sphere(12, 24)}) {
            const int n = g->dim_n();
            for (int k = 1; k <= n - 1; ++k) {
                const double p = 1.3;
                const double q = 0.4;
                const double r = 1.7;
                const double expected = std::pow(r, n + p - q - k - 1) / binomial(n - 1, k);
                const double got = eta(g->constant(r), *g, make_params(k, p, q, g->constant(1.0)));
                CHECK(std::abs(got - expected) <= 1e-12 * expected);
            }
        }
    }
    SUBCASE("homogeneity") {
        auto g = sphere(12, 24);
        const auto params = make_params(2, 1.5, 0.5, g->sample([](const Vec3& x) { return 1.0 + 0.2 * x[0] * x[1]; }));
        const auto h = g->sample([](const Vec3& x) { return 1.2 + 0.1 * x[2] + 0.05 * x[0] * x[0]; });
        const double lambda = 2.5;
        const double e0 = eta(h, *g, params);
        const double e1 = eta(lambda * h, *g, params);
        CHECK(std::abs(e1 - std::pow(lambda, 3 + 1.5 - 0.5 - 2 - 1) * e0) <= 1e-12 * e1);
    }
}

TEST_CASE("flow_rhs") {
    SUBCASE("round spheres are stationary") {
        for (auto g : {circle(128), sphere(16, 32)}) {
            const int n = g->dim_n();
            for (int k = 1; k <= n - 1; ++k) {
                for (double r : {0.5, 1.0, 2.0}) {
                    const auto params = make_params(k, 1.7, 0.6, g->constant(binomial(n - 1, k)));
                    CHECK(flow_rhs(g->constant(r), *g, params).max_abs() <= 1e-12 * r);
                }
            }
        }
    }
    SUBCASE("unit circle, p = 2, q = 1") {
        auto g = circle(64);
        CHECK(flow_rhs(g->constant(1.0), *g, make_params(1, 2.0, 1.0, g->constant(1.0))).max_abs() <=
              1e-15);
    }
    SUBCASE("matches the pointwise formula") {
        // Oracle assembled from the separately tested geometry functions.
        auto g = sphere(12, 24);
        for (int k : {1, 2}) {
            const double p = 1.4;
            const double q = 0.8;
            const auto f = g->sample([](const Vec3& x) { return 1.0 + 0.3 * x[0] * x[2]; });
            const auto h = g->sample([](const Vec3& x) { return 1.1 + 0.1 * x[1] + 0.05 * x[2] * x[2]; });
            const auto params = make_params(k, p, q, f);
            const auto sigma = sigma_k(curvature_radii_matrix(h, *g), k);
            const auto rho = radial_field(h, *g);
            const double w = quermassintegral(h, *g, k).value;
            const double e = phi_functional(h, *g, p, q, f) / (3.0 * w);
            const auto rhs = flow_rhs(h, *g, params);
            for (std::size_t i = 0; i < h.size(); ++i) {
                const double expected =
                    e / f[i] * std::pow(h[i], 2 - p) * std::pow(rho[i], q - 3) * sigma[i] - h[i];
                CHECK(std::abs(rhs[i] - expected) <= 1e-12);
            }
        }
    }
    SUBCASE("degree-1 homogeneity") {
        auto g = circle(64);
        const auto params = make_params(1, 1.5, 2.0, manufactured_density(g));
        const auto h = offset_ball(g, 0.3);
        const auto a = flow_rhs(h, *g, params);
        const auto b = flow_rhs(3.0 * h, *g, params);
        for (std::size_t i = 0; i < h.size(); ++i) {
            CHECK(std::abs(b[i] - 3.0 * a[i]) <= 1e-12 * 3.0 * h.max_abs());
        }
    }
    SUBCASE("non-convex input is a domain error") {
        auto g = circle(64);
        const auto h = g->sample([](const Vec3& x) { return 1.0 + 0.6 * (x[0] * x[0] - x[1] * x[1]); });
        CHECK_THROWS_AS(flow_rhs(h, *g, make_params(1, 2.0, 1.0, g->constant(1.0))), DomainError);
    }
}

TEST_CASE("adaptive_dt") {
    auto params_for = [](const GridPtr& g) {
        auto params = make_params(1, 2.0, 1.0, g->constant(1.0));
        params.controls.dt_safety = 0.4;
        params.controls.dt_init = 1.0;
        return params;
    };
    auto g64 = circle(64);
    const auto p64 = params_for(g64);
    const double dt64 = adaptive_dt(FlowState::initial(g64->constant(1.0), p64), p64);
    CHECK(std::abs(dt64 - 0.4 * std::pow(2 * pi / 64, 2)) <= 1e-15);

    auto g128 = circle(128);
    const auto p128 = params_for(g128);
    const double dt128 = adaptive_dt(FlowState::initial(g128->constant(1.0), p128), p128);
    CHECK(dt128 == doctest::Approx(dt64 / 4).epsilon(1e-12));

    auto capped = p64;
    capped.controls.dt_init = 1e-4;
    CHECK(adaptive_dt(FlowState::initial(g64->constant(1.0), capped), capped) == 1e-4);

    // k = 2 on S^2: the coefficient carries the largest eigenvalue of b
    auto s = sphere(12, 24);
    auto ps = make_params(2, 2.0, 1.0, s->constant(1.0));
    ps.controls.dt_init = 1.0;
    const double dts = adaptive_dt(FlowState::initial(s->constant(2.0), ps), ps);
    // (eta / f) h^(2-p) rho^(q-n) lambda_max = 2 * 1 * 2^-2 * 2
    CHECK(dts == doctest::Approx(0.1 * s->spacing() * s->spacing()).epsilon(1e-12));
}

TEST_CASE("step") {
    SUBCASE("stationary input is unchanged") {
        auto g = circle(64);
        const auto params = make_params(1, 2.0, 1.0, g->constant(1.0));
        const auto s0 = FlowState::initial(g->constant(1.0), params);
        const auto s1 = step(s0, params);
        CHECK((s1.h() - s0.h()).max_abs() <= 1e-14);
        CHECK(s1.step == 1);
        CHECK(s1.t == s1.last_dt);
    }
    SUBCASE("Phi drift of one step is second order in dt") {
        auto g = circle(64);
        auto params = make_params(1, 1.5, 2.0, manufactured_density(g));
        params.controls.fixed_dt = true;
        const auto s0 = FlowState::initial(offset_ball(g, 0.2), params);
        double drift[2];
        for (int i = 0; i < 2; ++i) {
            params.controls.dt_init = i == 0 ? 1e-3 : 5e-4;
            const auto s1 = step(s0, params);
            drift[i] = std::abs(s1.last_diag.Phi_pq - s0.last_diag.Phi_pq);
        }
        CHECK(drift[0] / drift[1] == doctest::Approx(4.0).epsilon(0.05));
    }
    SUBCASE("retry path halves dt") {
        auto g = circle(64);
        auto params = make_params(1, 2.0, 1.0, g->constant(1.0));
        params.controls.fixed_dt = true;
        params.controls.dt_init = 0.1;
        const auto h = g->sample([](const Vec3& x) { return 1.0 + 0.3 * (x[0] * x[0] - x[1] * x[1]); });
        const auto s1 = step(FlowState::initial(h, params), params);
        CHECK(s1.last_dt < 0.1);
        CHECK(s1.last_diag.min_eig_b > 0.0);
    }
    SUBCASE("breakdown carries the last good state") {
        auto g = circle(64);
        auto params = make_params(1, 2.0, 1.0, g->constant(1.0));
        const auto h = g->sample([](const Vec3& x) { return 1.0 + 0.3 * (x[0] * x[0] - x[1] * x[1]); });
        const auto s0 = FlowState::initial(h, params);  // min eigenvalue of b is 0.1
        auto strict = params;
        strict.controls.epsilon_convex = 0.2;
        try {
            step(s0, strict);
            FAIL("expected a convexity breakdown");
        } catch (const ConvexityBreakdown& e) {
            CHECK(e.last_good().step == 0);
            CHECK((e.last_good().h() - h).max_abs() == 0.0);
        }
    }
}

TEST_CASE("Phi conservation over a fixed horizon") {
    auto g = circle(64);
    const auto params = make_params(1, 1.5, 2.0, manufactured_density(g));
    const auto h0 = g->constant(1.0);
    SUBCASE("explicit Euler is first order") {
        const double a = phi_drift(g, params, h0, 1e-3, 1.0);
        const double b = phi_drift(g, params, h0, 5e-4, 1.0);
        CHECK(a / b == doctest::Approx(2.0).epsilon(0.1));
    }
    SUBCASE("Heun is second order") {
        auto heun = params;
        heun.controls.integrator = Integrator::heun;
        const double a = phi_drift(g, heun, h0, 1e-3, 1.0);
        const double b = phi_drift(g, heun, h0, 5e-4, 1.0);
        CHECK(a / b >= 3.5);
    }
    SUBCASE("with q != n the discrete Phi is not conserved") {
        // The x-parametrized Phi picks up the motion of u(x, t); its drift
        // does not shrink with dt.
        const auto other = make_params(1, 2.0, 1.0, g->constant(1.0));
        auto heun = other;
        heun.controls.integrator = Integrator::heun;
        const auto h = offset_ball(g, 0.3);
        const double a = phi_drift(g, heun, h, 1e-3, 1.0);
        const double b = phi_drift(g, heun, h, 5e-4, 1.0);
        CHECK(a > 1e-3);
        CHECK(a / b == doctest::Approx(1.0).epsilon(0.01));
    }
}

TEST_CASE("run") {
    SUBCASE("stationary unit circle converges at step 0") {
        auto g = circle(64);
        const auto r = run(g->constant(1.0), make_params(1, 2.0, 1.0, g->constant(1.0)));
        CHECK(r.status == RunStatus::converged);
        CHECK(r.state.step == 0);
        REQUIRE(r.trace.size() == 1);
        CHECK(r.trace[0].W_k == doctest::Approx(pi).epsilon(1e-12));
    }
    SUBCASE("offset ball with constant f becomes round") {
        auto g = circle(64);
        auto params = make_params(1, 2.0, 1.0, g->constant(1.0));
        params.controls.tol_residual = 1e-7;
        params.controls.trace_every = 1000;
        const auto h0 = offset_ball(g, 0.3);
        const auto r = run(h0, params);
        REQUIRE(r.status == RunStatus::converged);
        const auto& h = r.state.h();
        const double radius = mean(h, *g);
        CHECK(r.state.last_diag.residual_var < 1e-6);
        CHECK((h.max() - h.min()) / radius < 1e-6);
        // Phi of the round limit is 2 pi R^(n+p-q)
        CHECK(r.state.last_diag.Phi_pq == doctest::Approx(2 * pi * std::pow(radius, 3)).epsilon(1e-6));
        CHECK(r.max_wk_decrease <= 1e-8);
        CHECK(r.trace.back().step == r.state.step);
        for (const auto& d : r.trace) {
            CHECK(d.all_finite());
        }
    }
    SUBCASE("max_steps stops a non-stationary run") {
        auto g = circle(64);
        auto params = make_params(1, 2.0, 1.0, g->constant(1.0));
        params.controls.max_steps = 1;
        const auto r = run(offset_ball(g, 0.3), params);
        CHECK(r.status == RunStatus::max_steps);
        CHECK(r.state.step == 1);
        CHECK(r.trace.size() == 2);
    }
    SUBCASE("invalid initial body") {
        auto g = circle(64);
        const auto params = make_params(1, 2.0, 1.0, g->constant(1.0));
        CHECK_THROWS_AS(run(g->constant(-1.0), params), InputError);
        const auto bumpy = g->sample([](const Vec3& x) { return 1.0 + 0.6 * (x[0] * x[0] - x[1] * x[1]); });
        CHECK_THROWS_AS(run(bumpy, params), InputError);
    }
    SUBCASE("sink sees every accepted step") {
        auto g = circle(32);
        auto params = make_params(1, 1.5, 2.0, manufactured_density(g));
        params.controls.max_steps = 50;
        params.controls.trace_every = 7;
        long count = 0;
        long last = -1;
        const auto r = run(g->constant(1.0), params, [&](const DiagnosticsRecord& d) {
            CHECK(d.step == last + 1);
            last = d.step;
            ++count;
        });
        CHECK(count == 51);
        CHECK(r.trace.size() == 9);  // steps 0, 7, ..., 49 and the final step 50
    }
}

TEST_CASE("equivariance") {
    SUBCASE("scaling the initial body scales the trajectory") {
        for (auto g : {circle(64), sphere(8, 16)}) {
            auto params = make_params(1, 1.5, g->dim_n(), g->dim_n() == 2 ? manufactured_density(g) : g->constant(2.0));
            params.controls.fixed_dt = true;
            params.controls.dt_init = g->dim_n() == 2 ? 1e-3 : 1e-4;
            const auto h0 = g->sample([](const Vec3& x) { return 1.0 + 0.2 * x[0] + 0.05 * x[1] * x[1]; });
            auto a = FlowState::initial(h0, params);
            auto b = FlowState::initial(3.0 * h0, params);
            double err = 0.0;
            for (int i = 0; i < 100; ++i) {
                a = step(a, params);
                b = step(b, params);
                err = std::max(err, (b.h() - 3.0 * a.h()).max_abs() / (3.0 * a.h()).max_abs());
            }
            CHECK(err <= 1e-12);
        }
    }
    SUBCASE("shifting f and h0 on S^1 shifts every iterate exactly") {
        auto g = circle(64);
        const int m = 11;
        auto shift = [&](const ScalarField& v) {
            std::vector<double> out(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                out[(i + m) % v.size()] = v[i];
            }
            return ScalarField(g, std::move(out));
        };
        const auto f = g->sample([](const Vec3& x) { return 1.0 + 0.2 * x[0] + 0.1 * x[0] * x[1]; });
        const auto h0 = g->sample([](const Vec3& x) { return 1.0 + 0.15 * x[1] + 0.02 * x[0] * x[0]; });
        const auto pa = make_params(1, 1.5, 0.5, f);
        const auto pb = make_params(1, 1.5, 0.5, shift(f));
        auto a = FlowState::initial(h0, pa);
        auto b = FlowState::initial(shift(h0), pb);
        bool identical = true;
        for (int i = 0; i < 200; ++i) {
            a = step(a, pa);
            b = step(b, pb);
            identical = identical && a.last_dt == b.last_dt && (shift(a.h()) - b.h()).max_abs() == 0.0;
        }
        CHECK(identical);
    }
}
