#include "cmflow/convex_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cmflow/errors.hpp"

namespace cmflow {

namespace {

void require_positive(const ScalarField& v, const char* what) {
    for (double x : v.values()) {
        if (!(x > 0.0)) {
            throw DomainError(std::string(what) + " must be positive at every node");
        }
    }
}

double sigma_at(const FrameMatrix& m, int dim_n, int k) {
    if (dim_n == 2) {
        return m.m11;
    }
    return k == 1 ? m.m11 + m.m22 : m.m11 * m.m22 - m.m12 * m.m12;
}

}  // namespace

double power(double x, double e) {
    if (e == 0.0) {
        return 1.0;
    }
    if (e == 1.0) {
        return x;
    }
    if (e == -1.0) {
        return 1.0 / x;
    }
    if (e == 2.0) {
        return x * x;
    }
    if (e == -2.0) {
        return 1.0 / (x * x);
    }
    if (e == 0.5) {
        return std::sqrt(x);
    }
    if (e == -0.5) {
        return 1.0 / std::sqrt(x);
    }
    return std::pow(x, e);
}

void require_valid_k(int k, int dim_n) {
    if (k < 1 || k > dim_n - 1) {
        throw ConfigError("k must satisfy 1 ≤ k ≤ n−1 (n = " + std::to_string(dim_n) +
                          "), got " + std::to_string(k));
    }
}

double min_eigenvalue(const FrameMatrix& m, int dim_n) {
    if (dim_n == 2) {
        return m.m11;
    }
    const double mid = 0.5 * (m.m11 + m.m22);
    const double half_gap = 0.5 * (m.m11 - m.m22);
    const double rad = std::sqrt(half_gap * half_gap + m.m12 * m.m12);
    return mid - rad;
}

double sigma_k_derivative_norm(const FrameMatrix& m, int dim_n, int k) {
    if (dim_n == 2 || k == 1) {
        return 1.0;
    }
    // d sigma_2 / d b = tr(b) I - b, eigenvalues are those of b swapped.
    const double mid = 0.5 * (m.m11 + m.m22);
    const double half_gap = 0.5 * (m.m11 - m.m22);
    const double rad = std::sqrt(half_gap * half_gap + m.m12 * m.m12);
    return std::max(std::abs(mid + rad), std::abs(mid - rad));
}

MatrixField curvature_radii_matrix(const ScalarField& h, const SphereGrid& grid) {
    MatrixField b = covariant_hessian(h, grid);
    for (std::size_t i = 0; i < b.size(); ++i) {
        b[i].m11 += h[i];
        b[i].m22 += grid.dim_n() == 3 ? h[i] : 0.0;
    }
    return b;
}

ScalarField radial_field(const ScalarField& h, const SphereGrid& grid) {
    require_same_grid(h.grid(), grid, "radial_field");
    require_positive(h, "support function h");
    const VectorField grad = gradient(h, grid);
    std::vector<double> rho(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        rho[i] = std::sqrt(h[i] * h[i] + grad[i].c1 * grad[i].c1 + grad[i].c2 * grad[i].c2);
    }
    return ScalarField(h.grid(), std::move(rho));
}

ScalarField sigma_k(const MatrixField& b, int k) {
    const int n = b.grid()->dim_n();
    require_valid_k(k, n);
    std::vector<double> s(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        s[i] = sigma_at(b[i], n, k);
    }
    return ScalarField(b.grid(), std::move(s));
}

double check_convexity(const MatrixField& b) {
    const int n = b.grid()->dim_n();
    double m = std::numeric_limits<double>::infinity();
    for (const FrameMatrix& x : b.values()) {
        m = std::min(m, min_eigenvalue(x, n));
    }
    return m;
}

BodyGeometry body_geometry(const ScalarField& h, const SphereGrid& grid, int k) {
    require_same_grid(h.grid(), grid, "body_geometry");
    const int n = grid.dim_n();
    require_valid_k(k, n);
    require_positive(h, "support function h");

    std::vector<Tangent> grad;
    std::vector<FrameMatrix> hess;
    grid.frame_derivatives(h.values(), grad, hess);

    std::vector<double> rho(h.size());
    std::vector<double> sigma(h.size());
    double min_eig = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < h.size(); ++i) {
        FrameMatrix& b = hess[i];
        b.m11 += h[i];
        if (n == 3) {
            b.m22 += h[i];
        }
        rho[i] = std::sqrt(h[i] * h[i] + grad[i].c1 * grad[i].c1 + grad[i].c2 * grad[i].c2);
        sigma[i] = sigma_at(b, n, k);
        min_eig = std::min(min_eig, min_eigenvalue(b, n));
    }
    return BodyGeometry{h,
                        VectorField(h.grid(), std::move(grad)),
                        MatrixField(h.grid(), std::move(hess)),
                        ScalarField(h.grid(), std::move(rho)),
                        ScalarField(h.grid(), std::move(sigma)),
                        k,
                        min_eig};
}

Quermass quermassintegral(const ScalarField& h, const SphereGrid& grid, int k) {
    require_same_grid(h.grid(), grid, "quermassintegral");
    const MatrixField b = curvature_radii_matrix(h, grid);
    ScalarField integrand = sigma_k(b, k);
    for (std::size_t i = 0; i < h.size(); ++i) {
        integrand[i] *= h[i];
    }
    Quermass w;
    w.value = integrate(integrand, grid) / grid.dim_n();
    w.convexity_warning = !(check_convexity(b) > kDefaultConvexTolerance * mean(h, grid));
    return w;
}

double phi_functional(const ScalarField& h, const SphereGrid& grid, double p, double q,
                      const ScalarField& f) {
    require_same_grid(h.grid(), grid, "phi_functional");
    require_same_grid(f.grid(), grid, "phi_functional");
    require_positive(f, "density f");
    const ScalarField rho = radial_field(h, grid);
    const double e_rho = grid.dim_n() - q;
    ScalarField integrand = f;
    for (std::size_t i = 0; i < h.size(); ++i) {
        integrand[i] *= power(h[i], p) * power(rho[i], e_rho);
    }
    return integrate(integrand, grid);
}

Residual summarize_ratio(ScalarField ratio, const SphereGrid& grid) {
    std::vector<double> inv(ratio.size());
    for (std::size_t i = 0; i < ratio.size(); ++i) {
        inv[i] = 1.0 / ratio[i];
    }
    Residual out{std::move(ratio), 0.0, 0.0};
    out.c = mean(ScalarField(out.ratio.grid(), std::move(inv)), grid);
    out.var = (out.ratio.max() - out.ratio.min()) / mean(out.ratio, grid);
    return out;
}

Residual residual_field(const ScalarField& h, const SphereGrid& grid, double p, double q, int k,
                        const ScalarField& f) {
    require_same_grid(f.grid(), grid, "residual_field");
    require_positive(f, "density f");
    const BodyGeometry geo = body_geometry(h, grid, k);
    if (!(geo.min_eig_b > kDefaultConvexTolerance * mean(h, grid))) {
        throw DomainError("residual_field: body is not strictly convex (min eigenvalue of b = " +
                          std::to_string(geo.min_eig_b) + ")");
    }
    const double e_h = 1.0 - p;
    const double e_rho = q - grid.dim_n();
    std::vector<double> r(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        r[i] = power(h[i], e_h) * power(geo.rho[i], e_rho) * geo.sigma[i] / f[i];
    }
    return summarize_ratio(ScalarField(h.grid(), std::move(r)), grid);
}

}  // namespace cmflow
