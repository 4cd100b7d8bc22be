#pragma once

#include "cmflow/fields.hpp"
#include "cmflow/sphere_grid.hpp"

namespace cmflow {

// Support-function calculus for a convex body containing the origin. All
// fields are parametrized by the outer unit normal x; the radial function is
// stored as the composite rho(u(x)) = sqrt(h^2 + |grad h|^2).
struct BodyGeometry {
    ScalarField h;
    VectorField grad_h;
    MatrixField b;      // principal radii of curvature: hess h + h I
    ScalarField rho;
    ScalarField sigma;  // sigma_k(b)
    int k = 1;
    double min_eig_b = 0.0;
};

// Default convexity threshold, relative to mean(h).
inline constexpr double kDefaultConvexTolerance = 1e-8;

// Throws DomainError unless h > 0 at every node.
BodyGeometry body_geometry(const ScalarField& h, const SphereGrid& grid, int k);

MatrixField curvature_radii_matrix(const ScalarField& h, const SphereGrid& grid);

ScalarField radial_field(const ScalarField& h, const SphereGrid& grid);

// k-th elementary symmetric polynomial of the eigenvalues of b, per node.
// 1 <= k <= n-1. Closed form: trace / determinant on S^2.
ScalarField sigma_k(const MatrixField& b, int k);

// Smallest eigenvalue of b over all nodes.
double check_convexity(const MatrixField& b);

double min_eigenvalue(const FrameMatrix& m, int dim_n);

// Operator norm of d sigma_k / d b at one node; the ellipticity scale of the
// linearized sigma_k.
double sigma_k_derivative_norm(const FrameMatrix& m, int dim_n, int k);

struct Quermass {
    double value = 0.0;
    bool convexity_warning = false;  // b was not positive definite somewhere
};

// W_k = (1/n) * integral of h * sigma_k.
Quermass quermassintegral(const ScalarField& h, const SphereGrid& grid, int k);

// Phi_{p,q} = integral of f * h^p * rho^(n-q).
double phi_functional(const ScalarField& h, const SphereGrid& grid, double p, double q,
                      const ScalarField& f);

struct Residual {
    ScalarField ratio;   // r = h^(1-p) rho^(q-n) sigma_k / f
    double c = 0.0;      // weighted mean of 1/r
    double var = 0.0;    // (max r - min r) / mean r
};

// Deviation of h from solving c h^(1-p) rho^(q-n) sigma_k = f with a constant
// c; var == 0 exactly at a solution.
Residual residual_field(const ScalarField& h, const SphereGrid& grid, double p, double q, int k,
                        const ScalarField& f);

// Summary statistics of a ratio field: c = mean(1/r), var = spread / mean(r).
Residual summarize_ratio(ScalarField ratio, const SphereGrid& grid);

// x^e with exact shortcuts for the exponents that occur in practice.
double power(double x, double e);

// Throws ConfigError unless 1 <= k <= n - 1.
void require_valid_k(int k, int dim_n);

}  // namespace cmflow
