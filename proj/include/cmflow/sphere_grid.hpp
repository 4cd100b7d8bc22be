#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cmflow/fields.hpp"

namespace cmflow {

using Vec3 = std::array<double, 3>;

enum class DerivativeScheme {
    spectral,  // trigonometric interpolation along S^1 and along S^2 rings
    fd4,       // 4th-order centered differences on S^1 (fallback)
};

// Node counts. S^1 uses `azimuth` only; S^2 uses `polar` x `azimuth`.
struct Resolution {
    int azimuth = 0;
    int polar = 0;

    static Resolution circle(int n) { return {n, 0}; }
    static Resolution sphere(int n_polar, int n_azimuth) { return {n_azimuth, n_polar}; }

    friend bool operator==(const Resolution&, const Resolution&) = default;
};

// Periodic convolution y_i = sum_l kernel[l] * x_{i-l}. The sum is always
// taken in the same offset order, so shifting x shifts y bit for bit.
class CirculantOperator {
public:
    CirculantOperator() = default;
    CirculantOperator(int n, std::vector<std::pair<int, double>> taps);

    int size() const { return n_; }
    void apply(std::span<const double> in, std::span<double> out,
               std::vector<double>& scratch) const;

private:
    // Taps at offsets l and n - l whose coefficients agree up to sign are
    // applied together as coeff * (x[i-l] + sign * x[i+l]).
    struct Fold {
        int offset = 0;
        double coeff = 0.0;
        double sign = 0.0;  // 0 for an unpaired tap
    };
    int n_ = 0;
    std::vector<Fold> folds_;
};

// Discretization of S^{n-1} for n = 2, 3.
//
// S^1: N uniform angles theta_j = 2*pi*j/N with equal weights.
// S^2: Gauss-Legendre nodes in cos(theta) times uniform azimuth, stored
// ring-major (index = i_polar * N_azimuth + j_azimuth). No node sits on a pole.
//
// Derivatives are taken in the orthonormal frame (e_theta) on S^1 and
// (e_theta, e_phi) on S^2. Along S^2 rings they are spectral; across rings a
// 9-point finite-difference stencil runs along great circles through both
// poles, so the frame singularity never enters a stencil. The stencil weights
// come from trigonometric interpolation, which keeps hess<x,v> + <x,v> I = 0
// exact up to rounding.
class SphereGrid : public std::enable_shared_from_this<SphereGrid> {
public:
    static constexpr int kPolarStencil = 9;

    static GridPtr build(int dim_n, Resolution resolution,
                         DerivativeScheme scheme = DerivativeScheme::spectral);

    int dim_n() const { return dim_n_; }
    const Resolution& resolution() const { return resolution_; }
    DerivativeScheme scheme() const { return scheme_; }
    std::size_t size() const { return nodes_.size(); }

    std::span<const Vec3> nodes() const { return nodes_; }
    std::span<const double> weights() const { return weights_; }
    // a = 0 -> e_theta, a = 1 -> e_phi (S^2 only).
    const Vec3& frame(std::size_t node, int a) const { return frame_[2 * node + a]; }

    double theta(std::size_t node) const { return theta_[node]; }
    double phi(std::size_t node) const { return phi_[node]; }

    // 2*pi or 4*pi.
    double area() const;
    // Smallest geodesic node spacing; the length scale of the parabolic step limit.
    double spacing() const { return spacing_; }

    ScalarField constant(double value) const;
    ScalarField sample(const std::function<double(const Vec3&)>& fn) const;

    // Value and first two coordinate derivatives, combined into frame
    // components. Shared by gradient() and covariant_hessian().
    void frame_derivatives(std::span<const double> values, std::vector<Tangent>& grad,
                           std::vector<FrameMatrix>& hess) const;

private:
    SphereGrid() = default;

    void build_circle();
    void build_sphere();

    int dim_n_ = 0;
    Resolution resolution_;
    DerivativeScheme scheme_ = DerivativeScheme::spectral;
    std::vector<Vec3> nodes_;
    std::vector<Vec3> frame_;
    std::vector<double> weights_;
    std::vector<double> theta_;
    std::vector<double> phi_;
    double spacing_ = 0.0;

    CirculantOperator d1_;
    CirculantOperator d2_;

    // S^2 only: per great-circle position, stencil weights for d/dpsi and d2/dpsi2.
    std::vector<double> ring_sin_;
    std::vector<double> ring_cot_;
    std::vector<std::array<double, kPolarStencil>> polar_w1_;
    std::vector<std::array<double, kPolarStencil>> polar_w2_;
};

// Covariant gradient in the orthonormal frame.
VectorField gradient(const ScalarField& field, const SphereGrid& grid);

// Covariant Hessian nabla_ij h in the orthonormal frame.
MatrixField covariant_hessian(const ScalarField& field, const SphereGrid& grid);

// Quadrature sum of weights * values. On S^1 the terms are added in sorted
// order, which makes the result invariant under rotating the grid.
double integrate(const ScalarField& field, const SphereGrid& grid);

// integrate(field) / area.
double mean(const ScalarField& field, const SphereGrid& grid);

// Throws UsageError unless `field` was sampled on `grid`.
void require_same_grid(const GridPtr& field_grid, const SphereGrid& grid, const char* what);

// Weights of the first and second derivative at x0 of the trigonometric
// interpolant through the (odd number of) nodes xs. Exact for trigonometric
// polynomials of degree <= (size - 1) / 2, so in particular for the
// restriction of any linear function to a great circle.
std::array<std::vector<double>, 2> trig_stencil_weights(double x0, std::span<const double> xs);

// Gauss-Legendre nodes (descending) and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace cmflow
