#include "cmflow/sphere_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "cmflow/errors.hpp"

namespace cmflow {

namespace {

constexpr double kPi = std::numbers::pi;

// Trigonometric-interpolation derivative kernels on n equispaced points.
void spectral_kernels(int n, std::vector<std::pair<int, double>>& d1,
                      std::vector<std::pair<int, double>>& d2) {
    const double h = 2.0 * kPi / n;
    d1.assign(n, {0, 0.0});
    d2.assign(n, {0, 0.0});
    double row_sum = 0.0;
    for (int l = 1; l <= n / 2; ++l) {
        const double sign = (l % 2 == 0) ? 1.0 : -1.0;
        const double half = 0.5 * l * h;
        const double s = std::sin(half);
        double a1 = 0.0;
        double a2 = 0.0;
        if (n % 2 == 0) {
            a1 = 0.5 * sign * std::cos(half) / s;
            a2 = -0.5 * sign / (s * s);
        } else {
            a1 = 0.5 * sign / s;
            a2 = -0.5 * sign * std::cos(half) / (s * s);
        }
        d1[l] = {l, a1};
        d2[l] = {l, a2};
        if (n - l != l) {
            // d1 is odd and d2 even in the offset
            d1[n - l] = {n - l, -a1};
            d2[n - l] = {n - l, a2};
        }
    }
    for (int l = 1; l < n; ++l) {
        row_sum += d2[l].second;
    }
    // Negative-sum diagonal: constants are annihilated to rounding.
    d1[0] = {0, 0.0};
    d2[0] = {0, -row_sum};
}

void fd4_kernels(int n, std::vector<std::pair<int, double>>& d1,
                 std::vector<std::pair<int, double>>& d2) {
    const double h = 2.0 * kPi / n;
    // y_i = sum_l k_l x_{i-l}: offset l = -1 picks x_{i+1}.
    d1 = {{1, -8.0 / (12.0 * h)},
          {n - 1, 8.0 / (12.0 * h)},
          {2, 1.0 / (12.0 * h)},
          {n - 2, -1.0 / (12.0 * h)}};
    const double h2 = h * h;
    d2 = {{0, -30.0 / (12.0 * h2)},
          {1, 16.0 / (12.0 * h2)},
          {n - 1, 16.0 / (12.0 * h2)},
          {2, -1.0 / (12.0 * h2)},
          {n - 2, -1.0 / (12.0 * h2)}};
}

}  // namespace

CirculantOperator::CirculantOperator(int n, std::vector<std::pair<int, double>> taps) : n_(n) {
    std::vector<bool> used(taps.size(), false);
    for (std::size_t a = 0; a < taps.size(); ++a) {
        if (used[a]) {
            continue;
        }
        used[a] = true;
        const auto [offset, coeff] = taps[a];
        Fold fold{offset, coeff, 0.0};
        for (std::size_t b = a + 1; b < taps.size() && offset != 0; ++b) {
            const auto [other, c] = taps[b];
            if (used[b] || other != n - offset || offset > n / 2) {
                continue;
            }
            if (c == coeff || c == -coeff) {
                fold.sign = c == coeff ? 1.0 : -1.0;
                used[b] = true;
                break;
            }
        }
        folds_.push_back(fold);
    }
}

void CirculantOperator::apply(std::span<const double> in, std::span<double> out,
                              std::vector<double>& scratch) const {
    const std::size_t n = static_cast<std::size_t>(n_);
    scratch.resize(2 * n);
    std::copy(in.begin(), in.end(), scratch.begin());
    std::copy(in.begin(), in.end(), scratch.begin() + n_);
    std::fill(out.begin(), out.end(), 0.0);
    double* y = out.data();
    for (const Fold& f : folds_) {
        const double* back = scratch.data() + (n - static_cast<std::size_t>(f.offset));
        if (f.sign == 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                y[i] += f.coeff * back[i];
            }
            continue;
        }
        const double* ahead = scratch.data() + static_cast<std::size_t>(f.offset);
        if (f.sign > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                y[i] += f.coeff * (back[i] + ahead[i]);
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                y[i] += f.coeff * (back[i] - ahead[i]);
            }
        }
    }
}

std::array<std::vector<double>, 2> trig_stencil_weights(double x0, std::span<const double> xs) {
    // Truncated Taylor coefficients (value, first, second / 2) of each
    // trigonometric Lagrange basis function at x0.
    const std::size_t n = xs.size();
    std::array<std::vector<double>, 2> w{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        double c0 = 1.0;
        double c1 = 0.0;
        double c2 = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
            if (m == j) {
                continue;
            }
            const double a = 0.5 * (x0 - xs[m]);
            const double denom = std::sin(0.5 * (xs[j] - xs[m]));
            const double d0 = std::sin(a) / denom;
            const double d1 = 0.5 * std::cos(a) / denom;
            const double d2 = -0.125 * std::sin(a) / denom;
            c2 = c0 * d2 + c1 * d1 + c2 * d0;
            c1 = c0 * d1 + c1 * d0;
            c0 = c0 * d0;
        }
        w[0][j] = c1;
        w[1][j] = 2.0 * c2;
    }
    return w;
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(n);
    weights.resize(n);
    const unsigned un = static_cast<unsigned>(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            const double p = std::legendre(un, x);
            dp = n * (x * p - std::legendre(un - 1, x)) / (x * x - 1.0);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) {
                break;
            }
        }
        dp = n * (x * std::legendre(un, x) - std::legendre(un - 1, x)) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

GridPtr SphereGrid::build(int dim_n, Resolution resolution, DerivativeScheme scheme) {
    auto grid = std::shared_ptr<SphereGrid>(new SphereGrid());
    grid->dim_n_ = dim_n;
    grid->resolution_ = resolution;
    grid->scheme_ = scheme;
    if (dim_n == 2) {
        if (resolution.azimuth < 16) {
            throw ConfigError("S^1 grid needs at least 16 nodes, got " +
                              std::to_string(resolution.azimuth));
        }
        grid->resolution_.polar = 0;
        grid->build_circle();
    } else if (dim_n == 3) {
        if (resolution.polar < 8 || resolution.azimuth < 16 || resolution.azimuth % 2 != 0) {
            throw ConfigError("S^2 grid needs polar >= 8 and even azimuth >= 16, got " +
                              std::to_string(resolution.polar) + "x" +
                              std::to_string(resolution.azimuth));
        }
        if (scheme != DerivativeScheme::spectral) {
            throw ConfigError("the fd4 derivative scheme is only available on S^1");
        }
        grid->build_sphere();
    } else {
        throw ConfigError("ambient dimension must be 2 or 3, got " + std::to_string(dim_n));
    }
    return grid;
}

void SphereGrid::build_circle() {
    const int n = resolution_.azimuth;
    const double h = 2.0 * kPi / n;
    nodes_.resize(n);
    frame_.resize(2 * n);
    weights_.assign(n, h);
    theta_.resize(n);
    phi_.assign(n, 0.0);
    for (int j = 0; j < n; ++j) {
        const double t = h * j;
        theta_[j] = t;
        nodes_[j] = {std::cos(t), std::sin(t), 0.0};
        frame_[2 * j] = {-std::sin(t), std::cos(t), 0.0};
        frame_[2 * j + 1] = {0.0, 0.0, 0.0};
    }
    spacing_ = h;

    std::vector<std::pair<int, double>> k1;
    std::vector<std::pair<int, double>> k2;
    if (scheme_ == DerivativeScheme::spectral) {
        spectral_kernels(n, k1, k2);
    } else {
        fd4_kernels(n, k1, k2);
    }
    d1_ = CirculantOperator(n, std::move(k1));
    d2_ = CirculantOperator(n, std::move(k2));
}

void SphereGrid::build_sphere() {
    const int np = resolution_.polar;
    const int na = resolution_.azimuth;
    std::vector<double> gl_nodes;
    std::vector<double> gl_weights;
    gauss_legendre(np, gl_nodes, gl_weights);

    const double dphi = 2.0 * kPi / na;
    const std::size_t count = static_cast<std::size_t>(np) * na;
    nodes_.resize(count);
    frame_.resize(2 * count);
    weights_.resize(count);
    theta_.resize(count);
    phi_.resize(count);
    ring_sin_.resize(np);
    ring_cot_.resize(np);

    std::vector<double> ring_theta(np);
    for (int i = 0; i < np; ++i) {
        const double t = std::acos(gl_nodes[i]);
        ring_theta[i] = t;
        const double st = std::sqrt((1.0 - gl_nodes[i]) * (1.0 + gl_nodes[i]));
        const double ct = gl_nodes[i];
        ring_sin_[i] = st;
        ring_cot_[i] = ct / st;
        for (int j = 0; j < na; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * na + j;
            const double p = dphi * j;
            const double cp = std::cos(p);
            const double sp = std::sin(p);
            theta_[k] = t;
            phi_[k] = p;
            nodes_[k] = {st * cp, st * sp, ct};
            frame_[2 * k] = {ct * cp, ct * sp, -st};
            frame_[2 * k + 1] = {-sp, cp, 0.0};
            weights_[k] = gl_weights[i] * dphi;
        }
    }

    // Great circle through both poles: meridian j for psi in (0, pi), the
    // opposite meridian j + na/2 for psi in (pi, 2*pi).
    const int m = 2 * np;
    std::vector<double> psi(m);
    for (int s = 0; s < m; ++s) {
        psi[s] = s < np ? ring_theta[s] : 2.0 * kPi - ring_theta[m - 1 - s];
    }
    constexpr int half = kPolarStencil / 2;
    polar_w1_.resize(m);
    polar_w2_.resize(m);
    double min_gap = 2.0 * kPi;
    for (int s = 0; s < m; ++s) {
        std::array<double, kPolarStencil> xs{};
        for (int o = -half; o <= half; ++o) {
            int t = s + o;
            double shift = 0.0;
            if (t < 0) {
                t += m;
                shift = -2.0 * kPi;
            } else if (t >= m) {
                t -= m;
                shift = 2.0 * kPi;
            }
            xs[o + half] = psi[t] + shift;
        }
        const auto w = trig_stencil_weights(psi[s], xs);
        std::copy(w[0].begin(), w[0].end(), polar_w1_[s].begin());
        std::copy(w[1].begin(), w[1].end(), polar_w2_[s].begin());
        const double next = (s + 1 < m) ? psi[s + 1] : psi[0] + 2.0 * kPi;
        min_gap = std::min(min_gap, next - psi[s]);
    }
    spacing_ = std::min(min_gap, ring_sin_[0] * dphi);

    std::vector<std::pair<int, double>> k1;
    std::vector<std::pair<int, double>> k2;
    spectral_kernels(na, k1, k2);
    d1_ = CirculantOperator(na, std::move(k1));
    d2_ = CirculantOperator(na, std::move(k2));
}

double SphereGrid::area() const { return dim_n_ == 2 ? 2.0 * kPi : 4.0 * kPi; }

ScalarField SphereGrid::constant(double value) const {
    return ScalarField::constant(shared_from_this(), value);
}

ScalarField SphereGrid::sample(const std::function<double(const Vec3&)>& fn) const {
    std::vector<double> values(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        values[i] = fn(nodes_[i]);
    }
    return ScalarField(shared_from_this(), std::move(values));
}

void SphereGrid::frame_derivatives(std::span<const double> v, std::vector<Tangent>& grad,
                                   std::vector<FrameMatrix>& hess) const {
    const std::size_t count = nodes_.size();
    grad.assign(count, Tangent{});
    hess.assign(count, FrameMatrix{});
    std::vector<double> scratch;

    if (dim_n_ == 2) {
        std::vector<double> dv(count);
        std::vector<double> ddv(count);
        d1_.apply(v, dv, scratch);
        d2_.apply(v, ddv, scratch);
        for (std::size_t i = 0; i < count; ++i) {
            grad[i].c1 = dv[i];
            hess[i].m11 = ddv[i];
        }
        return;
    }

    const int np = resolution_.polar;
    const int na = resolution_.azimuth;
    const std::size_t una = static_cast<std::size_t>(na);
    std::vector<double> v_p(count);
    std::vector<double> v_pp(count);
    std::vector<double> v_t(count);
    std::vector<double> v_tt(count);
    std::vector<double> v_tp(count);

    // Ring derivatives act on the ring's deviation from its mean: near the
    // poles they are divided by sin(theta)^2 and the constant part would only
    // contribute rounding error.
    std::vector<double> ring(una);
    auto ring_deviation = [&](std::span<const double> values) {
        double avg = 0.0;
        for (double x : values) {
            avg += x;
        }
        avg /= static_cast<double>(una);
        for (std::size_t j = 0; j < una; ++j) {
            ring[j] = values[j] - avg;
        }
    };
    for (int i = 0; i < np; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * una;
        ring_deviation(v.subspan(base, una));
        d1_.apply(ring, std::span(v_p).subspan(base, una), scratch);
        d2_.apply(ring, std::span(v_pp).subspan(base, una), scratch);
    }

    const int m = 2 * np;
    constexpr int half = kPolarStencil / 2;
    std::vector<double> circle(m);
    auto circle_index = [&](int s, int j) -> std::size_t {
        return s < np ? static_cast<std::size_t>(s) * una + j
                      : static_cast<std::size_t>(m - 1 - s) * una + (j + na / 2);
    };
    for (int j = 0; j < na / 2; ++j) {
        for (int s = 0; s < m; ++s) {
            circle[s] = v[circle_index(s, j)];
        }
        for (int s = 0; s < m; ++s) {
            double a1 = 0.0;
            double a2 = 0.0;
            for (int o = 0; o < kPolarStencil; ++o) {
                int t = s + o - half;
                t = (t + m) % m;
                a1 += polar_w1_[s][o] * circle[t];
                a2 += polar_w2_[s][o] * circle[t];
            }
            const std::size_t k = circle_index(s, j);
            // On the far meridian psi = 2*pi - theta, so d/dtheta = -d/dpsi.
            v_t[k] = s < np ? a1 : -a1;
            v_tt[k] = a2;
        }
    }

    for (int i = 0; i < np; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * una;
        ring_deviation(std::span<const double>(v_t).subspan(base, una));
        d1_.apply(ring, std::span(v_tp).subspan(base, una), scratch);
    }

    for (int i = 0; i < np; ++i) {
        const double s = ring_sin_[i];
        const double ct = ring_cot_[i];
        for (int j = 0; j < na; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * una + j;
            grad[k].c1 = v_t[k];
            grad[k].c2 = v_p[k] / s;
            hess[k].m11 = v_tt[k];
            hess[k].m12 = (v_tp[k] - ct * v_p[k]) / s;
            hess[k].m22 = v_pp[k] / (s * s) + ct * v_t[k];
        }
    }
}

void require_same_grid(const GridPtr& field_grid, const SphereGrid& grid, const char* what) {
    if (field_grid.get() != &grid) {
        throw UsageError(std::string(what) + ": field does not live on the given grid");
    }
}

VectorField gradient(const ScalarField& field, const SphereGrid& grid) {
    require_same_grid(field.grid(), grid, "gradient");
    std::vector<Tangent> grad;
    std::vector<FrameMatrix> hess;
    grid.frame_derivatives(field.values(), grad, hess);
    return VectorField(field.grid(), std::move(grad));
}

MatrixField covariant_hessian(const ScalarField& field, const SphereGrid& grid) {
    require_same_grid(field.grid(), grid, "covariant_hessian");
    std::vector<Tangent> grad;
    std::vector<FrameMatrix> hess;
    grid.frame_derivatives(field.values(), grad, hess);
    return MatrixField(field.grid(), std::move(hess));
}

double integrate(const ScalarField& field, const SphereGrid& grid) {
    require_same_grid(field.grid(), grid, "integrate");
    const auto values = field.values();
    const auto weights = grid.weights();
    if (grid.dim_n() == 2) {
        std::vector<double> sorted(values.begin(), values.end());
        std::sort(sorted.begin(), sorted.end());
        return weights[0] * std::accumulate(sorted.begin(), sorted.end(), 0.0);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum += weights[i] * values[i];
    }
    return sum;
}

double mean(const ScalarField& field, const SphereGrid& grid) {
    return integrate(field, grid) / grid.area();
}

}  // namespace cmflow
