#include "cmflow/fields.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cmflow/errors.hpp"
#include "cmflow/sphere_grid.hpp"

namespace cmflow {

namespace {

void check_count(const GridPtr& grid, std::size_t count, const char* what) {
    if (!grid) {
        throw UsageError(std::string(what) + ": null grid");
    }
    if (count != grid->size()) {
        throw UsageError(std::string(what) + ": value count " + std::to_string(count) +
                         " does not match node count " + std::to_string(grid->size()));
    }
}

}  // namespace

ScalarField::ScalarField(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    check_count(grid_, values_.size(), "ScalarField");
}

ScalarField ScalarField::constant(GridPtr grid, double value) {
    const std::size_t n = grid ? grid->size() : 0;
    return ScalarField(std::move(grid), std::vector<double>(n, value));
}

double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }

double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }

double ScalarField::max_abs() const {
    double m = 0.0;
    for (double v : values_) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

ScalarField& ScalarField::operator+=(const ScalarField& other) {
    require_same_grid(other.grid(), *grid_, "ScalarField +=");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        values_[i] += other.values_[i];
    }
    return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& other) {
    require_same_grid(other.grid(), *grid_, "ScalarField -=");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        values_[i] -= other.values_[i];
    }
    return *this;
}

ScalarField& ScalarField::operator*=(double s) {
    for (double& v : values_) {
        v *= s;
    }
    return *this;
}

ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(double s, ScalarField a) { return a *= s; }

VectorField::VectorField(GridPtr grid, std::vector<Tangent> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    check_count(grid_, values_.size(), "VectorField");
}

double VectorField::norm(std::size_t i) const {
    const Tangent& t = values_[i];
    return std::sqrt(t.c1 * t.c1 + t.c2 * t.c2);
}

MatrixField::MatrixField(GridPtr grid, std::vector<FrameMatrix> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    check_count(grid_, values_.size(), "MatrixField");
}

}  // namespace cmflow
