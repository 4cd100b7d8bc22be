#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace cmflow {

class SphereGrid;
using GridPtr = std::shared_ptr<const SphereGrid>;

// Components of a tangent vector in the node's orthonormal frame. On S^1 only
// c1 is used.
struct Tangent {
    double c1 = 0.0;
    double c2 = 0.0;
};

// Symmetric matrix in the node's orthonormal frame, stored by its upper
// triangle. On S^1 only m11 is used.
struct FrameMatrix {
    double m11 = 0.0;
    double m12 = 0.0;
    double m22 = 0.0;
};

// One real value per grid node.
class ScalarField {
public:
    ScalarField(GridPtr grid, std::vector<double> values);

    static ScalarField constant(GridPtr grid, double value);

    const GridPtr& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    double min() const;
    double max() const;
    // Largest absolute value.
    double max_abs() const;

    ScalarField& operator+=(const ScalarField& other);
    ScalarField& operator-=(const ScalarField& other);
    ScalarField& operator*=(double s);

private:
    GridPtr grid_;
    std::vector<double> values_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(double s, ScalarField a);

// Tangent vector per node.
class VectorField {
public:
    VectorField(GridPtr grid, std::vector<Tangent> values);

    const GridPtr& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }
    const Tangent& operator[](std::size_t i) const { return values_[i]; }
    std::span<const Tangent> values() const { return values_; }

    // Frame norm at node i.
    double norm(std::size_t i) const;

private:
    GridPtr grid_;
    std::vector<Tangent> values_;
};

// Symmetric (n-1)x(n-1) matrix per node.
class MatrixField {
public:
    MatrixField(GridPtr grid, std::vector<FrameMatrix> values);

    const GridPtr& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }
    const FrameMatrix& operator[](std::size_t i) const { return values_[i]; }
    FrameMatrix& operator[](std::size_t i) { return values_[i]; }
    std::span<const FrameMatrix> values() const { return values_; }

private:
    GridPtr grid_;
    std::vector<FrameMatrix> values_;
};

}  // namespace cmflow
