#pragma once

// Dense regular-grid containers and the interpolation / finite-difference
// primitives the rest of the library is built on.
//
// Conventions:
//  - 2D or 3D grids, x-fastest voxel order.
//  - All coordinates and displacements are in voxel units. Spacing only
//    enters the derivative operators (gradient, hessian_components).
//  - Sampling outside the domain clamps the coordinate to the border.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace svfatlas {

using Vec = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

struct GridShape {
    int dim = 2;
    std::array<std::int64_t, 3> extent{2, 2, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};

    GridShape() = default;
    GridShape(std::int64_t nx, std::int64_t ny);
    GridShape(std::int64_t nx, std::int64_t ny, std::int64_t nz);

    // dims.size() must be 2 or 3; spacing empty (unit) or the same length.
    static GridShape from(std::span<const std::int64_t> dims, std::span<const double> spacing = {});

    std::size_t voxel_count() const noexcept {
        return static_cast<std::size_t>(extent[0] * extent[1] * extent[2]);
    }
    std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z = 0) const noexcept {
        return static_cast<std::size_t>(x + extent[0] * (y + extent[1] * z));
    }
    // Grid coordinate of a linear voxel index (unused components are 0).
    Vec coord(std::size_t idx) const noexcept;

    // True when the voxel is at least `margin` voxels away from every face.
    bool is_interior(std::size_t idx, std::int64_t margin = 1) const noexcept;

    // Throws InvalidInput unless every extent >= 2 and spacing > 0.
    void validate() const;

    bool operator==(const GridShape &o) const noexcept;
    bool operator!=(const GridShape &o) const noexcept { return !(*this == o); }
};

struct ScalarField {
    GridShape shape;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(const GridShape &s, double fill = 0.0);

    std::size_t size() const noexcept { return values.size(); }
    double &operator[](std::size_t i) noexcept { return values[i]; }
    double operator[](std::size_t i) const noexcept { return values[i]; }
    double &at(std::int64_t x, std::int64_t y, std::int64_t z = 0) noexcept { return values[shape.index(x, y, z)]; }
    double at(std::int64_t x, std::int64_t y, std::int64_t z = 0) const noexcept {
        return values[shape.index(x, y, z)];
    }
};

// One d-vector per voxel, components interleaved.
struct VectorField {
    GridShape shape;
    std::vector<double> values;

    VectorField() = default;
    explicit VectorField(const GridShape &s, double fill = 0.0);

    std::size_t voxel_count() const noexcept { return shape.voxel_count(); }
    double &comp(std::size_t voxel, int c) noexcept { return values[voxel * shape.dim + c]; }
    double comp(std::size_t voxel, int c) const noexcept { return values[voxel * shape.dim + c]; }
    Vec at(std::size_t voxel) const noexcept;
    void set(std::size_t voxel, const Vec &v) noexcept;
};

// Phi(x) = x + u(x). The zero displacement is the identity map.
struct DeformationMap {
    VectorField displacement;

    DeformationMap() = default;
    explicit DeformationMap(VectorField u) : displacement(std::move(u)) {}
    static DeformationMap identity(const GridShape &s) { return DeformationMap(VectorField(s)); }

    const GridShape &shape() const noexcept { return displacement.shape; }
    // Phi evaluated at grid point `voxel`.
    Vec position(std::size_t voxel) const noexcept;
};

struct LabelField {
    GridShape shape;
    std::vector<std::uint32_t> labels;
    std::uint32_t num_structures = 0;

    LabelField() = default;
    LabelField(const GridShape &s, std::uint32_t num_structures, std::uint32_t fill = 0);

    std::uint32_t &operator[](std::size_t i) noexcept { return labels[i]; }
    std::uint32_t operator[](std::size_t i) const noexcept { return labels[i]; }
    std::uint32_t &at(std::int64_t x, std::int64_t y, std::int64_t z = 0) noexcept {
        return labels[shape.index(x, y, z)];
    }
    std::uint32_t at(std::int64_t x, std::int64_t y, std::int64_t z = 0) const noexcept {
        return labels[shape.index(x, y, z)];
    }
};

// Multilinear interpolation with clamp-to-border.
double interpolate(const ScalarField &field, const Vec &point);
Vec interpolate_vec(const VectorField &field, const Vec &point);

// output(x) = image(Phi(x)).
ScalarField warp(const ScalarField &image, const DeformationMap &map);
// Componentwise warp of a vector field.
VectorField resample(const VectorField &field, const DeformationMap &map);
// Transpose of warp(., map) as a linear operator: scatters `values` back
// onto the source grid with the multilinear weights warp() gathers with.
ScalarField warp_adjoint(const ScalarField &values, const DeformationMap &map);
// Nearest-neighbour label pullback.
LabelField warp_labels(const LabelField &labels, const DeformationMap &map);

// Central differences inside, one-sided at the faces, divided by spacing.
VectorField gradient(const ScalarField &field);
// Same stencil in voxel units (no spacing); used for chain rules on maps
// expressed in voxel coordinates.
VectorField voxel_gradient(const ScalarField &field);

// det(D Phi) with the finite-difference stencil of `gradient` applied to the
// map coordinates (identity + displacement). Voxel units, so spacing cancels.
ScalarField jacobian_determinant(const DeformationMap &map);

// Per-voxel Hessians of every map component: result[voxel][k] is the Hessian
// of component k. Second central differences (divided by spacing); voxels on
// a face reuse the stencil of the nearest interior voxel.
using ComponentHessians = std::array<Mat3, 3>;
std::vector<ComponentHessians> hessian_components(const DeformationMap &map);

// Separable Gaussian blur (clamped borders, kernel radius ceil(3 sigma)).
ScalarField gaussian_smooth(const ScalarField &field, double sigma);
VectorField gaussian_smooth(const VectorField &field, double sigma);

void require_same_shape(const GridShape &a, const GridShape &b, const char *what);

} // namespace svfatlas
