#include "svfatlas/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "svfatlas/errors.hpp"

namespace svfatlas {

GridShape::GridShape(std::int64_t nx, std::int64_t ny) : dim(2), extent{nx, ny, 1} { validate(); }

GridShape::GridShape(std::int64_t nx, std::int64_t ny, std::int64_t nz) : dim(3), extent{nx, ny, nz} { validate(); }

GridShape GridShape::from(std::span<const std::int64_t> dims, std::span<const double> spacing) {
    if (dims.size() != 2 && dims.size() != 3) {
        throw InvalidInput("grid dimension must be 2 or 3, got " + std::to_string(dims.size()));
    }
    if (!spacing.empty() && spacing.size() != dims.size()) {
        throw InvalidInput("spacing count does not match grid dimension");
    }
    GridShape s;
    s.dim = static_cast<int>(dims.size());
    s.extent = {1, 1, 1};
    for (std::size_t a = 0; a < dims.size(); ++a) {
        s.extent[a] = dims[a];
        if (!spacing.empty()) s.spacing[a] = spacing[a];
    }
    s.validate();
    return s;
}

Vec GridShape::coord(std::size_t idx) const noexcept {
    const auto i = static_cast<std::int64_t>(idx);
    const std::int64_t x = i % extent[0];
    const std::int64_t y = (i / extent[0]) % extent[1];
    const std::int64_t z = i / (extent[0] * extent[1]);
    return {static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)};
}

bool GridShape::is_interior(std::size_t idx, std::int64_t margin) const noexcept {
    const auto i = static_cast<std::int64_t>(idx);
    const std::int64_t c[3] = {i % extent[0], (i / extent[0]) % extent[1], i / (extent[0] * extent[1])};
    for (int a = 0; a < dim; ++a) {
        if (c[a] < margin || c[a] > extent[a] - 1 - margin) return false;
    }
    return true;
}

void GridShape::validate() const {
    if (dim != 2 && dim != 3) throw InvalidInput("grid dimension must be 2 or 3");
    for (int a = 0; a < dim; ++a) {
        if (extent[a] < 2) throw InvalidInput("every grid extent must be >= 2");
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) throw InvalidInput("grid spacing must be positive");
    }
    for (int a = dim; a < 3; ++a) {
        if (extent[a] != 1) throw InvalidInput("unused grid axes must have extent 1");
    }
}

bool GridShape::operator==(const GridShape &o) const noexcept {
    if (dim != o.dim) return false;
    for (int a = 0; a < 3; ++a) {
        if (extent[a] != o.extent[a]) return false;
        if (a < dim && spacing[a] != o.spacing[a]) return false;
    }
    return true;
}

void require_same_shape(const GridShape &a, const GridShape &b, const char *what) {
    if (a != b) throw InvalidInput(std::string("shape mismatch in ") + what);
}

ScalarField::ScalarField(const GridShape &s, double fill) : shape(s), values(s.voxel_count(), fill) {}

VectorField::VectorField(const GridShape &s, double fill)
    : shape(s), values(s.voxel_count() * static_cast<std::size_t>(s.dim), fill) {}

Vec VectorField::at(std::size_t voxel) const noexcept {
    Vec v{0.0, 0.0, 0.0};
    const double *p = values.data() + voxel * shape.dim;
    for (int c = 0; c < shape.dim; ++c) v[c] = p[c];
    return v;
}

void VectorField::set(std::size_t voxel, const Vec &v) noexcept {
    double *p = values.data() + voxel * shape.dim;
    for (int c = 0; c < shape.dim; ++c) p[c] = v[c];
}

Vec DeformationMap::position(std::size_t voxel) const noexcept {
    Vec p = shape().coord(voxel);
    const Vec u = displacement.at(voxel);
    for (int c = 0; c < shape().dim; ++c) p[c] += u[c];
    return p;
}

LabelField::LabelField(const GridShape &s, std::uint32_t k, std::uint32_t fill)
    : shape(s), labels(s.voxel_count(), fill), num_structures(k) {}

namespace {

struct Cell {
    std::int64_t i0;
    double f;
};

inline Cell locate(double p, std::int64_t n) noexcept {
    p = std::clamp(p, 0.0, static_cast<double>(n - 1));
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(p));
    if (i0 > n - 2) i0 = n - 2;
    return {i0, p - static_cast<double>(i0)};
}

void require_finite(const Vec &p, int dim) {
    for (int a = 0; a < dim; ++a) {
        if (!std::isfinite(p[a])) throw InvalidInput("interpolation point has a non-finite component");
    }
}

// Multilinear interpolation of `ncomp` interleaved components into out[].
inline void sample(const double *data, const GridShape &s, int ncomp, const Vec &p, double *out) noexcept {
    const Cell cx = locate(p[0], s.extent[0]);
    const Cell cy = locate(p[1], s.extent[1]);
    const std::int64_t nx = s.extent[0];
    if (s.dim == 2) {
        const std::size_t i00 = static_cast<std::size_t>(cx.i0 + nx * cy.i0) * ncomp;
        const std::size_t i10 = i00 + ncomp;
        const std::size_t i01 = i00 + static_cast<std::size_t>(nx) * ncomp;
        const std::size_t i11 = i01 + ncomp;
        const double gx = 1.0 - cx.f, gy = 1.0 - cy.f;
        for (int c = 0; c < ncomp; ++c) {
            const double a = data[i00 + c] * gx + data[i10 + c] * cx.f;
            const double b = data[i01 + c] * gx + data[i11 + c] * cx.f;
            out[c] = a * gy + b * cy.f;
        }
        return;
    }
    const Cell cz = locate(p[2], s.extent[2]);
    const std::int64_t ny = s.extent[1];
    const std::size_t base = static_cast<std::size_t>(cx.i0 + nx * (cy.i0 + ny * cz.i0)) * ncomp;
    const std::size_t sx = ncomp, sy = static_cast<std::size_t>(nx) * ncomp,
                      sz = static_cast<std::size_t>(nx * ny) * ncomp;
    const double gx = 1.0 - cx.f, gy = 1.0 - cy.f, gz = 1.0 - cz.f;
    for (int c = 0; c < ncomp; ++c) {
        const double *d = data + base + c;
        const double a0 = d[0] * gx + d[sx] * cx.f;
        const double b0 = d[sy] * gx + d[sy + sx] * cx.f;
        const double a1 = d[sz] * gx + d[sz + sx] * cx.f;
        const double b1 = d[sz + sy] * gx + d[sz + sy + sx] * cx.f;
        out[c] = (a0 * gy + b0 * cy.f) * gz + (a1 * gy + b1 * cy.f) * cz.f;
    }
}

inline std::int64_t nearest(double p, std::int64_t n) noexcept {
    p = std::clamp(p, 0.0, static_cast<double>(n - 1));
    return static_cast<std::int64_t>(std::floor(p + 0.5));
}

// Central/one-sided first difference of a strided sequence at position i.
inline double diff1(const double *d, std::int64_t i, std::int64_t n, std::size_t stride) noexcept {
    if (i == 0) return d[stride] - d[0];
    if (i == n - 1) return d[0] - d[-static_cast<std::ptrdiff_t>(stride)];
    return 0.5 * (d[stride] - d[-static_cast<std::ptrdiff_t>(stride)]);
}

VectorField gradient_impl(const ScalarField &field, bool use_spacing) {
    const GridShape &s = field.shape;
    VectorField g(s);
    const std::size_t strides[3] = {1, static_cast<std::size_t>(s.extent[0]),
                                    static_cast<std::size_t>(s.extent[0] * s.extent[1])};
    for (std::int64_t z = 0; z < s.extent[2]; ++z)
        for (std::int64_t y = 0; y < s.extent[1]; ++y)
            for (std::int64_t x = 0; x < s.extent[0]; ++x) {
                const std::size_t idx = s.index(x, y, z);
                const double *d = field.values.data() + idx;
                const std::int64_t c[3] = {x, y, z};
                for (int a = 0; a < s.dim; ++a) {
                    double v = diff1(d, c[a], s.extent[a], strides[a]);
                    if (use_spacing) v /= s.spacing[a];
                    g.comp(idx, a) = v;
                }
            }
    return g;
}

} // namespace

double interpolate(const ScalarField &field, const Vec &point) {
    require_finite(point, field.shape.dim);
    double out = 0.0;
    sample(field.values.data(), field.shape, 1, point, &out);
    return out;
}

Vec interpolate_vec(const VectorField &field, const Vec &point) {
    require_finite(point, field.shape.dim);
    Vec out{0.0, 0.0, 0.0};
    sample(field.values.data(), field.shape, field.shape.dim, point, out.data());
    return out;
}

namespace {

// out(x) = field(Phi(x)) for `ncomp` interleaved components; walks the grid
// directly instead of decoding every linear index.
void pullback(const double *data, const GridShape &s, int ncomp, const DeformationMap &map, double *out) {
    const double *u = map.displacement.values.data();
    const int d = s.dim;
    std::size_t i = 0;
    for (std::int64_t z = 0; z < s.extent[2]; ++z)
        for (std::int64_t y = 0; y < s.extent[1]; ++y)
            for (std::int64_t x = 0; x < s.extent[0]; ++x, ++i) {
                const double *ui = u + i * d;
                const Vec p{x + ui[0], y + ui[1], d == 3 ? z + ui[2] : 0.0};
                if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
                    throw InvalidInput("interpolation point has a non-finite component");
                }
                sample(data, s, ncomp, p, out + i * ncomp);
            }
}

} // namespace

ScalarField warp(const ScalarField &image, const DeformationMap &map) {
    require_same_shape(image.shape, map.shape(), "warp");
    ScalarField out(image.shape);
    pullback(image.values.data(), image.shape, 1, map, out.values.data());
    return out;
}

VectorField resample(const VectorField &field, const DeformationMap &map) {
    require_same_shape(field.shape, map.shape(), "resample");
    VectorField out(field.shape);
    pullback(field.values.data(), field.shape, field.shape.dim, map, out.values.data());
    return out;
}

ScalarField warp_adjoint(const ScalarField &values, const DeformationMap &map) {
    require_same_shape(values.shape, map.shape(), "warp_adjoint");
    const GridShape &s = values.shape;
    ScalarField out(s);
    const std::int64_t nx = s.extent[0], ny = s.extent[1];
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Vec p = map.position(i);
        require_finite(p, s.dim);
        const Cell cx = locate(p[0], s.extent[0]);
        const Cell cy = locate(p[1], s.extent[1]);
        const double v = values[i];
        const double wx[2] = {1.0 - cx.f, cx.f}, wy[2] = {1.0 - cy.f, cy.f};
        if (s.dim == 2) {
            for (int b = 0; b < 2; ++b)
                for (int a = 0; a < 2; ++a)
                    out.values[static_cast<std::size_t>(cx.i0 + a + nx * (cy.i0 + b))] += v * wx[a] * wy[b];
            continue;
        }
        const Cell cz = locate(p[2], s.extent[2]);
        const double wz[2] = {1.0 - cz.f, cz.f};
        for (int c = 0; c < 2; ++c)
            for (int b = 0; b < 2; ++b)
                for (int a = 0; a < 2; ++a)
                    out.values[static_cast<std::size_t>(cx.i0 + a + nx * (cy.i0 + b + ny * (cz.i0 + c)))] +=
                        v * wx[a] * wy[b] * wz[c];
    }
    return out;
}

LabelField warp_labels(const LabelField &labels, const DeformationMap &map) {
    require_same_shape(labels.shape, map.shape(), "warp_labels");
    const GridShape &s = labels.shape;
    LabelField out(s, labels.num_structures);
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        const Vec p = map.position(i);
        require_finite(p, s.dim);
        const std::int64_t x = nearest(p[0], s.extent[0]);
        const std::int64_t y = nearest(p[1], s.extent[1]);
        const std::int64_t z = s.dim == 3 ? nearest(p[2], s.extent[2]) : 0;
        out.labels[i] = labels.labels[s.index(x, y, z)];
    }
    return out;
}

VectorField gradient(const ScalarField &field) { return gradient_impl(field, true); }

VectorField voxel_gradient(const ScalarField &field) { return gradient_impl(field, false); }

ScalarField jacobian_determinant(const DeformationMap &map) {
    const GridShape &s = map.shape();
    ScalarField det(s);
    const int d = s.dim;
    const std::size_t strides[3] = {1, static_cast<std::size_t>(s.extent[0]),
                                    static_cast<std::size_t>(s.extent[0] * s.extent[1])};
    const double *u = map.displacement.values.data();
    for (std::int64_t z = 0; z < s.extent[2]; ++z)
        for (std::int64_t y = 0; y < s.extent[1]; ++y)
            for (std::int64_t x = 0; x < s.extent[0]; ++x) {
                const std::size_t idx = s.index(x, y, z);
                const std::int64_t c[3] = {x, y, z};
                Mat3 J{};
                for (int k = 0; k < d; ++k) {
                    for (int a = 0; a < d; ++a) {
                        J[k][a] = (k == a ? 1.0 : 0.0) +
                                  diff1(u + idx * d + k, c[a], s.extent[a], strides[a] * d);
                    }
                }
                if (d == 2) {
                    det[idx] = J[0][0] * J[1][1] - J[0][1] * J[1][0];
                } else {
                    det[idx] = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                               J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                               J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
                }
            }
    return det;
}

std::vector<ComponentHessians> hessian_components(const DeformationMap &map) {
    const GridShape &s = map.shape();
    const int d = s.dim;
    for (int a = 0; a < d; ++a) {
        if (s.extent[a] < 3) throw InvalidInput("hessian_components requires every extent >= 3");
    }
    std::vector<ComponentHessians> out(s.voxel_count());
    const std::int64_t strides[3] = {1, s.extent[0], s.extent[0] * s.extent[1]};
    const double *u = map.displacement.values.data();
    for (std::int64_t z = 0; z < s.extent[2]; ++z)
        for (std::int64_t y = 0; y < s.extent[1]; ++y)
            for (std::int64_t x = 0; x < s.extent[0]; ++x) {
                const std::int64_t c[3] = {x, y, z};
                // Stencil centre clamped into the interior.
                std::int64_t cc[3] = {x, y, z};
                for (int a = 0; a < d; ++a) cc[a] = std::clamp<std::int64_t>(c[a], 1, s.extent[a] - 2);
                const std::int64_t centre = cc[0] + s.extent[0] * (cc[1] + s.extent[1] * cc[2]);
                auto val = [&](std::int64_t lin, int k) { return u[lin * d + k]; };
                ComponentHessians &H = out[s.index(x, y, z)];
                for (int k = 0; k < d; ++k) {
                    Mat3 h{};
                    for (int a = 0; a < d; ++a) {
                        const std::int64_t sa = strides[a];
                        h[a][a] = (val(centre + sa, k) - 2.0 * val(centre, k) + val(centre - sa, k)) /
                                  (s.spacing[a] * s.spacing[a]);
                        for (int b = a + 1; b < d; ++b) {
                            const std::int64_t sb = strides[b];
                            const double m = 0.25 *
                                             (val(centre + sa + sb, k) - val(centre + sa - sb, k) -
                                              val(centre - sa + sb, k) + val(centre - sa - sb, k)) /
                                             (s.spacing[a] * s.spacing[b]);
                            h[a][b] = m;
                            h[b][a] = m;
                        }
                    }
                    H[k] = h;
                }
            }
    return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw InvalidInput("gaussian sigma must be positive");
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + r];
    }
    for (double &v : k) v /= sum;
    return k;
}

// Blur `ncomp` interleaved channels in place along every axis.
void blur(std::vector<double> &data, const GridShape &s, int ncomp, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    std::vector<double> tmp(data.size());
    const std::int64_t strides[3] = {1, s.extent[0], s.extent[0] * s.extent[1]};
    for (int a = 0; a < s.dim; ++a) {
        const std::int64_t n = s.extent[a];
        for (std::size_t idx = 0; idx < s.voxel_count(); ++idx) {
            const auto li = static_cast<std::int64_t>(idx);
            const std::int64_t pos = (li / strides[a]) % n;
            const std::int64_t line0 = li - pos * strides[a];
            for (int c = 0; c < ncomp; ++c) {
                double acc = 0.0;
                for (int j = -r; j <= r; ++j) {
                    const std::int64_t q = std::clamp<std::int64_t>(pos + j, 0, n - 1);
                    acc += k[j + r] * data[static_cast<std::size_t>(line0 + q * strides[a]) * ncomp + c];
                }
                tmp[idx * ncomp + c] = acc;
            }
        }
        data.swap(tmp);
    }
}

} // namespace

ScalarField gaussian_smooth(const ScalarField &field, double sigma) {
    ScalarField out = field;
    blur(out.values, out.shape, 1, sigma);
    return out;
}

VectorField gaussian_smooth(const VectorField &field, double sigma) {
    VectorField out = field;
    blur(out.values, out.shape, out.shape.dim, sigma);
    return out;
}

} // namespace svfatlas
