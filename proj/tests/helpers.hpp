#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "svfatlas/grid.hpp"
#include "svfatlas/svf.hpp"

namespace testing {

using namespace svfatlas;

inline ScalarField make_scalar(const GridShape &s, const std::function<double(double, double, double)> &f) {
    ScalarField out(s);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Vec c = s.coord(i);
        out[i] = f(c[0], c[1], c[2]);
    }
    return out;
}

inline DeformationMap make_map(const GridShape &s, const std::function<Vec(const Vec &)> &disp) {
    VectorField u(s);
    for (std::size_t i = 0; i < s.voxel_count(); ++i) u.set(i, disp(s.coord(i)));
    return DeformationMap(std::move(u));
}

inline DeformationMap translation(const GridShape &s, double a, double b, double c = 0.0) {
    return make_map(s, [&](const Vec &) { return Vec{a, b, c}; });
}

// Gaussian-smoothed white noise rescaled so that the largest vector has
// length `max_norm`.
inline VectorField smooth_velocity(const GridShape &s, std::uint64_t seed, double max_norm, double sigma) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    VectorField v(s);
    for (double &c : v.values) c = nd(rng);
    v = gaussian_smooth(v, sigma);
    double mx = 0.0;
    for (std::size_t i = 0; i < v.voxel_count(); ++i) {
        const Vec a = v.at(i);
        mx = std::max(mx, std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]));
    }
    for (double &c : v.values) c *= max_norm / mx;
    return v;
}

// Largest interior distance between the points of two maps.
inline double interior_max_diff(const DeformationMap &a, const DeformationMap &b, std::int64_t margin = 1) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.shape().voxel_count(); ++i) {
        if (!a.shape().is_interior(i, margin)) continue;
        const Vec p = a.position(i), q = b.position(i);
        double sq = 0.0;
        for (int c = 0; c < a.shape().dim; ++c) sq += (p[c] - q[c]) * (p[c] - q[c]);
        mx = std::max(mx, std::sqrt(sq));
    }
    return mx;
}

inline double interior_mean_diff(const DeformationMap &a, const DeformationMap &b, std::int64_t margin = 1) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.shape().voxel_count(); ++i) {
        if (!a.shape().is_interior(i, margin)) continue;
        const Vec p = a.position(i), q = b.position(i);
        double sq = 0.0;
        for (int c = 0; c < a.shape().dim; ++c) sq += (p[c] - q[c]) * (p[c] - q[c]);
        sum += std::sqrt(sq);
        ++n;
    }
    return sum / static_cast<double>(n);
}

inline double rel_l2(const std::vector<double> &a, const std::vector<double> &b) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        num += (a[k] - b[k]) * (a[k] - b[k]);
        den += b[k] * b[k];
    }
    return std::sqrt(num / den);
}

// Gradient-check fixture: a shallow ramp with a smooth compact bump. Linear
// intensity keeps the bilinear and central-difference derivatives in step.
inline ScalarField ramp_bump(std::int64_t n, double cx, double cy, double radius, double amp) {
    return make_scalar(GridShape(n, n), [&](double x, double y, double) {
        const double d = std::hypot(x - cx, y - cy) / radius;
        const double bump = d < 1.0 ? std::pow(std::cos(std::numbers::pi / 2.0 * d), 4) : 0.0;
        return 0.2 + 0.03 * x + 0.01 * y + amp * bump;
    });
}

// Smooth velocity vanishing on the border (sin^2 window times low-frequency
// sinusoids with random phases), peak component about `amp`.
inline VectorField windowed_velocity(std::int64_t n, std::mt19937_64 &rng, double amp) {
    const GridShape s(n, n);
    VectorField v(s);
    std::normal_distribution<double> nd;
    double a[2][4];
    for (auto &row : a)
        for (double &x : row) x = nd(rng);
    const double pi = std::numbers::pi;
    for (std::int64_t y = 0; y < n; ++y)
        for (std::int64_t x = 0; x < n; ++x) {
            const double u = x / double(n - 1), w = y / double(n - 1);
            const double win = std::pow(std::sin(pi * u) * std::sin(pi * w), 2);
            for (int c = 0; c < 2; ++c)
                v.comp(s.index(x, y), c) =
                    amp * win * (a[c][0] * std::sin(2 * pi * u + a[c][1]) + a[c][2] * std::cos(2 * pi * w + a[c][3])) / 2;
        }
    return v;
}

} // namespace testing
