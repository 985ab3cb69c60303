#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "svfatlas/errors.hpp"
#include "svfatlas/grid.hpp"

using namespace svfatlas;
using testing::make_map;
using testing::make_scalar;

TEST_SUITE("grid") {

TEST_CASE("shape validation") {
    CHECK_THROWS_AS(GridShape(1, 4), InvalidInput);
    std::vector<std::int64_t> four{2, 2, 2, 2};
    CHECK_THROWS_AS(GridShape::from(four), InvalidInput);
    std::vector<std::int64_t> dims{4, 5};
    std::vector<double> bad{1.0, 0.0};
    CHECK_THROWS_AS(GridShape::from(dims, bad), InvalidInput);
    const GridShape s(4, 5);
    CHECK(s.voxel_count() == 20);
    CHECK(s.index(3, 2) == 11);
    CHECK(s.coord(11) == Vec{3, 2, 0});
    CHECK(s.is_interior(s.index(1, 1)));
    CHECK_FALSE(s.is_interior(s.index(0, 2)));
}

TEST_CASE("interpolate reproduces constants and corners") {
    const GridShape s(5, 4);
    const ScalarField c(s, 0.7);
    CHECK(interpolate(c, {1.3, 2.6, 0}) == doctest::Approx(0.7).epsilon(1e-15));

    ScalarField f(GridShape(2, 2));
    f.at(0, 0) = 0;
    f.at(1, 0) = 1;
    f.at(0, 1) = 2;
    f.at(1, 1) = 3;
    CHECK(interpolate(f, {0.5, 0.5, 0}) == 1.5);
    CHECK(interpolate(f, {-5, -5, 0}) == 0.0);
    CHECK(interpolate(f, {9, 9, 0}) == 3.0);
    CHECK_THROWS_AS(interpolate(f, {std::nan(""), 0, 0}), InvalidInput);
}

TEST_CASE("interpolate is exact at grid points and on linear fields") {
    const GridShape s(6, 5, 4);
    const ScalarField lin = make_scalar(s, [](double x, double y, double z) { return 0.3 * x - 1.1 * y + 2 * z + 4; });
    for (std::size_t i = 0; i < lin.size(); ++i) CHECK(interpolate(lin, s.coord(i)) == lin[i]);
    CHECK(interpolate(lin, {2.25, 1.5, 2.75}) == doctest::Approx(0.3 * 2.25 - 1.1 * 1.5 + 2 * 2.75 + 4));
}

TEST_CASE("interpolate_vec") {
    const GridShape s(4, 4);
    const VectorField zero(s);
    CHECK(interpolate_vec(zero, {1.2, 2.2, 0}) == Vec{0, 0, 0});
    VectorField c(s);
    for (std::size_t i = 0; i < s.voxel_count(); ++i) c.set(i, {0.25, -2, 0});
    const Vec cv = interpolate_vec(c, {1.7, 0.2, 0});
    CHECK(cv[0] == doctest::Approx(0.25));
    CHECK(cv[1] == doctest::Approx(-2));
    VectorField lin(s);
    for (std::size_t i = 0; i < s.voxel_count(); ++i) lin.set(i, s.coord(i));
    const Vec lv = interpolate_vec(lin, {0.25, 0.75, 0});
    CHECK(lv[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(lv[1] == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("warp by identity and by an integer translation") {
    const GridShape s(5, 4);
    const ScalarField img = make_scalar(s, [](double x, double y, double) { return std::sin(x) + y * y; });
    CHECK(warp(img, DeformationMap::identity(s)).values == img.values);

    const ScalarField moved = warp(img, testing::translation(s, 1, 0));
    for (std::int64_t y = 0; y < 4; ++y) {
        for (std::int64_t x = 0; x < 4; ++x) CHECK(moved.at(x, y) == img.at(x + 1, y));
        CHECK(moved.at(4, y) == img.at(4, y));  // border column duplicated
    }
}

TEST_CASE("resample matches per-component warps") {
    const GridShape s(6, 7);
    VectorField f(s);
    for (std::size_t i = 0; i < s.voxel_count(); ++i) f.set(i, {std::sin(0.3 * i), std::cos(0.2 * i), 0});
    const DeformationMap m = make_map(s, [](const Vec &p) { return Vec{0.3 * std::sin(p[1]), -0.4 + 0.1 * p[0], 0}; });
    const VectorField r = resample(f, m);
    for (std::size_t i = 0; i < s.voxel_count(); ++i) {
        const Vec ref = interpolate_vec(f, m.position(i));
        CHECK(r.comp(i, 0) == ref[0]);
        CHECK(r.comp(i, 1) == ref[1]);
    }
}

TEST_CASE("warp_adjoint is the transpose of warp") {
    const GridShape s(7, 6);
    const DeformationMap m = make_map(s, [](const Vec &p) { return Vec{0.7 * std::sin(p[1]), 0.5 * std::cos(p[0]) - 0.2, 0}; });
    const ScalarField a = make_scalar(s, [](double x, double y, double) { return std::cos(0.7 * x + y); });
    const ScalarField b = make_scalar(s, [](double x, double y, double) { return x * 0.1 - y * y * 0.05; });
    const ScalarField wa = warp(a, m), atb = warp_adjoint(b, m);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        lhs += wa[i] * b[i];
        rhs += a[i] * atb[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("warp_labels") {
    const GridShape s(6, 6);
    LabelField l(s, 2);
    l.at(3, 2) = 1;
    l.at(0, 5) = 2;
    CHECK(warp_labels(l, DeformationMap::identity(s)).labels == l.labels);
    const LabelField moved = warp_labels(l, testing::translation(s, 1, 0));
    CHECK(moved.at(2, 2) == 1);
    CHECK(moved.at(3, 2) == 0);

    const DeformationMap wobble = make_map(s, [](const Vec &p) { return Vec{1.7 * std::sin(p[1]), -1.3 * std::cos(p[0]), 0}; });
    const LabelField w = warp_labels(l, wobble);
    const std::set<std::uint32_t> present(l.labels.begin(), l.labels.end());
    for (auto v : w.labels) CHECK(present.count(v) == 1);
}

TEST_CASE("gradient") {
    const GridShape s(6, 5);
    for (double v : gradient(ScalarField(s, 3.0)).values) CHECK(v == 0.0);
    const VectorField gx = gradient(make_scalar(s, [](double x, double, double) { return x; }));
    for (std::size_t i = 0; i < s.voxel_count(); ++i) {
        CHECK(gx.comp(i, 0) == 1.0);
        CHECK(gx.comp(i, 1) == 0.0);
    }
    const VectorField gq = gradient(make_scalar(s, [](double x, double, double) { return x * x; }));
    CHECK(gq.comp(s.index(3, 2), 0) == 6.0);

    std::vector<std::int64_t> dims{6, 5};
    std::vector<double> sp{2.0, 0.5};
    const GridShape ss = GridShape::from(dims, sp);
    const ScalarField f = make_scalar(ss, [](double x, double y, double) { return 3 * x + y; });
    const VectorField g = gradient(f), gv = voxel_gradient(f);
    CHECK(g.comp(ss.index(2, 2), 0) == doctest::Approx(1.5));
    CHECK(g.comp(ss.index(2, 2), 1) == doctest::Approx(2.0));
    CHECK(gv.comp(ss.index(2, 2), 0) == doctest::Approx(3.0));
}

TEST_CASE("jacobian determinant") {
    const GridShape s(8, 8);
    for (double v : jacobian_determinant(DeformationMap::identity(s)).values) CHECK(v == 1.0);
    for (double v : jacobian_determinant(testing::translation(s, 2.5, -1)).values) CHECK(v == doctest::Approx(1.0));
    const DeformationMap scale = make_map(s, [](const Vec &p) { return Vec{0.5 * p[0], 0.5 * p[1], 0}; });
    const ScalarField d = jacobian_determinant(scale);
    for (std::size_t i = 0; i < s.voxel_count(); ++i)
        if (s.is_interior(i)) CHECK(d[i] == doctest::Approx(2.25).epsilon(1e-12));

    const double A[2][2] = {{1.2, 0.3}, {-0.4, 0.9}};
    const DeformationMap aff = make_map(s, [&](const Vec &p) {
        return Vec{A[0][0] * p[0] + A[0][1] * p[1] + 1 - p[0], A[1][0] * p[0] + A[1][1] * p[1] - 2 - p[1], 0};
    });
    const ScalarField da = jacobian_determinant(aff);
    for (std::size_t i = 0; i < s.voxel_count(); ++i)
        if (s.is_interior(i)) CHECK(std::abs(da[i] - (1.2 * 0.9 + 0.3 * 0.4)) < 1e-10);

    const GridShape s3(5, 5, 5);
    const DeformationMap sc3 = make_map(s3, [](const Vec &p) { return Vec{p[0], 0, -0.5 * p[2]}; });
    const ScalarField d3 = jacobian_determinant(sc3);
    CHECK(d3[s3.index(2, 2, 2)] == doctest::Approx(1.0));
}

TEST_CASE("hessian components") {
    const GridShape s(7, 6);
    const DeformationMap aff = make_map(s, [](const Vec &p) { return Vec{0.3 * p[0] - 0.2 * p[1] + 4, 0.1 * p[1] + 0.5 * p[0], 0}; });
    const auto H = hessian_components(aff);
    for (std::size_t i = 0; i < s.voxel_count(); ++i) {
        if (!s.is_interior(i)) continue;
        for (int k = 0; k < 2; ++k)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) CHECK(std::abs(H[i][k][a][b]) < 1e-10);
    }
    const DeformationMap quad = make_map(s, [](const Vec &p) { return Vec{p[0] * p[0] - p[0], 0, 0}; });
    const auto Hq = hessian_components(quad);
    const auto &h = Hq[s.index(3, 3)][0];
    CHECK(h[0][0] == doctest::Approx(2.0));
    CHECK(h[0][1] == doctest::Approx(0.0));
    CHECK(h[1][1] == doctest::Approx(0.0));
    for (const auto &row : hessian_components(DeformationMap::identity(s))[s.index(2, 2)][1])
        for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("gaussian smoothing keeps constants") {
    const GridShape s(9, 7);
    for (double v : gaussian_smooth(ScalarField(s, 0.4), 2.0).values) CHECK(v == doctest::Approx(0.4));
}

}
