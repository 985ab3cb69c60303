#include <doctest.h>

#include "helpers.hpp"
#include "svfatlas/errors.hpp"
#include "svfatlas/losses.hpp"
#include "svfatlas/synth.hpp"

using namespace svfatlas;
using testing::make_map;
using testing::make_scalar;

namespace {

ScalarField blob(const GridShape &s, double cx, double cy) {
    return make_scalar(s, [&](double x, double y, double) {
        return std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / 18.0);
    });
}

} // namespace

TEST_SUITE("losses") {

TEST_CASE("mse oracles") {
    const GridShape s(2, 2);
    const ScalarField a = make_scalar(s, [](double x, double y, double) { return x + 2 * y; });
    CHECK(mse(a, a) == 0.0);
    ScalarField b = a;
    for (double &v : b.values) v += 0.5;
    CHECK(mse(a, b) == 0.25);

    ScalarField p(s), q(s);
    p.values = {0, 1, 0, 1};
    q.values = {1, 3, 1, 3};
    CHECK(mse(p, q) == 2.5);
    CHECK_THROWS_AS(mse(a, ScalarField(GridShape(3, 2))), InvalidInput);
}

TEST_CASE("ncc oracles") {
    const GridShape s(6, 5);
    const ScalarField a = make_scalar(s, [](double x, double y, double) { return std::sin(x) + 0.3 * y; });
    ScalarField neg = a, aff = a;
    for (double &v : neg.values) v = -v;
    for (double &v : aff.values) v = 3 * v + 7;
    CHECK(std::abs(ncc_loss(a, a)) < 1e-12);
    CHECK(ncc_loss(a, neg) == doctest::Approx(2.0));
    CHECK(std::abs(ncc_loss(a, aff)) < 1e-12);
    CHECK_THROWS_AS(ncc_loss(a, ScalarField(s, 0.3)), DegenerateSimilarity);
    for (double alpha : {0.01, 0.5, 40.0}) {
        ScalarField t = a;
        for (double &v : t.values) v = alpha * v - 2;
        CHECK(std::abs(ncc_loss(a, t)) < 1e-12);
    }
}

TEST_CASE("similarity gradients match finite differences") {
    const GridShape s(5, 4);
    const ScalarField a = make_scalar(s, [](double x, double y, double) { return std::cos(x + 0.4 * y); });
    const ScalarField b = make_scalar(s, [](double x, double y, double) { return 0.2 * x - 0.1 * y * y; });
    for (Similarity kind : {Similarity::mse, Similarity::ncc}) {
        const ScalarField g = similarity_gradient(kind, a, b);
        for (std::size_t i = 0; i < a.size(); ++i) {
            ScalarField p = a, m = a;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            const double fd = (similarity(kind, p, b) - similarity(kind, m, b)) / 2e-6;
            CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("similarity names") {
    CHECK(parse_similarity("mse") == Similarity::mse);
    CHECK(parse_similarity("ncc") == Similarity::ncc);
    CHECK(to_string(Similarity::ncc) == "ncc");
    CHECK_THROWS_AS(parse_similarity("lncc"), ConfigError);
}

TEST_CASE("bending energy") {
    const GridShape s(9, 8);
    CHECK(bending_energy(DeformationMap::identity(s)) == 0.0);
    const DeformationMap aff = make_map(s, [](const Vec &p) { return Vec{0.2 * p[0] - 0.7 * p[1] + 3, 1.1 * p[0] - 2, 0}; });
    CHECK(bending_energy(aff) < 1e-10);
    const DeformationMap quad = make_map(s, [](const Vec &p) { return Vec{p[0] * p[0], 0, 0}; });
    CHECK(bending_energy(quad) == doctest::Approx(4.0));

    // adding an affine map does not change the energy
    const DeformationMap wav = make_map(s, [](const Vec &p) { return Vec{std::sin(p[0] / 2), std::cos(p[1] / 3), 0}; });
    VectorField sum = wav.displacement;
    for (std::size_t k = 0; k < sum.values.size(); ++k) sum.values[k] += aff.displacement.values[k];
    CHECK(std::abs(bending_energy(DeformationMap(sum)) - bending_energy(wav)) < 1e-10);
}

TEST_CASE("pair_atlas_loss") {
    const GridShape s(24, 24);
    const ScalarField a = blob(s, 10, 11), b = blob(s, 13, 9);
    const DeformationMap id = DeformationMap::identity(s);
    CHECK(pair_atlas_loss(a, a, id, id) == 0.0);
    const DeformationMap f1 = make_map(s, [](const Vec &p) { return Vec{0.3 * std::sin(p[1] / 4), 0.2, 0}; });
    CHECK(pair_atlas_loss(a, b, f1, id) == pair_atlas_loss(b, a, id, f1));

    // b = a shifted by (2,0): aligning it by a translation of +2
    const ScalarField shifted = make_scalar(s, [](double x, double y, double) {
        return std::exp(-((x - 12) * (x - 12) + (y - 11) * (y - 11)) / 18.0);
    });
    const double residual = pair_atlas_loss(a, shifted, id, testing::translation(s, 2, 0));
    CHECK(residual < 1e-6);
}

TEST_CASE("pair_image_loss") {
    const GridShape s(20, 20);
    const ScalarField a = blob(s, 9, 10), b = blob(s, 11, 9);
    const DeformationMap id = DeformationMap::identity(s);
    CHECK(pair_image_loss(a, a, id, id, id, id) == 0.0);
    const DeformationMap f1 = integrate(testing::smooth_velocity(s, 1, 1.0, 4.0));
    const DeformationMap g1 = integrate_inverse(testing::smooth_velocity(s, 1, 1.0, 4.0));
    const DeformationMap f2 = integrate(testing::smooth_velocity(s, 2, 1.0, 4.0));
    const DeformationMap g2 = integrate_inverse(testing::smooth_velocity(s, 2, 1.0, 4.0));
    CHECK(pair_image_loss(a, b, f1, g1, f2, g2) == pair_image_loss(b, a, f2, g2, f1, g1));
    CHECK(pair_image_loss(a, b, f1, g1, f2, g2) >= 0.0);
}

TEST_CASE("pair_image_loss with ground-truth maps on a clean synthetic pair") {
    SynthConfig c;
    c.N = 2;
    c.noise_sigma = 0.0;
    c.seed = 5;
    const SynthCohort syn = generate(c);
    const auto &I = syn.cohort.images;
    // only resampling error remains
    const double v = pair_image_loss(I[0], I[1], syn.fwd[0], syn.inv[0], syn.fwd[1], syn.inv[1]);
    CHECK(v <= 1e-3);
}

TEST_CASE("total_pair_objective") {
    const GridShape s(16, 16);
    const ScalarField atlas = blob(s, 8, 8), a = blob(s, 7, 8), b = blob(s, 9, 7);
    const VectorField vi = testing::smooth_velocity(s, 4, 0.8, 3.0), vj = testing::smooth_velocity(s, 5, 0.8, 3.0);

    LossWeights w{10.0, 1.0, 0.5, 2.0};
    const PairObjective o = total_pair_objective(atlas, a, b, vi, vj, w, 6);
    CHECK(std::abs(o.sim + o.reg + o.pair_atlas + o.pair_image - o.total) < 1e-12);
    CHECK(o.sim == doctest::Approx(10.0 * (o.sim_i + o.sim_j)));
    CHECK(o.pair_image == doctest::Approx(2.0 * o.raw_pair_image));

    LossWeights zero{10.0, 1.0, 0.0, 0.0};
    const PairObjective z = total_pair_objective(atlas, a, b, vi, vj, zero, 6);
    CHECK(z.total == doctest::Approx(10.0 * (z.sim_i + z.sim_j) + z.bend_i + z.bend_j));
    CHECK(z.sim_i == doctest::Approx(mse(warp(atlas, integrate_inverse(vi, 6)), a)));

    const VectorField zero_v(s);
    CHECK(total_pair_objective(atlas, atlas, atlas, zero_v, zero_v, w, 6).total == 0.0);

    // monotone in each weight
    for (int which = 0; which < 3; ++which) {
        double prev = -1.0;
        for (double val : {0.0, 0.5, 1.0, 4.0}) {
            LossWeights ww = w;
            (which == 0 ? ww.lambda : which == 1 ? ww.gamma1 : ww.gamma2) = val;
            const double t = total_pair_objective(atlas, a, b, vi, vj, ww, 6).total;
            CHECK(t >= prev);
            prev = t;
        }
    }

    LossWeights bad = w;
    bad.gamma1 = -1.0;
    CHECK_THROWS_AS(total_pair_objective(atlas, a, b, vi, vj, bad, 6), InvalidInput);
}

}
