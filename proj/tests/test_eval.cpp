#include <doctest.h>

#include "helpers.hpp"
#include "svfatlas/errors.hpp"
#include "svfatlas/eval.hpp"
#include "svfatlas/synth.hpp"

using namespace svfatlas;

namespace {

struct Rect {
    std::uint32_t label;
    std::int64_t x0, x1, y0, y1;
};

LabelField seg8(std::initializer_list<Rect> rects) {
    LabelField s(GridShape(8, 8), 2);
    for (const Rect &r : rects)
        for (std::int64_t y = r.y0; y <= r.y1; ++y)
            for (std::int64_t x = r.x0; x <= r.x1; ++x) s.at(x, y) = r.label;
    return s;
}

// Three 8x8 segmentations with two structures each, moved by integer
// translations; expected values enumerated voxel by voxel.
struct HandCase {
    std::vector<LabelField> segs{seg8({{1, 1, 4, 1, 4}, {2, 5, 6, 5, 6}}), seg8({{1, 2, 5, 1, 4}, {2, 5, 7, 6, 7}}),
                                 seg8({{1, 1, 4, 2, 5}, {2, 4, 6, 5, 6}})};
    std::vector<DeformationMap> fwd, inv;
    LabelField atlas_seg = seg8({{1, 2, 5, 2, 5}, {2, 5, 6, 5, 6}});
    HandCase() {
        const GridShape s(8, 8);
        const double t[3][2] = {{0, 0}, {1, 0}, {0, -1}};
        for (auto &d : t) {
            fwd.push_back(testing::translation(s, d[0], d[1]));
            inv.push_back(testing::translation(s, -d[0], -d[1]));
        }
    }
};

void check_samples(const MeasureStats &m, const std::vector<std::vector<double>> &expected) {
    REQUIRE(m.samples.size() == expected.size());
    for (std::size_t s = 0; s < expected.size(); ++s) {
        REQUIRE(m.samples[s].size() == expected[s].size());
        for (std::size_t k = 0; k < expected[s].size(); ++k) CHECK(std::abs(m.samples[s][k] - expected[s][k]) <= 1e-12);
    }
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("dice") {
    const GridShape s(4, 4);
    LabelField a(s, 2), b(s, 2);
    for (int i : {0, 1, 2, 3}) a[i] = 1;
    for (int i : {1, 2, 3, 4, 5, 6}) b[i] = 1;
    CHECK(dice(a, b, 1) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(dice(a, b, 1) == dice(b, a, 1));
    CHECK(dice(a, a, 1) == 1.0);
    CHECK(dice(a, b, 2) == 1.0);  // both empty
    LabelField c(s, 2);
    for (int i : {10, 11}) c[i] = 1;
    CHECK(dice(a, c, 1) == 0.0);
    CHECK_THROWS_AS(dice(a, LabelField(GridShape(4, 5), 2), 1), InvalidInput);
}

TEST_CASE("plurality vote") {
    const GridShape s(2, 2);
    LabelField a(s, 2), b(s, 2), c(s, 2);
    a.labels = {1, 1, 0, 2};
    b.labels = {1, 2, 2, 0};
    c.labels = {2, 1, 2, 1};
    const LabelField v = plurality_vote({a, b, c});
    CHECK(v.labels == std::vector<std::uint32_t>{1, 1, 2, 0});
    CHECK(plurality_vote({a, b}).labels == std::vector<std::uint32_t>{1, 1, 0, 0});
    CHECK(plurality_vote({c, a, b}).labels == v.labels);
    CHECK(plurality_vote({a, a, a}).labels == a.labels);
    CHECK_THROWS_AS(plurality_vote({}), InvalidInput);
}

TEST_CASE("summary statistics") {
    const MeasureStats m = summarize("x", {{1.0, 0.5}, {0.5, 0.5}});
    CHECK(m.mean == std::vector<double>{0.75, 0.5});
    CHECK(m.std[0] == doctest::Approx(0.25));
    CHECK(m.std[1] == 0.0);
    CHECK(m.all_mean == doctest::Approx(0.625));
    CHECK(m.all_std == doctest::Approx(0.125));
}

TEST_CASE("trivial identities") {
    const HandCase h;
    const GridShape s(8, 8);
    const std::vector<LabelField> same(3, h.segs[0]);
    const std::vector<DeformationMap> id(3, DeformationMap::identity(s));
    for (double v : eval_atlas_space(same, id).mean) CHECK(v == 1.0);
    for (double v : eval_atlas_space(same, id, true).mean) CHECK(v == 1.0);
    for (double v : eval_bridge(same, id, id).mean) CHECK(v == 1.0);
    for (double v : eval_image_space(h.segs[0], same, id).mean) CHECK(v == 1.0);
    for (double v : eval_atlas_space({h.segs[1]}, {id[0]}).mean) CHECK(v == 1.0);
    CHECK_THROWS_AS(eval_bridge({h.segs[0]}, {id[0]}, {id[0]}), InvalidInput);

    // M = 2: the vote of one segmentation is itself
    const MeasureStats two = eval_bridge({h.segs[0], h.segs[1]}, {h.fwd[0], h.fwd[1]}, {h.inv[0], h.inv[1]});
    const LabelField moved = warp_labels(h.segs[1], compose(h.fwd[1], h.inv[0]));
    CHECK(two.samples[0][0] == dice(moved, h.segs[0], 1));
    CHECK(two.samples[0][1] == dice(moved, h.segs[0], 2));
}

TEST_CASE("hand oracle: atlas space") {
    const HandCase h;
    check_samples(eval_atlas_space(h.segs, h.fwd), {{1.0, 2.0 / 5}, {1.0, 6.0 / 7}, {16.0 / 31, 1.0}});
    const MeasureStats p = eval_atlas_space(h.segs, h.fwd, true);
    check_samples(p, {{1.0, 1.0 / 3}, {16.0 / 31, 2.0 / 5}, {16.0 / 31, 6.0 / 7}});
    CHECK(p.measure == "d_atlas_pairwise");
    const double s1 = (1.0 + 16.0 / 31 + 16.0 / 31) / 3;
    CHECK(std::abs(p.mean[0] - s1) <= 1e-12);
}

TEST_CASE("hand oracle: image space") {
    const HandCase h;
    check_samples(eval_image_space(h.atlas_seg, h.segs, h.inv), {{18.0 / 31, 1.0}, {18.0 / 31, 2.0 / 5}, {3.0 / 5, 2.0 / 5}});
    // both-empty structure scores 1
    LabelField empty(GridShape(8, 8), 3);
    std::vector<LabelField> segs = h.segs;
    for (auto &s : segs) s.num_structures = 3;
    const MeasureStats m = eval_image_space(empty, segs, h.inv);
    for (const auto &row : m.samples) CHECK(row[2] == 1.0);
}

TEST_CASE("hand oracle: bridge") {
    const HandCase h;
    const MeasureStats b = eval_bridge(h.segs, h.fwd, h.inv);
    check_samples(b, {{2.0 / 3, 2.0 / 5}, {2.0 / 3, 1.0 / 2}, {16.0 / 31, 1.0 / 2}});
    const double all[3] = {(2.0 / 3 + 2.0 / 5) / 2, (2.0 / 3 + 0.5) / 2, (16.0 / 31 + 0.5) / 2};
    CHECK(std::abs(b.all_mean - (all[0] + all[1] + all[2]) / 3) <= 1e-12);
}

TEST_CASE("fold counting") {
    const GridShape s(10, 10);
    CHECK(count_folds(DeformationMap::identity(s)) == 0);
    CHECK(count_folds(integrate(testing::smooth_velocity(s, 2, 2.0, 4.0))) == 0);
    // u1 = -2x on the strip 3 <= x <= 6 reverses the x axis there
    const DeformationMap fold = testing::make_map(s, [](const Vec &p) {
        return Vec{p[0] >= 3 && p[0] <= 6 ? -2.0 * p[0] : 0.0, 0, 0};
    });
    const ScalarField det = jacobian_determinant(fold);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < s.voxel_count(); ++i)
        if (s.is_interior(i) && det[i] < 0) ++expected;
    CHECK(expected > 0);
    CHECK(count_folds(fold) == expected);
}

TEST_CASE("evaluate report") {
    const HandCase h;
    EvalOptions o;
    o.pairwise_atlas = true;
    o.vote_atlas_seg = true;
    const EvalReport r = evaluate(h.segs, h.fwd, h.inv, o);
    CHECK(r.d_atlas_pairwise.has_value());
    REQUIRE(r.d_image.has_value());
    CHECK(r.atlas_seg_from_vote);
    CHECK(r.folds_mean == 0.0);
    CHECK(r.d_bridge.all_mean == eval_bridge(h.segs, h.fwd, h.inv).all_mean);
    const EvalReport plain = evaluate(h.segs, h.fwd, h.inv);
    CHECK_FALSE(plain.d_image.has_value());
    CHECK_FALSE(plain.d_atlas_pairwise.has_value());
    EvalOptions given;
    given.atlas_seg = h.atlas_seg;
    const EvalReport g = evaluate(h.segs, h.fwd, h.inv, given);
    CHECK_FALSE(g.atlas_seg_from_vote);
    CHECK(g.d_image->samples == eval_image_space(h.atlas_seg, h.segs, h.inv).samples);
}

TEST_CASE("ground-truth synthetic maps") {
    SynthConfig c;
    c.noise_sigma = 0.0;
    const SynthCohort syn = generate(c);
    const MeasureStats gt = eval_bridge(syn.cohort.labels, syn.fwd, syn.inv);
    const std::vector<DeformationMap> id(syn.cohort.size(), DeformationMap::identity(syn.template_image.shape));
    const MeasureStats none = eval_bridge(syn.cohort.labels, id, id);
    for (std::uint32_t k = 1; k <= gt.structures(); ++k) {
        std::size_t voxels = 0;
        for (auto l : syn.template_labels.labels) voxels += l == k;
        if (voxels >= 100) CHECK(gt.mean[k - 1] >= 0.95);
        CHECK(gt.mean[k - 1] >= none.mean[k - 1]);
    }
    for (const auto &row : gt.samples)
        for (double v : row) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
}

}
