#include "svfatlas/losses.hpp"

#include <cmath>
#include <string>

#include "svfatlas/errors.hpp"
#include "svfatlas/svf.hpp"

namespace svfatlas {

namespace {

constexpr double kMinStd = 1e-8;

struct Moments {
    double mean_a, mean_b, sd_a, sd_b, cov;
};

Moments moments(const ScalarField &a, const ScalarField &b) {
    const double n = static_cast<double>(a.size());
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
    }
    Moments m{sa / n, sb / n, 0.0, 0.0, 0.0};
    double vaa = 0.0, vbb = 0.0, vab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - m.mean_a, db = b[i] - m.mean_b;
        vaa += da * da;
        vbb += db * db;
        vab += da * db;
    }
    m.sd_a = std::sqrt(vaa / n);
    m.sd_b = std::sqrt(vbb / n);
    m.cov = vab / n;
    if (m.sd_a <= kMinStd || m.sd_b <= kMinStd) {
        throw DegenerateSimilarity("ncc_loss: input field is (near-)constant");
    }
    return m;
}

} // namespace

Similarity parse_similarity(std::string_view name) {
    if (name == "mse") return Similarity::mse;
    if (name == "ncc") return Similarity::ncc;
    throw ConfigError("unknown similarity '" + std::string(name) + "' (expected mse or ncc)");
}

std::string_view to_string(Similarity s) { return s == Similarity::mse ? "mse" : "ncc"; }

void LossWeights::validate() const {
    for (double w : {sim_weight, lambda, gamma1, gamma2}) {
        if (!std::isfinite(w) || w < 0.0) throw InvalidInput("loss weights must be finite and non-negative");
    }
}

double mse(const ScalarField &a, const ScalarField &b) {
    require_same_shape(a.shape, b.shape, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double ncc_loss(const ScalarField &a, const ScalarField &b) {
    require_same_shape(a.shape, b.shape, "ncc_loss");
    const Moments m = moments(a, b);
    return 1.0 - m.cov / (m.sd_a * m.sd_b);
}

double similarity(Similarity kind, const ScalarField &a, const ScalarField &b) {
    return kind == Similarity::mse ? mse(a, b) : ncc_loss(a, b);
}

ScalarField similarity_gradient(Similarity kind, const ScalarField &a, const ScalarField &b) {
    require_same_shape(a.shape, b.shape, "similarity_gradient");
    const double n = static_cast<double>(a.size());
    ScalarField g(a.shape);
    if (kind == Similarity::mse) {
        for (std::size_t i = 0; i < a.size(); ++i) g[i] = 2.0 * (a[i] - b[i]) / n;
        return g;
    }
    // d(1 - rho)/da_k = -(1/n) [ (b_k - mb)/(sa sb) - rho (a_k - ma)/sa^2 ]
    const Moments m = moments(a, b);
    const double rho = m.cov / (m.sd_a * m.sd_b);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - m.mean_a, db = b[i] - m.mean_b;
        g[i] = -(db / (m.sd_a * m.sd_b) - rho * da / (m.sd_a * m.sd_a)) / n;
    }
    return g;
}

double bending_energy(const DeformationMap &map) {
    const auto H = hessian_components(map);
    const GridShape &s = map.shape();
    const int d = s.dim;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < H.size(); ++i) {
        if (!s.is_interior(i, 1)) continue;
        for (int k = 0; k < d; ++k)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) acc += H[i][k][a][b] * H[i][k][a][b];
        ++count;
    }
    return acc / static_cast<double>(count);
}

double pair_atlas_loss(const ScalarField &image_i, const ScalarField &image_j, const DeformationMap &fwd_i,
                       const DeformationMap &fwd_j, Similarity kind) {
    return similarity(kind, warp(image_i, fwd_i), warp(image_j, fwd_j));
}

double pair_image_loss(const ScalarField &image_i, const ScalarField &image_j, const DeformationMap &fwd_i,
                       const DeformationMap &inv_i, const DeformationMap &fwd_j, const DeformationMap &inv_j,
                       Similarity kind) {
    const double a = similarity(kind, warp(image_i, compose(fwd_i, inv_j)), image_j);
    const double b = similarity(kind, warp(image_j, compose(fwd_j, inv_i)), image_i);
    return a + b;
}

PairObjective total_pair_objective(const ScalarField &atlas, const ScalarField &image_i,
                                   const ScalarField &image_j, const VectorField &v_i, const VectorField &v_j,
                                   const LossWeights &weights, int steps, Similarity kind) {
    weights.validate();
    require_same_shape(atlas.shape, image_i.shape, "total_pair_objective");
    require_same_shape(atlas.shape, image_j.shape, "total_pair_objective");
    const DeformationMap fwd_i = integrate(v_i, steps), inv_i = integrate_inverse(v_i, steps);
    const DeformationMap fwd_j = integrate(v_j, steps), inv_j = integrate_inverse(v_j, steps);

    PairObjective o;
    o.sim_i = similarity(kind, warp(atlas, inv_i), image_i);
    o.sim_j = similarity(kind, warp(atlas, inv_j), image_j);
    o.bend_i = bending_energy(inv_i);
    o.bend_j = bending_energy(inv_j);
    if (weights.gamma1 > 0.0) o.raw_pair_atlas = pair_atlas_loss(image_i, image_j, fwd_i, fwd_j, kind);
    if (weights.gamma2 > 0.0) o.raw_pair_image = pair_image_loss(image_i, image_j, fwd_i, inv_i, fwd_j, inv_j, kind);

    o.sim = weights.sim_weight * (o.sim_i + o.sim_j);
    o.reg = weights.lambda * (o.bend_i + o.bend_j);
    o.pair_atlas = weights.gamma1 * o.raw_pair_atlas;
    o.pair_image = weights.gamma2 * o.raw_pair_image;
    o.total = o.sim + o.reg + o.pair_atlas + o.pair_image;
    return o;
}

} // namespace svfatlas
