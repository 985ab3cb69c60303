#include "svfatlas/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "svfatlas/errors.hpp"
#include "svfatlas/eval.hpp"
#include "svfatlas/parallel.hpp"

namespace svfatlas {

UpdateMethod parse_update_method(std::string_view name) {
    if (name == "steepest_descent") return UpdateMethod::steepest_descent;
    if (name == "adaptive_moments") return UpdateMethod::adaptive_moments;
    throw ConfigError("unknown update method '" + std::string(name) + "'");
}

std::string_view to_string(UpdateMethod m) {
    return m == UpdateMethod::steepest_descent ? "steepest_descent" : "adaptive_moments";
}

PairSampling parse_pair_sampling(std::string_view name) {
    if (name == "all_pairs") return PairSampling::all_pairs;
    if (name == "random_pairs_per_epoch") return PairSampling::random_pairs_per_epoch;
    throw ConfigError("unknown pair sampling '" + std::string(name) + "'");
}

std::string_view to_string(PairSampling p) {
    return p == PairSampling::all_pairs ? "all_pairs" : "random_pairs_per_epoch";
}

void OptimConfig::validate() const {
    if (!(std::isfinite(step_size) && step_size > 0.0)) throw InvalidInput("step_size must be finite and > 0");
    if (epochs < 1) throw InvalidInput("epochs must be >= 1");
    if (atlas_refresh_period < 1) throw InvalidInput("atlas_refresh_period must be >= 1");
    if (quadrature_samples < 1) throw InvalidInput("quadrature_samples must be >= 1");
    if (squaring_steps < 1) throw InvalidInput("squaring_steps must be >= 1");
    if (threads < 0) throw InvalidInput("threads must be >= 0");
    if (!std::isfinite(atlas_step) || atlas_step < 0.0) throw InvalidInput("atlas_step must be finite and >= 0");
    weights.validate();
    if (similarity == Similarity::ncc && atlas_mode != AtlasMode::learned) {
        throw ConfigError("ncc similarity has no closed-form atlas; use atlas_mode = learned");
    }
}

PairList all_pairs(std::size_t n) {
    PairList out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) out.emplace_back(i, j);
    return out;
}

PairList random_pairs(std::size_t n, std::mt19937_64 &rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Fisher-Yates with an explicit draw so the pairing does not depend on
    // the standard library's shuffle implementation.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    PairList out;
    for (std::size_t k = 0; k + 1 < n; k += 2) out.emplace_back(order[k], order[k + 1]);
    if (n % 2 == 1 && n > 1) out.emplace_back(order[n - 1], order[0]);
    return out;
}

namespace {

void check_velocity_shape(const VectorField &v, const GridShape &s, const char *what) {
    require_same_shape(v.shape, s, what);
}

// Offsets and coefficients of one second-difference stencil entry.
struct StencilTap {
    std::int64_t offset;
    double coef;
};

// Second-difference stencils (a <= b) at an interior voxel, matching
// hessian_components. Off-diagonal entries are counted twice in ||H||_F^2.
struct HessianStencil {
    std::vector<StencilTap> taps;
    double multiplicity;
};

std::vector<HessianStencil> hessian_stencils(const GridShape &s) {
    const std::int64_t strides[3] = {1, s.extent[0], s.extent[0] * s.extent[1]};
    std::vector<HessianStencil> out;
    for (int a = 0; a < s.dim; ++a) {
        const double haa = s.spacing[a] * s.spacing[a];
        out.push_back({{{strides[a], 1.0 / haa}, {0, -2.0 / haa}, {-strides[a], 1.0 / haa}}, 1.0});
        for (int b = a + 1; b < s.dim; ++b) {
            const double q = 0.25 / (s.spacing[a] * s.spacing[b]);
            const std::int64_t sa = strides[a], sb = strides[b];
            out.push_back({{{sa + sb, q}, {sa - sb, -q}, {-sa + sb, -q}, {-sa - sb, q}}, 2.0});
        }
    }
    return out;
}

void require_hessian_extent(const GridShape &s, const char *what) {
    for (int a = 0; a < s.dim; ++a) {
        if (s.extent[a] < 3) throw InvalidInput(std::string(what) + " requires every extent >= 3");
    }
}

std::size_t interior_count(const GridShape &s) {
    std::size_t n = 1;
    for (int a = 0; a < s.dim; ++a) n *= static_cast<std::size_t>(s.extent[a] - 2);
    return n;
}

// g += coef * det * s * grad, voxelwise.
void add_term(VectorField &g, double coef, const ScalarField &det, const ScalarField &s, const VectorField &grad) {
    const int d = g.shape.dim;
    const std::size_t n = g.voxel_count();
    for (std::size_t x = 0; x < n; ++x) {
        const double f = coef * det[x] * s[x];
        for (int c = 0; c < d; ++c) g.values[x * d + c] += f * grad.values[x * d + c];
    }
}

ScalarField difference(const ScalarField &a, const ScalarField &b) {
    ScalarField out(a.shape);
    for (std::size_t x = 0; x < a.size(); ++x) out[x] = a[x] - b[x];
    return out;
}

void axpy(VectorField &y, double a, const VectorField &x) {
    for (std::size_t k = 0; k < y.values.size(); ++k) y.values[k] += a * x.values[k];
}

double midpoint(int m, int T) { return (static_cast<double>(m) - 0.5) / static_cast<double>(T); }

// Phi_{t,0} and Phi_{t,1} at every quadrature node.
struct TimeMaps {
    std::vector<DeformationMap> to0, to1;
};

TimeMaps time_maps(const VectorField &v, int T, int K) {
    TimeMaps tm;
    for (int m = 1; m <= T; ++m) {
        const double t = midpoint(m, T);
        tm.to0.push_back(integrate_partial(v, t, 0.0, K));
        tm.to1.push_back(integrate_partial(v, t, 1.0, K));
    }
    return tm;
}

// Data-term gradient of sim(atlas o Phi_{1,0}, image) with unit weight.
VectorField data_gradient(const ScalarField &atlas, const ScalarField &image, const TimeMaps &tm,
                          const DeformationMap &inv, Similarity kind) {
    const int T = static_cast<int>(tm.to0.size());
    VectorField g(inv.shape());
    const double n = static_cast<double>(g.voxel_count());
    ScalarField sens;
    if (kind == Similarity::ncc) sens = similarity_gradient(kind, warp(atlas, inv), image);
    for (int m = 1; m <= T; ++m) {
        const DeformationMap &to0 = tm.to0[m - 1];
        const DeformationMap &to1 = tm.to1[m - 1];
        const ScalarField det1 = jacobian_determinant(to1);
        const ScalarField atlas_t = warp(atlas, to0);
        const VectorField grad_atlas_t = voxel_gradient(atlas_t);
        if (kind == Similarity::mse) {
            add_term(g, -2.0 / (n * T), det1, difference(atlas_t, warp(image, to1)), grad_atlas_t);
        } else {
            add_term(g, -1.0 / T, det1, warp(sens, to1), grad_atlas_t);
        }
    }
    return g;
}

// Everything shared across images for one gradient evaluation.
struct Shared {
    std::vector<DeformationMap> fwd, inv;
    std::vector<ScalarField> warped;  // I_j o Phi^j_{0,1}
    std::vector<ScalarField> jac;     // |D Phi^j_{0,1}|
    std::vector<std::vector<std::size_t>> partners;
};

struct Assembly {
    GradientReport report;
    std::vector<DeformationMap> fwd, inv;
};

Assembly assemble(const std::vector<ScalarField> &images, const ScalarField &atlas,
                  const std::vector<VectorField> &velocities, const LossWeights &w, int T, int K, Similarity kind,
                  const PairList &pairs, int threads, bool want_gradients) {
    const std::size_t N = images.size();
    if (velocities.size() != N) throw InvalidInput("velocity count must match image count");
    if (N < 2 && (w.gamma1 > 0.0 || w.gamma2 > 0.0)) {
        throw InvalidInput("pairwise terms need at least 2 images");
    }
    if (T < 1 || K < 1) throw InvalidInput("quadrature_samples and squaring_steps must be >= 1");
    w.validate();
    const GridShape &s = atlas.shape;
    for (std::size_t i = 0; i < N; ++i) {
        require_same_shape(images[i].shape, s, "el_gradient_pairwise: image");
        check_velocity_shape(velocities[i], s, "el_gradient_pairwise: velocity");
    }

    Shared sh;
    sh.partners.resize(N);
    for (const auto &[a, b] : pairs) {
        if (a >= N || b >= N || a == b) throw InvalidInput("invalid image pair");
        sh.partners[a].push_back(b);
        sh.partners[b].push_back(a);
    }
    const bool need_pair = w.gamma1 > 0.0 || w.gamma2 > 0.0;
    sh.fwd.resize(N);
    sh.inv.resize(N);
    sh.warped.resize(N);
    sh.jac.resize(N);
    parallel_for(N, threads, [&](std::size_t j) {
        sh.inv[j] = integrate_inverse(velocities[j], K);
        if (need_pair) {
            sh.fwd[j] = integrate(velocities[j], K);
            sh.warped[j] = warp(images[j], sh.fwd[j]);
            if (w.gamma2 > 0.0) sh.jac[j] = jacobian_determinant(sh.fwd[j]);
        }
    });

    // Energy.
    LossBreakdown L;
    std::vector<double> sim_i(N), reg_i(N);
    parallel_for(N, threads, [&](std::size_t i) {
        sim_i[i] = similarity(kind, warp(atlas, sh.inv[i]), images[i]);
        reg_i[i] = regularizer_energy(velocities[i]);
    });
    for (std::size_t i = 0; i < N; ++i) {
        const double m = static_cast<double>(sh.partners[i].size());
        L.sim += w.sim_weight * m * sim_i[i];
        L.reg += w.lambda * m * reg_i[i];
    }
    std::vector<double> pa(pairs.size()), pi(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t p) {
        const auto [a, b] = pairs[p];
        if (w.gamma1 > 0.0) pa[p] = similarity(kind, sh.warped[a], sh.warped[b]);
        if (w.gamma2 > 0.0) {
            pi[p] = similarity(kind, warp(images[a], compose(sh.fwd[a], sh.inv[b])), images[b]) +
                    similarity(kind, warp(images[b], compose(sh.fwd[b], sh.inv[a])), images[a]);
        }
    });
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        L.pair_atlas += w.gamma1 * pa[p];
        L.pair_image += w.gamma2 * pi[p];
    }
    L.total = L.sim + L.reg + L.pair_atlas + L.pair_image;

    Assembly out;
    out.report.losses = L;
    if (want_gradients) {
        const double n = static_cast<double>(s.voxel_count());
        out.report.gradients.assign(N, VectorField(s));
        parallel_for(N, threads, [&](std::size_t i) {
            const std::vector<std::size_t> &P = sh.partners[i];
            const double mult = static_cast<double>(P.size());
            VectorField &g = out.report.gradients[i];
            const VectorField &v = velocities[i];
            if (mult == 0.0) return;

            const TimeMaps tm = time_maps(v, T, K);
            if (w.sim_weight > 0.0) {
                axpy(g, w.sim_weight * mult, data_gradient(atlas, images[i], tm, sh.inv[i], kind));
            }
            if (w.lambda > 0.0) axpy(g, w.lambda * mult, regularizer_gradient(v));
            if (!need_pair) return;

            // Atlas-space targets / sensitivities for the forward-map terms and
            // image-space sensitivities for the cross terms.
            ScalarField mean_hat, weight_sum, mean_tilde;  // MSE
            ScalarField sens_atlas;                         // NCC: gamma1 + gamma2 first term
            std::vector<ScalarField> cross_sens;            // NCC: per partner, image-i space
            const double group = mult + 1.0;
            if (kind == Similarity::mse) {
                if (w.gamma1 > 0.0) {
                    mean_hat = sh.warped[i];
                    for (std::size_t j : P)
                        for (std::size_t x = 0; x < mean_hat.size(); ++x) mean_hat[x] += sh.warped[j][x];
                    for (double &val : mean_hat.values) val /= group;
                }
                if (w.gamma2 > 0.0) {
                    weight_sum = sh.jac[i];
                    mean_tilde = ScalarField(s);
                    for (std::size_t x = 0; x < s.voxel_count(); ++x) mean_tilde[x] = sh.jac[i][x] * sh.warped[i][x];
                    for (std::size_t j : P)
                        for (std::size_t x = 0; x < s.voxel_count(); ++x) {
                            weight_sum[x] += sh.jac[j][x];
                            mean_tilde[x] += sh.jac[j][x] * sh.warped[j][x];
                        }
                    for (std::size_t x = 0; x < s.voxel_count(); ++x) {
                        if (!(weight_sum[x] > kDegenerateWeightEps)) {
                            throw DegenerateWeights("jacobian weight sum vanished at voxel " + std::to_string(x));
                        }
                        mean_tilde[x] /= weight_sum[x];
                    }
                }
            } else {
                sens_atlas = ScalarField(s);
                if (w.gamma1 > 0.0) {
                    for (std::size_t j : P) {
                        const ScalarField gj = similarity_gradient(kind, sh.warped[i], sh.warped[j]);
                        for (std::size_t x = 0; x < gj.size(); ++x) sens_atlas[x] += w.gamma1 * gj[x];
                    }
                }
                if (w.gamma2 > 0.0) {
                    for (std::size_t j : P) {
                        const ScalarField moved = warp(images[i], compose(sh.fwd[i], sh.inv[j]));
                        const ScalarField back = warp(similarity_gradient(kind, moved, images[j]), sh.fwd[j]);
                        for (std::size_t x = 0; x < back.size(); ++x)
                            sens_atlas[x] += w.gamma2 * sh.jac[j][x] * back[x];
                        const ScalarField cross = warp(images[j], compose(sh.fwd[j], sh.inv[i]));
                        cross_sens.push_back(similarity_gradient(kind, cross, images[i]));
                    }
                }
            }

            for (int m = 1; m <= T; ++m) {
                const DeformationMap &to0 = tm.to0[m - 1];
                const DeformationMap &to1 = tm.to1[m - 1];
                const ScalarField det0 = jacobian_determinant(to0);
                const ScalarField J = warp(images[i], to1);
                const VectorField gradJ = voxel_gradient(J);
                if (kind == Similarity::mse) {
                    if (w.gamma1 > 0.0) {
                        add_term(g, -2.0 * group * w.gamma1 / (n * T), det0, difference(warp(mean_hat, to0), J),
                                 gradJ);
                    }
                    if (w.gamma2 > 0.0) {
                        const ScalarField ws = warp(weight_sum, to0);
                        ScalarField r = difference(warp(mean_tilde, to0), J);
                        for (std::size_t x = 0; x < r.size(); ++x) r[x] *= ws[x];
                        add_term(g, -2.0 * w.gamma2 / (n * T), det0, r, gradJ);
                    }
                } else {
                    add_term(g, 1.0 / T, det0, warp(sens_atlas, to0), gradJ);
                }
                if (w.gamma2 > 0.0) {
                    const ScalarField det1 = jacobian_determinant(to1);
                    for (std::size_t k = 0; k < P.size(); ++k) {
                        const ScalarField Jji = warp(sh.warped[P[k]], to0);
                        const VectorField gradJji = voxel_gradient(Jji);
                        if (kind == Similarity::mse) {
                            add_term(g, -2.0 * w.gamma2 / (n * T), det1, difference(Jji, J), gradJji);
                        } else {
                            add_term(g, -w.gamma2 / T, det1, warp(cross_sens[k], to1), gradJji);
                        }
                    }
                }
            }
        });
        double mx = 0.0;
        for (const VectorField &g : out.report.gradients) {
            const int d = g.shape.dim;
            for (std::size_t x = 0; x < g.voxel_count(); ++x) {
                double sq = 0.0;
                for (int c = 0; c < d; ++c) sq += g.values[x * d + c] * g.values[x * d + c];
                if (!std::isfinite(sq)) throw NumericFailure("non-finite velocity gradient for image " + std::to_string(&g - out.report.gradients.data()));
                mx = std::max(mx, std::sqrt(sq));
            }
        }
        out.report.max_norm = mx;
    }
    out.fwd = std::move(sh.fwd);
    out.inv = std::move(sh.inv);
    return out;
}

} // namespace

double regularizer_energy(const VectorField &v) {
    return bending_energy(DeformationMap(v));
}

VectorField regularizer_gradient(const VectorField &v) {
    const GridShape &s = v.shape;
    require_hessian_extent(s, "regularizer_gradient");
    const auto stencils = hessian_stencils(s);
    const int d = s.dim;
    const double scale = 2.0 / static_cast<double>(interior_count(s));
    VectorField g(s);
    for (std::size_t idx = 0; idx < s.voxel_count(); ++idx) {
        if (!s.is_interior(idx, 1)) continue;
        const auto c = static_cast<std::int64_t>(idx);
        for (const HessianStencil &st : stencils) {
            for (int k = 0; k < d; ++k) {
                double h = 0.0;
                for (const StencilTap &tap : st.taps) h += tap.coef * v.values[(c + tap.offset) * d + k];
                const double f = scale * st.multiplicity * h;
                for (const StencilTap &tap : st.taps) g.values[(c + tap.offset) * d + k] += f * tap.coef;
            }
        }
    }
    return g;
}

VectorField el_gradient_vanilla(const ScalarField &atlas, const ScalarField &image, const VectorField &v, int T,
                                int K, const LossWeights &weights, Similarity kind) {
    if (T < 1 || K < 1) throw InvalidInput("quadrature_samples and squaring_steps must be >= 1");
    weights.validate();
    require_same_shape(atlas.shape, image.shape, "el_gradient_vanilla");
    check_velocity_shape(v, atlas.shape, "el_gradient_vanilla");
    VectorField g(v.shape);
    if (weights.sim_weight > 0.0) {
        axpy(g, weights.sim_weight, data_gradient(atlas, image, time_maps(v, T, K), integrate_inverse(v, K), kind));
    }
    if (weights.lambda > 0.0) axpy(g, weights.lambda, regularizer_gradient(v));
    return g;
}

GradientReport el_gradient_pairwise(const std::vector<ScalarField> &images, const ScalarField &atlas,
                                    const std::vector<VectorField> &velocities, const LossWeights &weights, int T,
                                    int K, Similarity kind, const PairList *pairs, int threads) {
    const PairList everything = pairs ? PairList{} : all_pairs(images.size());
    return assemble(images, atlas, velocities, weights, T, K, kind, pairs ? *pairs : everything, threads, true)
        .report;
}

LossBreakdown pairwise_energy(const std::vector<ScalarField> &images, const ScalarField &atlas,
                              const std::vector<VectorField> &velocities, const LossWeights &weights, int K,
                              Similarity kind, const PairList *pairs) {
    const PairList everything = pairs ? PairList{} : all_pairs(images.size());
    return assemble(images, atlas, velocities, weights, 1, K, kind, pairs ? *pairs : everything, 1, false)
        .report.losses;
}

VectorField fd_gradient(const std::function<double(const VectorField &)> &energy, const VectorField &v,
                        double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidInput("fd_gradient epsilon must be > 0");
    VectorField g(v.shape);
    VectorField probe = v;
    for (std::size_t k = 0; k < v.values.size(); ++k) {
        const double orig = probe.values[k];
        probe.values[k] = orig + epsilon;
        const double up = energy(probe);
        probe.values[k] = orig - epsilon;
        const double down = energy(probe);
        probe.values[k] = orig;
        g.values[k] = (up - down) / (2.0 * epsilon);
    }
    return g;
}

VectorField update_velocity(const VectorField &v, const VectorField &grad, const OptimConfig &config,
                            AdamState &state) {
    require_same_shape(v.shape, grad.shape, "update_velocity");
    for (double x : grad.values) {
        if (!std::isfinite(x)) throw NumericFailure("non-finite gradient in velocity update");
    }
    VectorField out = v;
    const double lr = config.step_size;
    auto checked = [](VectorField f) {
        for (double x : f.values) {
            if (!std::isfinite(x)) throw NumericFailure("velocity update overflowed");
        }
        return f;
    };
    if (config.method == UpdateMethod::steepest_descent) {
        for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] -= lr * grad.values[k];
        return checked(std::move(out));
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (state.t == 0 || state.m.shape != v.shape) {
        state.m = VectorField(v.shape);
        state.s = VectorField(v.shape);
        state.t = 0;
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        const double gk = grad.values[k];
        state.m.values[k] = b1 * state.m.values[k] + (1.0 - b1) * gk;
        state.s.values[k] = b2 * state.s.values[k] + (1.0 - b2) * gk * gk;
        out.values[k] -= lr * (state.m.values[k] / c1) / (std::sqrt(state.s.values[k] / c2) + eps);
    }
    return checked(std::move(out));
}

namespace {

double mean_folds(const std::vector<DeformationMap> &maps) {
    double acc = 0.0;
    for (const auto &m : maps) acc += static_cast<double>(count_folds(m));
    return maps.empty() ? 0.0 : acc / static_cast<double>(maps.size());
}

void check_finite_losses(const LossBreakdown &l, int epoch) {
    if (!std::isfinite(l.total)) {
        throw NumericFailure("non-finite loss at epoch " + std::to_string(epoch) + " (sim " + std::to_string(l.sim) +
                             ", reg " + std::to_string(l.reg) + ")");
    }
}

} // namespace

BuildResult run_atlas_build(const Cohort &cohort, const OptimConfig &config, const AtlasCallback &on_atlas) {
    config.validate();
    cohort.validate();
    const std::size_t N = cohort.size();
    const auto &images = cohort.images;
    const LossWeights &w = config.weights;
    const int T = config.quadrature_samples, K = config.squaring_steps;

    BuildResult result{AtlasState(init_atlas(cohort), N, config.atlas_mode), {}};
    AtlasState &state = result.state;
    std::vector<AdamState> adam(N);
    std::mt19937_64 rng(config.seed);
    const auto start = std::chrono::steady_clock::now();

    double cohort_mean = 0.0;
    for (const auto &im : images)
        for (double x : im.values) cohort_mean += x;
    cohort_mean /= static_cast<double>(N * cohort.shape().voxel_count());

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const PairList pairs =
            config.pair_sampling == PairSampling::all_pairs ? all_pairs(N) : random_pairs(N, rng);
        Assembly a = assemble(images, state.atlas(), state.velocities(), w, T, K, config.similarity, pairs,
                              config.threads, true);

        EpochLog row;
        row.epoch = epoch;
        row.total = a.report.losses.total;
        row.sim = a.report.losses.sim;
        row.reg = a.report.losses.reg;
        row.pair_atlas = a.report.losses.pair_atlas;
        row.pair_image = a.report.losses.pair_image;
        row.folds = mean_folds(a.inv);
        std::vector<double> multiplicity(N, 0.0);
        for (const auto &[p, q] : pairs) {
            multiplicity[p] += 1.0;
            multiplicity[q] += 1.0;
        }
        for (std::size_t i = 0; i < N; ++i) row.reg_map += w.lambda * multiplicity[i] * bending_energy(a.inv[i]);
        check_finite_losses(a.report.losses, epoch);

        if (state.mode() == AtlasMode::learned) {
            state.begin_epoch();
            std::vector<ScalarField> contrib(N);
            parallel_for(N, config.threads, [&](std::size_t i) {
                contrib[i] = atlas_data_gradient(state.atlas(), images[i], a.inv[i], config.similarity);
            });
            for (std::size_t i = 0; i < N; ++i) state.accumulate(contrib[i], w.sim_weight * multiplicity[i]);
            state.finish_epoch();
        }

        for (std::size_t i = 0; i < N; ++i) {
            state.velocities()[i] = update_velocity(state.velocities()[i], a.report.gradients[i], config, adam[i]);
        }

        if (state.mode() == AtlasMode::learned) {
            const std::optional<double> recenter =
                config.similarity == Similarity::ncc ? std::optional<double>(cohort_mean) : std::nullopt;
            // atlas_step is a fraction of the per-voxel Newton step of the
            // weighted MSE data term, so it does not depend on grid size.
            double weight = 0.0;
            for (double m : multiplicity) weight += w.sim_weight * m;
            const double step =
                weight > 0.0 ? config.atlas_step * static_cast<double>(state.atlas().size()) / (2.0 * weight) : 0.0;
            state = apply_learned_update(std::move(state), step, recenter);
            if (on_atlas && (epoch % config.atlas_refresh_period == 0 || epoch == config.epochs)) {
                on_atlas(epoch, state.atlas());
            }
        } else if (epoch % config.atlas_refresh_period == 0) {
            std::vector<ScalarField> warped(N), jac(N);
            parallel_for(N, config.threads, [&](std::size_t i) {
                const DeformationMap fwd = integrate(state.velocities()[i], K);
                warped[i] = warp(images[i], fwd);
                if (state.mode() == AtlasMode::closed_form_forward) jac[i] = jacobian_determinant(fwd);
            });
            state.set_atlas(state.mode() == AtlasMode::closed_form_forward ? atlas_forward(warped, jac)
                                                                         : atlas_backward(warped));
            if (config.reset_momentum) {
                for (auto &st : adam) st.reset();
            }
            if (on_atlas) on_atlas(epoch, state.atlas());
        }

        if (config.log_wall_time) {
            row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        result.log.push_back(row);
    }
    return result;
}

RegistrationResult register_image(const ScalarField &atlas, const ScalarField &image, const OptimConfig &config) {
    // The atlas is frozen here, so the atlas-mode / similarity pairing rule
    // does not apply.
    OptimConfig checked = config;
    checked.atlas_mode = AtlasMode::learned;
    checked.validate();
    require_same_shape(atlas.shape, image.shape, "register_image");
    const LossWeights &w = config.weights;
    const int T = config.quadrature_samples, K = config.squaring_steps;
    RegistrationResult r;
    r.velocity = VectorField(atlas.shape);
    AdamState adam;
    const auto start = std::chrono::steady_clock::now();
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const DeformationMap inv = integrate_inverse(r.velocity, K);
        EpochLog row;
        row.epoch = epoch;
        row.sim = w.sim_weight * similarity(config.similarity, warp(atlas, inv), image);
        row.reg = w.lambda * regularizer_energy(r.velocity);
        row.total = row.sim + row.reg;
        row.folds = static_cast<double>(count_folds(inv));
        row.reg_map = w.lambda * bending_energy(inv);
        if (!std::isfinite(row.total)) throw NumericFailure("non-finite loss at iteration " + std::to_string(epoch));
        VectorField g(r.velocity.shape);
        if (w.sim_weight > 0.0) {
            axpy(g, w.sim_weight, data_gradient(atlas, image, time_maps(r.velocity, T, K), inv, config.similarity));
        }
        if (w.lambda > 0.0) axpy(g, w.lambda, regularizer_gradient(r.velocity));
        r.velocity = update_velocity(r.velocity, g, config, adam);
        if (config.log_wall_time) {
            row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        r.log.push_back(row);
    }
    r.fwd = integrate(r.velocity, K);
    r.inv = integrate_inverse(r.velocity, K);
    return r;
}

} // namespace svfatlas
