#include "svfatlas/inverse.hpp"

#include <algorithm>
#include <cmath>

#include "svfatlas/errors.hpp"

namespace svfatlas {

namespace {

// Multilinear sample of every component of a vector field at p, plus the
// exact derivative of the interpolant (zero along axes where p is clamped).
struct SampleWithJacobian {
    Vec value{};
    Mat3 jac{};  // jac[c][a] = d value_c / d p_a
};

SampleWithJacobian sample_with_jacobian(const VectorField &f, const Vec &p) {
    const GridShape &s = f.shape;
    const int d = s.dim;
    std::int64_t i0[3] = {0, 0, 0};
    double fr[3] = {0.0, 0.0, 0.0};
    bool inside[3] = {true, true, true};
    for (int a = 0; a < d; ++a) {
        const double hi = static_cast<double>(s.extent[a] - 1);
        inside[a] = p[a] >= 0.0 && p[a] <= hi;
        const double q = std::clamp(p[a], 0.0, hi);
        i0[a] = std::min(static_cast<std::int64_t>(std::floor(q)), s.extent[a] - 2);
        fr[a] = q - static_cast<double>(i0[a]);
    }
    SampleWithJacobian out;
    const int corners = 1 << d;
    for (int k = 0; k < corners; ++k) {
        std::int64_t idx[3] = {0, 0, 0};
        double wgt[3] = {1.0, 1.0, 1.0}, dw[3] = {0.0, 0.0, 0.0};
        for (int a = 0; a < d; ++a) {
            const int bit = (k >> a) & 1;
            idx[a] = i0[a] + bit;
            wgt[a] = bit ? fr[a] : 1.0 - fr[a];
            dw[a] = bit ? 1.0 : -1.0;
        }
        const std::size_t voxel = s.index(idx[0], idx[1], idx[2]);
        double w_all = 1.0;
        for (int a = 0; a < d; ++a) w_all *= wgt[a];
        for (int c = 0; c < d; ++c) {
            const double val = f.values[voxel * d + c];
            out.value[c] += w_all * val;
            for (int a = 0; a < d; ++a) {
                if (!inside[a]) continue;
                double partial = dw[a];
                for (int b = 0; b < d; ++b)
                    if (b != a) partial *= wgt[b];
                out.jac[c][a] += partial * val;
            }
        }
    }
    return out;
}

// Scatter `value` (per component) onto the corners of p's cell with the
// multilinear weights.
void scatter(VectorField &g, const Vec &p, const Vec &value) {
    const GridShape &s = g.shape;
    const int d = s.dim;
    std::int64_t i0[3] = {0, 0, 0};
    double fr[3] = {0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) {
        const double q = std::clamp(p[a], 0.0, static_cast<double>(s.extent[a] - 1));
        i0[a] = std::min(static_cast<std::int64_t>(std::floor(q)), s.extent[a] - 2);
        fr[a] = q - static_cast<double>(i0[a]);
    }
    for (int k = 0; k < (1 << d); ++k) {
        std::int64_t idx[3] = {0, 0, 0};
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const int bit = (k >> a) & 1;
            idx[a] = i0[a] + bit;
            w *= bit ? fr[a] : 1.0 - fr[a];
        }
        const std::size_t voxel = s.index(idx[0], idx[1], idx[2]);
        for (int c = 0; c < d; ++c) g.values[voxel * d + c] += w * value[c];
    }
}

struct Evaluation {
    double residual = 0.0;
    VectorField gradient;
};

Evaluation evaluate(const DeformationMap &map, const VectorField &w, bool with_gradient) {
    const GridShape &s = map.shape();
    const int d = s.dim;
    const VectorField &u = map.displacement;
    Evaluation e;
    if (with_gradient) e.gradient = VectorField(s);
    std::size_t count = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < s.voxel_count(); ++i) {
        if (!s.is_interior(i, 1)) continue;
        ++count;
        const Vec x = s.coord(i);
        Vec wi{}, ui{}, p{}, q{};
        for (int c = 0; c < d; ++c) {
            wi[c] = w.comp(i, c);
            ui[c] = u.comp(i, c);
            p[c] = x[c] + wi[c];
            q[c] = x[c] + ui[c];
        }
        // A = Phi(phi(x)) - x, B = phi(Phi(x)) - x.
        const SampleWithJacobian us = sample_with_jacobian(u, p);
        const Vec wq = interpolate_vec(w, q);
        Vec A{}, B{};
        for (int c = 0; c < d; ++c) {
            A[c] = wi[c] + us.value[c];
            B[c] = ui[c] + wq[c];
            acc += A[c] * A[c] + B[c] * B[c];
        }
        if (with_gradient) {
            for (int a = 0; a < d; ++a) {
                double g = A[a];
                for (int c = 0; c < d; ++c) g += us.jac[c][a] * A[c];
                e.gradient.comp(i, a) += 2.0 * g;
            }
            Vec twoB{};
            for (int c = 0; c < d; ++c) twoB[c] = 2.0 * B[c];
            scatter(e.gradient, q, twoB);
        }
    }
    const double n = static_cast<double>(count);
    e.residual = acc / n;
    if (with_gradient) {
        for (double &g : e.gradient.values) g /= n;
    }
    return e;
}

void require_invertible_input(const DeformationMap &map) {
    map.shape().validate();
    for (double x : map.displacement.values) {
        if (!std::isfinite(x)) throw InvalidInput("numeric_inverse: map has non-finite displacement");
    }
    for (int a = 0; a < map.shape().dim; ++a) {
        if (map.shape().extent[a] < 3) throw InvalidInput("numeric_inverse: every extent must be >= 3");
    }
}

} // namespace

double inverse_residual(const DeformationMap &map, const DeformationMap &candidate) {
    require_same_shape(map.shape(), candidate.shape(), "inverse_residual");
    return evaluate(map, candidate.displacement, false).residual;
}

InverseResult numeric_inverse(const DeformationMap &map, const InverseOptions &options) {
    require_invertible_input(map);
    if (options.max_iters < 0 || !(options.step > 0.0) || !(options.tol >= 0.0)) {
        throw InvalidInput("numeric_inverse: invalid options");
    }
    VectorField w = map.displacement;
    for (double &x : w.values) x = -x;

    Evaluation cur = evaluate(map, w, true);
    InverseResult r;
    r.initial_residual = cur.residual;
    r.history.push_back(cur.residual);

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    VectorField m(w.shape), s(w.shape);
    for (int it = 1; it <= options.max_iters && cur.residual > 0.0; ++it) {
        const double c1 = 1.0 - std::pow(b1, it), c2 = 1.0 - std::pow(b2, it);
        VectorField dir(w.shape);
        for (std::size_t k = 0; k < w.values.size(); ++k) {
            const double g = cur.gradient.values[k];
            m.values[k] = b1 * m.values[k] + (1.0 - b1) * g;
            s.values[k] = b2 * s.values[k] + (1.0 - b2) * g * g;
            dir.values[k] = (m.values[k] / c1) / (std::sqrt(s.values[k] / c2) + eps);
        }
        bool accepted = false;
        double step = options.step;
        VectorField trial(w.shape);
        Evaluation next;
        for (int halving = 0; halving <= 40; ++halving, step *= 0.5) {
            for (std::size_t k = 0; k < w.values.size(); ++k) trial.values[k] = w.values[k] - step * dir.values[k];
            next = evaluate(map, trial, false);
            if (next.residual <= cur.residual) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        const double improvement = cur.residual - next.residual;
        w = std::move(trial);
        cur = evaluate(map, w, true);
        r.history.push_back(cur.residual);
        r.iterations = it;
        if (improvement < options.tol) break;
    }
    r.residual = cur.residual;
    r.inverse = DeformationMap(std::move(w));
    if (!(r.residual <= options.failure_threshold)) {
        throw NonInvertibleMap("numeric inverse residual " + std::to_string(r.residual) +
                                   " exceeds the failure threshold " + std::to_string(options.failure_threshold),
                               r.residual);
    }
    return r;
}

} // namespace svfatlas
