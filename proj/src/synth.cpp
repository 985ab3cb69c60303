#include "svfatlas/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "svfatlas/errors.hpp"
#include "svfatlas/eval.hpp"
#include "svfatlas/svf.hpp"

namespace svfatlas {

void SynthConfig::validate() const {
    if (dims.size() != 2 && dims.size() != 3) throw InvalidInput("synth dims must have 2 or 3 entries");
    for (auto d : dims) {
        if (d < 8) throw InvalidInput("synth dims must be >= 8");
    }
    if (N < 2) throw InvalidInput("synth N must be >= 2");
    if (structures < 1) throw InvalidInput("synth structures must be >= 1");
    if (!(velocity_scale >= 0.0) || !std::isfinite(velocity_scale)) throw InvalidInput("velocity_scale must be >= 0");
    if (!(smoothness > 0.0) || !std::isfinite(smoothness)) throw InvalidInput("smoothness must be > 0");
    if (!(affine_scale >= 0.0) || !std::isfinite(affine_scale)) throw InvalidInput("affine_scale must be >= 0");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InvalidInput("noise_sigma must be >= 0");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finaliser over seed and index.
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(seed ^ mix(index));
}

namespace {

struct Ellipse {
    Vec centre, axes;
};

std::vector<Ellipse> template_ellipses(const GridShape &s, int K) {
    std::vector<Ellipse> out;
    const double n[3] = {static_cast<double>(s.extent[0]), static_cast<double>(s.extent[1]),
                         static_cast<double>(s.extent[2])};
    for (int k = 1; k <= K; ++k) {
        const double frac = static_cast<double>(K - k + 1) / K;
        Ellipse e;
        e.centre = {0.5 * (n[0] - 1) + 0.03 * n[0] * (k - 1), 0.5 * (n[1] - 1) - 0.02 * n[1] * (k - 1),
                    0.5 * (n[2] - 1)};
        e.axes = {0.36 * n[0] * frac, 0.28 * n[1] * frac, 0.30 * n[2] * frac};
        out.push_back(e);
    }
    return out;
}

double normalized_radius(const Ellipse &e, const Vec &x, int dim) {
    double r2 = 0.0;
    for (int a = 0; a < dim; ++a) {
        const double q = (x[a] - e.centre[a]) / e.axes[a];
        r2 += q * q;
    }
    return std::sqrt(r2);
}

double level(int k, int K) { return 0.25 + 0.75 * static_cast<double>(k) / K; }

using Affine = std::array<std::array<double, 4>, 3>;  // [M | t], acting about the origin

Vec apply(const Affine &A, const Vec &x, int dim) {
    Vec y{0.0, 0.0, 0.0};
    for (int r = 0; r < dim; ++r) {
        y[r] = A[r][3];
        for (int c = 0; c < dim; ++c) y[r] += A[r][c] * x[c];
    }
    return y;
}

Mat3 matmul(const Mat3 &a, const Mat3 &b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

Mat3 identity3() { return Mat3{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

Mat3 inverse3(const Mat3 &m) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    Mat3 r{};
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return r;
}

// x -> c + M (x - c) + t, and its inverse.
std::pair<Affine, Affine> random_affine(const GridShape &s, double a, std::mt19937_64 &rng) {
    const int d = s.dim;
    std::uniform_real_distribution<double> U(-a, a);
    Mat3 scale = identity3(), shear = identity3(), rot = identity3();
    for (int k = 0; k < d; ++k) scale[k][k] = std::exp(U(rng));
    for (int r = 0; r < d; ++r)
        for (int c = r + 1; c < d; ++c) shear[r][c] = U(rng);
    const int planes = d == 2 ? 1 : 3;
    for (int p = 0; p < planes; ++p) {
        const int i = p == 2 ? 1 : 0, j = p == 0 ? 1 : 2;
        const double th = U(rng);
        Mat3 R = identity3();
        R[i][i] = std::cos(th);
        R[i][j] = -std::sin(th);
        R[j][i] = std::sin(th);
        R[j][j] = std::cos(th);
        rot = matmul(R, rot);
    }
    const Mat3 M = matmul(rot, matmul(shear, scale));
    std::int64_t smallest = s.extent[0];
    for (int k = 1; k < d; ++k) smallest = std::min(smallest, s.extent[k]);
    const double tmax = static_cast<double>(smallest) / 4.0;
    Vec t{0.0, 0.0, 0.0}, c{0.0, 0.0, 0.0};
    for (int k = 0; k < d; ++k) {
        t[k] = U(rng) * tmax;
        c[k] = 0.5 * static_cast<double>(s.extent[k] - 1);
    }
    const Mat3 Mi = inverse3(M);
    Affine fwd{}, inv{};
    for (int r = 0; r < 3; ++r) {
        double off = c[r] + t[r], off_inv = c[r];
        for (int k = 0; k < 3; ++k) {
            fwd[r][k] = r < d && k < d ? M[r][k] : 0.0;
            inv[r][k] = r < d && k < d ? Mi[r][k] : 0.0;
            off -= M[r][k] * c[k];
            off_inv -= Mi[r][k] * (c[k] + t[k]);
        }
        fwd[r][3] = off;
        inv[r][3] = off_inv;
    }
    return {fwd, inv};
}

VectorField random_velocity(const GridShape &s, double scale, double sigma, std::mt19937_64 &rng) {
    VectorField v(s);
    std::normal_distribution<double> G(0.0, 1.0);
    for (double &x : v.values) x = G(rng);
    if (scale == 0.0) return VectorField(s);
    v = gaussian_smooth(v, sigma);
    double mx = 0.0;
    for (std::size_t i = 0; i < v.voxel_count(); ++i) {
        double sq = 0.0;
        for (int c = 0; c < s.dim; ++c) sq += v.comp(i, c) * v.comp(i, c);
        mx = std::max(mx, std::sqrt(sq));
    }
    if (mx > 0.0) {
        for (double &x : v.values) x *= scale / mx;
    }
    return v;
}

} // namespace

ScalarField make_template_image(const GridShape &s, int K) {
    const auto ellipses = template_ellipses(s, K);
    ScalarField img(s);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const Vec x = s.coord(i);
        double val = 0.0;
        for (int k = 1; k <= K; ++k) {
            const Ellipse &e = ellipses[k - 1];
            double minor = e.axes[0];
            for (int a = 1; a < s.dim; ++a) minor = std::min(minor, e.axes[a]);
            const double dist = (1.0 - normalized_radius(e, x, s.dim)) * minor;
            const double step = level(k, K) - (k > 1 ? level(k - 1, K) : 0.0);
            val += step / (1.0 + std::exp(-dist / 0.6));
        }
        img[i] = std::clamp(val, 0.0, 1.0);
    }
    return img;
}

LabelField make_template_labels(const GridShape &s, int K) {
    const auto ellipses = template_ellipses(s, K);
    LabelField lab(s, static_cast<std::uint32_t>(K));
    for (std::size_t i = 0; i < lab.labels.size(); ++i) {
        const Vec x = s.coord(i);
        for (int k = K; k >= 1; --k) {
            if (normalized_radius(ellipses[k - 1], x, s.dim) <= 1.0) {
                lab[i] = static_cast<std::uint32_t>(k);
                break;
            }
        }
    }
    return lab;
}

SynthCohort generate(const SynthConfig &config) {
    config.validate();
    const GridShape s = GridShape::from(config.dims);
    SynthCohort out;
    out.template_image = make_template_image(s, config.structures);
    out.template_labels = make_template_labels(s, config.structures);
    const std::size_t N = static_cast<std::size_t>(config.N);
    out.cohort.images.resize(N);
    out.cohort.labels.resize(N);
    out.fwd.resize(N);
    out.inv.resize(N);

    for (std::size_t i = 0; i < N; ++i) {
        std::mt19937_64 rng(derive_seed(config.seed, i));
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            const auto [A, Ainv] = random_affine(s, config.affine_scale, rng);
            const VectorField w = random_velocity(s, config.velocity_scale, config.smoothness, rng);
            const DeformationMap ew = integrate(w);
            const DeformationMap ew_inv = integrate_inverse(w);
            VectorField fwd(s), inv(s);
            for (std::size_t x = 0; x < s.voxel_count(); ++x) {
                const Vec g = s.coord(x);
                const Vec f = apply(A, ew.position(x), s.dim);
                const Vec p = apply(Ainv, g, s.dim);
                const Vec u = interpolate_vec(ew_inv.displacement, p);
                for (int c = 0; c < s.dim; ++c) {
                    fwd.comp(x, c) = f[c] - g[c];
                    inv.comp(x, c) = p[c] + u[c] - g[c];
                }
            }
            DeformationMap F(std::move(fwd)), I(std::move(inv));
            if (count_folds(F) > 0 || count_folds(I) > 0) continue;
            out.fwd[i] = std::move(F);
            out.inv[i] = std::move(I);
            ok = true;
        }
        if (!ok) {
            throw ConfigInfeasible("could not draw fold-free maps for image " + std::to_string(i) +
                                   " in 100 attempts; lower velocity_scale or affine_scale");
        }
        ScalarField img = warp(out.template_image, out.inv[i]);
        if (config.noise_sigma > 0.0) {
            std::normal_distribution<double> G(0.0, config.noise_sigma);
            for (double &x : img.values) x = std::clamp(x + G(rng), 0.0, 1.0);
        }
        out.cohort.images[i] = std::move(img);
        out.cohort.labels[i] = warp_labels(out.template_labels, out.inv[i]);
    }
    return out;
}

double percentile(std::vector<double> values, double pct) {
    if (values.empty()) throw InvalidInput("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return values[lo] + f * (values[hi] - values[lo]);
}

ScalarField normalize_intensity(const ScalarField &image) {
    const double lo = percentile(image.values, 0.1);
    const double hi = percentile(image.values, 99.9);
    if (!(hi - lo > 0.0)) throw DegenerateIntensity("image intensities are (nearly) constant; cannot normalize");
    ScalarField out(image.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp((image[i] - lo) / (hi - lo), 0.0, 1.0);
    return out;
}

} // namespace svfatlas
