#include "svfatlas/svf.hpp"

#include <cmath>

#include "svfatlas/errors.hpp"

namespace svfatlas {

namespace {

DeformationMap exp_scaled(const VectorField &v, double scale, int steps) {
    if (steps < 1) throw InvalidInput("scaling and squaring needs at least one step");
    for (double c : v.values) {
        if (!std::isfinite(c)) throw InvalidInput("velocity field has non-finite components");
    }
    VectorField u = v;
    const double f = scale / std::ldexp(1.0, steps);
    for (double &c : u.values) c *= f;
    DeformationMap phi(std::move(u));
    for (int k = 0; k < steps; ++k) phi = compose(phi, phi);
    return phi;
}

} // namespace

DeformationMap integrate(const VectorField &v, int steps) { return exp_scaled(v, 1.0, steps); }

DeformationMap integrate_inverse(const VectorField &v, int steps) { return exp_scaled(v, -1.0, steps); }

DeformationMap integrate_partial(const VectorField &v, double s, double t, int steps) {
    if (!(s >= 0.0 && s <= 1.0 && t >= 0.0 && t <= 1.0)) {
        throw InvalidInput("integrate_partial times must lie in [0, 1]");
    }
    return exp_scaled(v, t - s, steps);
}

DeformationMap compose(const DeformationMap &outer, const DeformationMap &inner) {
    require_same_shape(outer.shape(), inner.shape(), "compose");
    VectorField u = resample(outer.displacement, inner);
    for (std::size_t k = 0; k < u.values.size(); ++k) u.values[k] += inner.displacement.values[k];
    return DeformationMap(std::move(u));
}

} // namespace svfatlas
