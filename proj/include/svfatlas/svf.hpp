#pragma once

// Stationary velocity field exponentiation and map algebra.

#include "svfatlas/grid.hpp"

namespace svfatlas {

inline constexpr int kDefaultSquaringSteps = 6;

// Phi^v_{0,1} by scaling and squaring: Id + v/2^K, then K self-compositions.
DeformationMap integrate(const VectorField &v, int steps = kDefaultSquaringSteps);

// Phi^v_{1,0} = integrate(-v).
DeformationMap integrate_inverse(const VectorField &v, int steps = kDefaultSquaringSteps);

// Phi^v_{s,t} = integrate((t - s) v); s, t in [0, 1].
DeformationMap integrate_partial(const VectorField &v, double s, double t, int steps = kDefaultSquaringSteps);

// result(x) = outer(inner(x)), sampling outer's displacement at inner(x).
DeformationMap compose(const DeformationMap &outer, const DeformationMap &inner);

} // namespace svfatlas
