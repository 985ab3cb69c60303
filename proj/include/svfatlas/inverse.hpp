#pragma once

// Numeric inversion of deformation maps that do not come from a velocity
// field: minimises the symmetric residual
//   R(phi) = mean_int |Phi o phi - Id|^2 + mean_int |phi o Phi - Id|^2
// (interior voxels, voxel^2 units) starting from phi = Id - u.

#include <vector>

#include "svfatlas/grid.hpp"

namespace svfatlas {

struct InverseOptions {
    int max_iters = 2000;
    double step = 1e-2;
    double tol = 1e-8;                // stop when an accepted step improves R by less
    double failure_threshold = 1.0;  // NonInvertibleMap if the final R is larger
};

struct InverseResult {
    DeformationMap inverse;
    double residual = 0.0;
    double initial_residual = 0.0;
    std::vector<double> history;  // R after every accepted step, starting with R(phi0)
    int iterations = 0;
};

double inverse_residual(const DeformationMap &map, const DeformationMap &candidate);

// Adam on R with the exact discrete gradient. A step that would increase R
// is halved until it does not (up to 40 times), so `history` is
// non-increasing.
InverseResult numeric_inverse(const DeformationMap &map, const InverseOptions &options = {});

} // namespace svfatlas
