#pragma once

// Deterministic synthetic cohorts: a template of nested smooth-edged
// ellipses, warped per image by a random affine map composed with a random
// smooth velocity-field map, plus clipped Gaussian noise.

#include <cstdint>
#include <vector>

#include "svfatlas/atlas.hpp"
#include "svfatlas/grid.hpp"

namespace svfatlas {

struct SynthConfig {
    std::vector<std::int64_t> dims{64, 64};
    int N = 8;
    int structures = 3;
    double velocity_scale = 3.0;  // max |v| in voxels
    double smoothness = 6.0;      // Gaussian sigma of the velocity noise, voxels
    // Bounds the affine draw: log-scales, rotation angles (radians) and shears
    // are uniform in [-a, a]; translations in [-a, a] * min(dims) / 4 voxels.
    double affine_scale = 0.1;
    double noise_sigma = 0.02;
    std::uint64_t seed = 17;

    // Throws InvalidInput on N < 2, structures < 1, negative scales,
    // smoothness <= 0 or bad dims.
    void validate() const;
};

struct SynthCohort {
    Cohort cohort;
    std::vector<DeformationMap> fwd;  // template -> image (Phi_{0,1})
    std::vector<DeformationMap> inv;  // image -> template (Phi_{1,0})
    ScalarField template_image;
    LabelField template_labels;
};

ScalarField make_template_image(const GridShape &shape, int structures);
LabelField make_template_labels(const GridShape &shape, int structures);

// Throws ConfigInfeasible if an image needs more than 100 draws to obtain
// fold-free maps.
SynthCohort generate(const SynthConfig &config);

// seed_i for image i.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Maps the 0.1th / 99.9th percentiles (linear interpolation between order
// statistics) to 0 / 1 and clamps. Throws DegenerateIntensity when the two
// percentiles coincide.
ScalarField normalize_intensity(const ScalarField &image);
double percentile(std::vector<double> values, double pct);

} // namespace svfatlas
