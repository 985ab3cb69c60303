#pragma once

// Scalar objective terms of the pairwise forward atlas model. Every integral
// over the image domain is discretised as a voxel mean.

#include <string_view>

#include "svfatlas/grid.hpp"

namespace svfatlas {

enum class Similarity { mse, ncc };

Similarity parse_similarity(std::string_view name);
std::string_view to_string(Similarity s);

struct LossWeights {
    double sim_weight = 10.0;
    double lambda = 1.0;  // bending regularizer
    double gamma1 = 0.0;  // pairwise alignment in atlas space
    double gamma2 = 0.0;  // pairwise alignment in image space

    // Throws InvalidInput on negative or non-finite weights.
    void validate() const;
};

double mse(const ScalarField &a, const ScalarField &b);

// 1 - Pearson correlation. Throws DegenerateSimilarity when either input has
// standard deviation <= 1e-8.
double ncc_loss(const ScalarField &a, const ScalarField &b);

double similarity(Similarity kind, const ScalarField &a, const ScalarField &b);

// d similarity(a, b) / d a, per voxel (includes the 1/|Omega| of the mean).
ScalarField similarity_gradient(Similarity kind, const ScalarField &a, const ScalarField &b);

// Mean over interior voxels of sum_k ||H_k(map)||_F^2.
double bending_energy(const DeformationMap &map);

// sim(I_i o fwd_i, I_j o fwd_j): alignment of the pair in atlas space.
double pair_atlas_loss(const ScalarField &image_i, const ScalarField &image_j, const DeformationMap &fwd_i,
                       const DeformationMap &fwd_j, Similarity kind = Similarity::mse);

// sim(I_i o fwd_i o inv_j, I_j) + sim(I_j o fwd_j o inv_i, I_i): alignment in
// image space using the atlas as a bridge. Maps are composed first, then each
// image is resampled once.
double pair_image_loss(const ScalarField &image_i, const ScalarField &image_j, const DeformationMap &fwd_i,
                       const DeformationMap &inv_i, const DeformationMap &fwd_j, const DeformationMap &inv_j,
                       Similarity kind = Similarity::mse);

struct PairObjective {
    double sim = 0.0;         // sim_weight * (sim_i + sim_j)
    double reg = 0.0;         // lambda * (bend(inv_i) + bend(inv_j))
    double pair_atlas = 0.0;  // gamma1 * pair_atlas_loss
    double pair_image = 0.0;  // gamma2 * pair_image_loss
    double total = 0.0;

    // Unweighted components.
    double sim_i = 0.0, sim_j = 0.0, bend_i = 0.0, bend_j = 0.0, raw_pair_atlas = 0.0, raw_pair_image = 0.0;
};

// Bracketed per-pair objective: data + bending for both images plus the two
// pairwise losses. Bending is taken on Phi_{1,0}.
PairObjective total_pair_objective(const ScalarField &atlas, const ScalarField &image_i,
                                   const ScalarField &image_j, const VectorField &v_i, const VectorField &v_j,
                                   const LossWeights &weights, int steps, Similarity kind = Similarity::mse);

} // namespace svfatlas
