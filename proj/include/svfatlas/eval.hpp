#pragma once

// Segmentation-overlap measures for atlas building: Dice, plurality voting,
// atlas-space / image-space / atlas-as-a-bridge scores and fold counting.
//
// Structures are labels 1..K (0 is background). Statistics are averaged per
// sample first (image, target or pair) and then across samples; std is the
// population standard deviation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svfatlas/grid.hpp"

namespace svfatlas {

// 2|A∩B| / (|A|+|B|) for label k; 1.0 when both are empty.
double dice(const LabelField &a, const LabelField &b, std::uint32_t k);

// Per-voxel most frequent label; ties go to the smallest label.
LabelField plurality_vote(const std::vector<LabelField> &segs);

struct MeasureStats {
    std::string measure;
    // samples[s][k - 1]: Dice of structure k in sample s.
    std::vector<std::vector<double>> samples;
    std::vector<double> mean, std;  // per structure
    double all_mean = 0.0, all_std = 0.0;  // per-sample structure average

    std::uint32_t structures() const noexcept { return static_cast<std::uint32_t>(mean.size()); }
};

// Builds the summary statistics from per-sample rows.
MeasureStats summarize(std::string measure, std::vector<std::vector<double>> samples);

// Consensus variant: each S_i o Phi_{0,1}^i against their plurality vote.
// The pairwise variant averages Dice over all pairs i < j instead.
MeasureStats eval_atlas_space(const std::vector<LabelField> &segs, const std::vector<DeformationMap> &fwd_maps,
                              bool pairwise = false);

// atlas_seg o Phi_{1,0}^i against S_i.
MeasureStats eval_image_space(const LabelField &atlas_seg, const std::vector<LabelField> &segs,
                              const std::vector<DeformationMap> &inv_maps);

// For every target j: vote of S_i o (Phi^i_{0,1} o Phi^j_{1,0}), i != j,
// against S_j. Each label field is resampled once through the composed map.
MeasureStats eval_bridge(const std::vector<LabelField> &segs, const std::vector<DeformationMap> &fwd_maps,
                         const std::vector<DeformationMap> &inv_maps);

// Interior voxels with negative Jacobian determinant.
std::size_t count_folds(const DeformationMap &map);

struct EvalReport {
    MeasureStats d_atlas;
    std::optional<MeasureStats> d_atlas_pairwise;
    std::optional<MeasureStats> d_image;
    MeasureStats d_bridge;
    double folds_mean = 0.0, folds_std = 0.0;  // per Phi_{1,0} map
    bool atlas_seg_from_vote = false;
};

struct EvalOptions {
    bool pairwise_atlas = false;
    // d_image needs an atlas segmentation: either supplied, or the vote of
    // the training segmentations warped to atlas space.
    std::optional<LabelField> atlas_seg;
    bool vote_atlas_seg = false;
};

EvalReport evaluate(const std::vector<LabelField> &segs, const std::vector<DeformationMap> &fwd_maps,
                    const std::vector<DeformationMap> &inv_maps, const EvalOptions &options = {});

} // namespace svfatlas
