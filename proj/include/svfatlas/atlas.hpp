#pragma once

// Atlas initialisation and update rules: closed-form (plain / Jacobian
// weighted mean of warped images) and the gradient-learned atlas with
// per-epoch gradient accumulation.

#include <optional>
#include <string_view>
#include <vector>

#include "svfatlas/grid.hpp"
#include "svfatlas/losses.hpp"

namespace svfatlas {

inline constexpr double kDegenerateWeightEps = 1e-8;

enum class AtlasMode { closed_form_forward, closed_form_backward, learned };

AtlasMode parse_atlas_mode(std::string_view name);
std::string_view to_string(AtlasMode m);

struct Cohort {
    std::vector<ScalarField> images;
    std::vector<LabelField> labels;  // empty, or one per image

    std::size_t size() const noexcept { return images.size(); }
    bool has_labels() const noexcept { return !labels.empty(); }
    const GridShape &shape() const { return images.front().shape; }

    // Throws InvalidInput on N < 2, mismatched shapes, or a label count that
    // is neither 0 nor N.
    void validate() const;
};

class AtlasState {
  public:
    AtlasState(ScalarField atlas, std::size_t cohort_size, AtlasMode mode);

    const ScalarField &atlas() const noexcept { return atlas_; }
    void set_atlas(ScalarField a);

    std::vector<VectorField> &velocities() noexcept { return velocities_; }
    const std::vector<VectorField> &velocities() const noexcept { return velocities_; }
    AtlasMode mode() const noexcept { return mode_; }
    const ScalarField &accumulated_gradient() const noexcept { return accumulated_; }
    bool epoch_complete() const noexcept { return epoch_complete_; }

    // Learned mode bookkeeping: zero the accumulator, add per-image
    // contributions (in a fixed order), then mark the epoch complete.
    void begin_epoch();
    void accumulate(const ScalarField &contribution, double weight = 1.0);
    void finish_epoch();

  private:
    friend AtlasState apply_learned_update(AtlasState state, double step, std::optional<double> recenter_mean);

    ScalarField atlas_;
    std::vector<VectorField> velocities_;
    AtlasMode mode_;
    ScalarField accumulated_;
    bool epoch_complete_ = false;
};

// Voxelwise mean of the cohort images.
ScalarField init_atlas(const Cohort &cohort);
ScalarField init_atlas(const std::vector<ScalarField> &images);

// Optimal backward-model atlas: mean of the images pulled into atlas space.
ScalarField atlas_backward(const std::vector<ScalarField> &warped);

// Optimal forward-model atlas: Jacobian-weighted mean of I_i o Phi_{0,1}
// with weights |D Phi_{0,1}|. Throws DegenerateWeights if the weight sum at
// any voxel is <= 1e-8.
ScalarField atlas_forward(const std::vector<ScalarField> &warped, const std::vector<ScalarField> &jac_dets);

// Gradient of mean(sim(atlas o inv_map, image)) with respect to every atlas
// voxel: the residual is scattered back through the bilinear weights of
// inv_map (= Phi_{1,0}). For MSE this is the discrete counterpart of
// 2 (atlas - I o Phi_{0,1}) |D Phi_{0,1}| / |Omega|.
ScalarField atlas_data_gradient(const ScalarField &atlas, const ScalarField &image, const DeformationMap &inv_map,
                                Similarity kind = Similarity::mse);

// atlas <- clamp(atlas - step * accumulated, 0, 1). With `recenter_mean` the
// stepped atlas is first shifted to that mean intensity (NCC cannot see the
// atlas offset).
// The accumulator is reset. Throws SequencingError unless the mode is learned
// and finish_epoch() has been called.
AtlasState apply_learned_update(AtlasState state, double step, std::optional<double> recenter_mean = std::nullopt);

} // namespace svfatlas
