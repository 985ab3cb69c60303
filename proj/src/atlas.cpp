#include "svfatlas/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "svfatlas/errors.hpp"

namespace svfatlas {

AtlasMode parse_atlas_mode(std::string_view name) {
    if (name == "closed_form_forward") return AtlasMode::closed_form_forward;
    if (name == "closed_form_backward") return AtlasMode::closed_form_backward;
    if (name == "learned") return AtlasMode::learned;
    throw ConfigError("unknown atlas mode '" + std::string(name) + "'");
}

std::string_view to_string(AtlasMode m) {
    switch (m) {
    case AtlasMode::closed_form_forward: return "closed_form_forward";
    case AtlasMode::closed_form_backward: return "closed_form_backward";
    case AtlasMode::learned: return "learned";
    }
    return "?";
}

void Cohort::validate() const {
    if (images.size() < 2) throw InvalidInput("cohort needs at least 2 images");
    for (std::size_t i = 1; i < images.size(); ++i) {
        if (images[i].shape != images[0].shape) {
            throw InvalidInput("cohort image " + std::to_string(i) + " has a different shape than image 0");
        }
    }
    if (!labels.empty()) {
        if (labels.size() != images.size()) throw InvalidInput("cohort label count must match image count");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i].shape != images[0].shape) {
                throw InvalidInput("cohort label " + std::to_string(i) + " has a different shape than image 0");
            }
        }
    }
}

AtlasState::AtlasState(ScalarField atlas, std::size_t cohort_size, AtlasMode mode)
    : atlas_(std::move(atlas)), velocities_(cohort_size, VectorField(atlas_.shape)), mode_(mode),
      accumulated_(atlas_.shape) {}

void AtlasState::set_atlas(ScalarField a) {
    require_same_shape(a.shape, atlas_.shape, "AtlasState::set_atlas");
    atlas_ = std::move(a);
}

void AtlasState::begin_epoch() {
    std::fill(accumulated_.values.begin(), accumulated_.values.end(), 0.0);
    epoch_complete_ = false;
}

void AtlasState::accumulate(const ScalarField &contribution, double weight) {
    if (mode_ != AtlasMode::learned) throw SequencingError("atlas gradients are only accumulated in learned mode");
    require_same_shape(contribution.shape, accumulated_.shape, "AtlasState::accumulate");
    for (std::size_t i = 0; i < accumulated_.size(); ++i) accumulated_[i] += weight * contribution[i];
}

void AtlasState::finish_epoch() { epoch_complete_ = true; }

ScalarField init_atlas(const std::vector<ScalarField> &images) {
    if (images.empty()) throw InvalidInput("init_atlas: empty cohort");
    return atlas_backward(images);
}

ScalarField init_atlas(const Cohort &cohort) { return init_atlas(cohort.images); }

ScalarField atlas_backward(const std::vector<ScalarField> &warped) {
    if (warped.empty()) throw InvalidInput("atlas_backward: no warped images");
    ScalarField out(warped.front().shape);
    for (const auto &w : warped) {
        require_same_shape(w.shape, out.shape, "atlas_backward");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[i];
    }
    const double n = static_cast<double>(warped.size());
    for (double &v : out.values) v /= n;
    return out;
}

ScalarField atlas_forward(const std::vector<ScalarField> &warped, const std::vector<ScalarField> &jac_dets) {
    if (warped.empty()) throw InvalidInput("atlas_forward: no warped images");
    if (warped.size() != jac_dets.size()) throw InvalidInput("atlas_forward: image / jacobian count mismatch");
    const GridShape &s = warped.front().shape;
    ScalarField num(s), den(s);
    for (std::size_t k = 0; k < warped.size(); ++k) {
        require_same_shape(warped[k].shape, s, "atlas_forward");
        require_same_shape(jac_dets[k].shape, s, "atlas_forward");
        for (std::size_t i = 0; i < num.size(); ++i) {
            num[i] += warped[k][i] * jac_dets[k][i];
            den[i] += jac_dets[k][i];
        }
    }
    for (std::size_t i = 0; i < num.size(); ++i) {
        if (!(den[i] > kDegenerateWeightEps)) {
            const Vec c = s.coord(i);
            throw DegenerateWeights("atlas_forward: jacobian weight sum " + std::to_string(den[i]) + " at voxel (" +
                                    std::to_string(static_cast<long long>(c[0])) + "," +
                                    std::to_string(static_cast<long long>(c[1])) + "," +
                                    std::to_string(static_cast<long long>(c[2])) + ")");
        }
        num[i] /= den[i];
    }
    return num;
}

ScalarField atlas_data_gradient(const ScalarField &atlas, const ScalarField &image, const DeformationMap &inv_map,
                                Similarity kind) {
    require_same_shape(atlas.shape, image.shape, "atlas_data_gradient");
    require_same_shape(atlas.shape, inv_map.shape(), "atlas_data_gradient");
    const ScalarField moved = warp(atlas, inv_map);
    return warp_adjoint(similarity_gradient(kind, moved, image), inv_map);
}

AtlasState apply_learned_update(AtlasState state, double step, std::optional<double> recenter_mean) {
    if (state.mode_ != AtlasMode::learned) throw SequencingError("apply_learned_update requires learned atlas mode");
    if (!state.epoch_complete_) throw SequencingError("apply_learned_update called before the epoch was completed");
    if (!std::isfinite(step)) throw InvalidInput("atlas step must be finite");
    ScalarField &a = state.atlas_;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= step * state.accumulated_[i];
    if (recenter_mean) {
        double mean = 0.0;
        for (double v : a.values) mean += v;
        mean /= static_cast<double>(a.size());
        const double shift = *recenter_mean - mean;
        for (double &v : a.values) v += shift;
    }
    for (double &v : a.values) v = std::clamp(v, 0.0, 1.0);
    state.begin_epoch();
    return state;
}

} // namespace svfatlas
