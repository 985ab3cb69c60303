#include "svfatlas/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "svfatlas/errors.hpp"
#include "svfatlas/svf.hpp"

namespace svfatlas {

double dice(const LabelField &a, const LabelField &b, std::uint32_t k) {
    require_same_shape(a.shape, b.shape, "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        const bool in_a = a[i] == k, in_b = b[i] == k;
        na += in_a;
        nb += in_b;
        both += in_a && in_b;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

LabelField plurality_vote(const std::vector<LabelField> &segs) {
    if (segs.empty()) throw InvalidInput("plurality_vote: no segmentations");
    std::uint32_t structures = 0;
    for (const auto &s : segs) {
        require_same_shape(s.shape, segs.front().shape, "plurality_vote");
        structures = std::max(structures, s.num_structures);
    }
    LabelField out(segs.front().shape, structures);
    std::map<std::uint32_t, std::size_t> counts;
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        counts.clear();
        for (const auto &s : segs) ++counts[s[i]];
        // std::map iterates in ascending label order, so strict > keeps the
        // smallest label on ties.
        std::uint32_t best = 0;
        std::size_t best_count = 0;
        for (const auto &[label, c] : counts) {
            if (c > best_count) {
                best = label;
                best_count = c;
            }
        }
        out[i] = best;
    }
    return out;
}

namespace {

std::uint32_t structure_count(const std::vector<LabelField> &segs) {
    std::uint32_t k = 0;
    for (const auto &s : segs) {
        k = std::max(k, s.num_structures);
        for (std::uint32_t l : s.labels) k = std::max(k, l);
    }
    return k;
}

std::vector<double> dice_row(const LabelField &a, const LabelField &b, std::uint32_t K) {
    std::vector<double> row(K);
    for (std::uint32_t k = 1; k <= K; ++k) row[k - 1] = dice(a, b, k);
    return row;
}

void mean_std(const std::vector<double> &xs, double &mean, double &sd) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    sd = std::sqrt(var / static_cast<double>(xs.size()));
}

void check_counts(std::size_t segs, std::size_t maps, const char *what) {
    if (segs != maps) throw InvalidInput(std::string(what) + ": segmentation and map counts differ");
    if (segs == 0) throw InvalidInput(std::string(what) + ": no segmentations");
}

} // namespace

MeasureStats summarize(std::string measure, std::vector<std::vector<double>> samples) {
    MeasureStats m;
    m.measure = std::move(measure);
    if (samples.empty()) throw InvalidInput("summarize: no samples");
    const std::size_t K = samples.front().size();
    m.mean.resize(K);
    m.std.resize(K);
    std::vector<double> column(samples.size()), overall(samples.size());
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t s = 0; s < samples.size(); ++s) column[s] = samples[s].at(k);
        mean_std(column, m.mean[k], m.std[k]);
    }
    for (std::size_t s = 0; s < samples.size(); ++s) {
        double acc = 0.0;
        for (double x : samples[s]) acc += x;
        overall[s] = K ? acc / static_cast<double>(K) : 1.0;
    }
    mean_std(overall, m.all_mean, m.all_std);
    m.samples = std::move(samples);
    return m;
}

MeasureStats eval_atlas_space(const std::vector<LabelField> &segs, const std::vector<DeformationMap> &fwd_maps,
                              bool pairwise) {
    check_counts(segs.size(), fwd_maps.size(), "eval_atlas_space");
    const std::uint32_t K = structure_count(segs);
    std::vector<LabelField> warped;
    warped.reserve(segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) warped.push_back(warp_labels(segs[i], fwd_maps[i]));
    std::vector<std::vector<double>> rows;
    if (pairwise) {
        if (segs.size() < 2) throw InvalidInput("pairwise atlas-space measure needs at least 2 segmentations");
        for (std::size_t i = 0; i < warped.size(); ++i)
            for (std::size_t j = i + 1; j < warped.size(); ++j) rows.push_back(dice_row(warped[i], warped[j], K));
        return summarize("d_atlas_pairwise", std::move(rows));
    }
    const LabelField consensus = plurality_vote(warped);
    for (const auto &w : warped) rows.push_back(dice_row(w, consensus, K));
    return summarize("d_atlas", std::move(rows));
}

MeasureStats eval_image_space(const LabelField &atlas_seg, const std::vector<LabelField> &segs,
                              const std::vector<DeformationMap> &inv_maps) {
    check_counts(segs.size(), inv_maps.size(), "eval_image_space");
    std::vector<LabelField> all = segs;
    all.push_back(atlas_seg);
    const std::uint32_t K = structure_count(all);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        rows.push_back(dice_row(warp_labels(atlas_seg, inv_maps[i]), segs[i], K));
    }
    return summarize("d_image", std::move(rows));
}

MeasureStats eval_bridge(const std::vector<LabelField> &segs, const std::vector<DeformationMap> &fwd_maps,
                         const std::vector<DeformationMap> &inv_maps) {
    check_counts(segs.size(), fwd_maps.size(), "eval_bridge");
    check_counts(segs.size(), inv_maps.size(), "eval_bridge");
    if (segs.size() < 2) throw InvalidInput("eval_bridge needs at least 2 segmentations");
    const std::uint32_t K = structure_count(segs);
    std::vector<std::vector<double>> rows;
    for (std::size_t j = 0; j < segs.size(); ++j) {
        std::vector<LabelField> carried;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            if (i != j) carried.push_back(warp_labels(segs[i], compose(fwd_maps[i], inv_maps[j])));
        }
        rows.push_back(dice_row(plurality_vote(carried), segs[j], K));
    }
    return summarize("d_bridge", std::move(rows));
}

std::size_t count_folds(const DeformationMap &map) {
    const ScalarField det = jacobian_determinant(map);
    std::size_t folds = 0;
    for (std::size_t i = 0; i < det.size(); ++i) {
        if (map.shape().is_interior(i, 1) && det[i] < 0.0) ++folds;
    }
    return folds;
}

EvalReport evaluate(const std::vector<LabelField> &segs, const std::vector<DeformationMap> &fwd_maps,
                    const std::vector<DeformationMap> &inv_maps, const EvalOptions &options) {
    EvalReport r;
    r.d_atlas = eval_atlas_space(segs, fwd_maps, false);
    if (options.pairwise_atlas) r.d_atlas_pairwise = eval_atlas_space(segs, fwd_maps, true);
    if (options.atlas_seg) {
        r.d_image = eval_image_space(*options.atlas_seg, segs, inv_maps);
    } else if (options.vote_atlas_seg) {
        std::vector<LabelField> warped;
        for (std::size_t i = 0; i < segs.size(); ++i) warped.push_back(warp_labels(segs[i], fwd_maps[i]));
        r.d_image = eval_image_space(plurality_vote(warped), segs, inv_maps);
        r.atlas_seg_from_vote = true;
    }
    r.d_bridge = eval_bridge(segs, fwd_maps, inv_maps);
    std::vector<double> folds;
    for (const auto &m : inv_maps) folds.push_back(static_cast<double>(count_folds(m)));
    mean_std(folds, r.folds_mean, r.folds_std);
    return r;
}

} // namespace svfatlas
