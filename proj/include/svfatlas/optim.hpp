#pragma once

// Velocity-field gradients (Euler-Lagrange quadrature and a finite-difference
// oracle), parameter updates and the alternating atlas-building driver.
//
// Energy over a pair set P (each unordered pair listed once):
//   E = sum_{(i,j) in P} [ w (sim_i + sim_j) + lambda (Reg(v_i) + Reg(v_j))
//                          + gamma1 L_atlas(i,j) + gamma2 L_image(i,j) ]
// with sim_i = sim(atlas o Phi^i_{1,0}, I_i) and Reg(v) the mean interior
// squared Frobenius norm of the component Hessians of v.

#include <cstdint>
#include <functional>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "svfatlas/atlas.hpp"
#include "svfatlas/grid.hpp"
#include "svfatlas/losses.hpp"
#include "svfatlas/svf.hpp"

namespace svfatlas {

enum class UpdateMethod { steepest_descent, adaptive_moments };
enum class PairSampling { all_pairs, random_pairs_per_epoch };

UpdateMethod parse_update_method(std::string_view name);
std::string_view to_string(UpdateMethod m);
PairSampling parse_pair_sampling(std::string_view name);
std::string_view to_string(PairSampling p);

struct OptimConfig {
    double step_size = 0.05;
    UpdateMethod method = UpdateMethod::adaptive_moments;
    int epochs = 200;
    int atlas_refresh_period = 10;
    int quadrature_samples = 8;
    int squaring_steps = kDefaultSquaringSteps;
    std::uint64_t seed = 17;
    LossWeights weights{};
    Similarity similarity = Similarity::mse;
    PairSampling pair_sampling = PairSampling::random_pairs_per_epoch;

    AtlasMode atlas_mode = AtlasMode::closed_form_forward;
    double atlas_step = 0.1;     // learned mode only; fraction of the MSE Newton step
    bool reset_momentum = false; // clear Adam moments at each closed-form refresh
    int threads = 0;             // 0 = hardware concurrency
    bool log_wall_time = false;  // wall_time column is 0 unless enabled

    // Throws InvalidInput on counts < 1 or non-finite / non-positive steps,
    // ConfigError on NCC combined with a closed-form atlas.
    void validate() const;
};

// Loss terms, already multiplied by their weights.
struct LossBreakdown {
    double total = 0.0;
    double sim = 0.0;
    double reg = 0.0;
    double pair_atlas = 0.0;
    double pair_image = 0.0;
};

struct GradientReport {
    std::vector<VectorField> gradients;
    LossBreakdown losses;
    double max_norm = 0.0;  // largest per-voxel gradient vector norm
};

using PairList = std::vector<std::pair<std::size_t, std::size_t>>;

PairList all_pairs(std::size_t n);
// Disjoint random pairing from a shuffled order; with odd n the last image is
// paired with the first of the shuffle.
PairList random_pairs(std::size_t n, std::mt19937_64 &rng);

// Reg(v): mean over interior voxels of sum_k ||H_k(v)||_F^2.
double regularizer_energy(const VectorField &v);
// Exact gradient of regularizer_energy (discrete biharmonic, x2, mean
// normalised). Throws InvalidInput if an extent is < 3.
VectorField regularizer_gradient(const VectorField &v);

// Gradient of w sim(atlas o Phi_{1,0}, image) + lambda Reg(v) by midpoint
// quadrature over t = (m - 1/2)/T.
VectorField el_gradient_vanilla(const ScalarField &atlas, const ScalarField &image, const VectorField &v, int T,
                                int K, const LossWeights &weights = {}, Similarity kind = Similarity::mse);

// Gradients of the pair-set energy for every velocity. With all_pairs this
// is the full groupwise energy; the data term of image i is weighted by the
// number of pairs it takes part in.
GradientReport el_gradient_pairwise(const std::vector<ScalarField> &images, const ScalarField &atlas,
                                    const std::vector<VectorField> &velocities, const LossWeights &weights, int T,
                                    int K, Similarity kind = Similarity::mse, const PairList *pairs = nullptr,
                                    int threads = 1);

// Pair-set energy evaluated directly from the maps (no gradients).
LossBreakdown pairwise_energy(const std::vector<ScalarField> &images, const ScalarField &atlas,
                              const std::vector<VectorField> &velocities, const LossWeights &weights, int K,
                              Similarity kind = Similarity::mse, const PairList *pairs = nullptr);

// Central differences of `energy` in every component of v.
VectorField fd_gradient(const std::function<double(const VectorField &)> &energy, const VectorField &v,
                        double epsilon);

struct AdamState {
    VectorField m, s;
    std::int64_t t = 0;
    void reset() { *this = AdamState{}; }
};

// v - step * grad (steepest descent) or one Adam step. Throws NumericFailure
// on a non-finite gradient.
VectorField update_velocity(const VectorField &v, const VectorField &grad, const OptimConfig &config,
                            AdamState &state);

struct EpochLog {
    int epoch = 0;
    double total = 0.0, sim = 0.0, reg = 0.0, pair_atlas = 0.0, pair_image = 0.0;
    double folds = 0.0;      // mean interior fold count per Phi_{1,0}
    double wall_time = 0.0;  // seconds since the start of the run
    double reg_map = 0.0;    // lambda * sum over pairs of bending(Phi_{1,0})
};

struct BuildResult {
    AtlasState state;
    std::vector<EpochLog> log;
};

// Called after every atlas update with the 1-based epoch number.
using AtlasCallback = std::function<void(int epoch, const ScalarField &atlas)>;

BuildResult run_atlas_build(const Cohort &cohort, const OptimConfig &config, const AtlasCallback &on_atlas = {});

struct RegistrationResult {
    VectorField velocity;
    DeformationMap fwd, inv;
    std::vector<EpochLog> log;
};

// Single-image registration against a frozen atlas (vanilla energy).
RegistrationResult register_image(const ScalarField &atlas, const ScalarField &image, const OptimConfig &config);

} // namespace svfatlas
