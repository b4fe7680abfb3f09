#ifndef ACTLOC_LEARNING_HPP
#define ACTLOC_LEARNING_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "actloc/inference.hpp"
#include "actloc/params.hpp"
#include "actloc/types.hpp"
#include "actloc/virtual_evidence.hpp"

namespace actloc {

struct EmConfig {
    int max_iters = 50;
    double rel_ll_tolerance = 1e-5;
    double dirichlet_smoothing = 0.1;  // pseudo-count per admissible CPT cell
    BeamConfig beam;
    FactorMask mask;
    // When the motion chain is collapsed (degenerate velocity on a 1-cell
    // world) the speed/heading CPTs and their initials are frozen so the
    // collapse stays exact across iterations.
    bool update_motion_cpts = true;
    int threads = 0;  // 0 = hardware concurrency

    void validate() const;
};

struct TrainTrace {
    std::vector<Frame> frames;
    std::optional<VeSchedule> ve;
};

struct EmResult {
    ModelParams params;
    // Log-likelihood of the parameters entering each iteration's E-step;
    // entry i is the likelihood of the params after i M-steps.
    std::vector<double> ll_per_iter;
};

// Expected-count EM over partially labeled traces. Structural zeros stay
// exactly zero; CPT rows with no expected mass keep their previous values.
EmResult em_train(std::span<const TrainTrace> traces, const ModelParams& init,
                  const BuildingMap& map, const EmConfig& config);

// Uniform rows over admissible children plus seeded jitter (relative
// magnitude `jitter`), renormalized. Deterministic per seed.
ModelParams initialize_params(std::uint64_t seed, double jitter = 0.01);

// Pins the velocity chain: point-mass initial speed/heading and identity
// speed/heading CPTs. Used with a 1-cell world, this collapses the model
// to the joint (state, environment) chain exactly.
void collapse_motion_params(ModelParams& p);

// Keep the central ceil(L * (100 - percent) / 100) frames of each span
// (never fewer than one frame); percent = 100 keeps the single middle
// frame, the earlier one for even lengths.
std::vector<LabelSpan> drop_labels(const std::vector<LabelSpan>& spans, int percent);

// Keep exactly one uniformly chosen frame per span.
std::vector<LabelSpan> drop_labels_random_single(const std::vector<LabelSpan>& spans,
                                                 std::uint64_t seed);

// Annotation file: JSON list of {start, end, state, env}.
std::vector<LabelSpan> load_spans(const std::string& path);
void save_spans(const std::vector<LabelSpan>& spans, const std::string& path);

}  // namespace actloc

#endif
