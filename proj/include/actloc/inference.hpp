#ifndef ACTLOC_INFERENCE_HPP
#define ACTLOC_INFERENCE_HPP

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "actloc/factors.hpp"
#include "actloc/params.hpp"
#include "actloc/types.hpp"
#include "actloc/virtual_evidence.hpp"

namespace actloc {

// Beam pruning: drop states more than log_threshold below the frame's
// best score, then cap at max_states with deterministic tie-breaking.
struct BeamConfig {
    int max_states = 10000;
    double log_threshold = 12.0;
    bool exact_mode = false;  // disables all pruning

    void validate() const;  // throws ValidationError
};

// Sparse posterior over joint states for one frame, sorted by state key.
struct FramePosterior {
    std::vector<std::pair<JointState, double>> probs;
    double log_normalizer = 0.0;
};

struct ForwardResult {
    std::vector<FramePosterior> posteriors;
    double log_likelihood = 0.0;  // exact in exact_mode, lower bound otherwise
};

struct ViterbiResult {
    std::vector<JointState> path;
    double log_score = 0.0;
};

// Pairwise smoothed posterior over retained transitions k -> k+1.
struct TransitionPosterior {
    std::vector<std::tuple<JointState, JointState, double>> probs;
};

struct SmoothResult {
    std::vector<FramePosterior> marginals;
    std::vector<TransitionPosterior> pairwise;  // size frames-1
    double log_likelihood = 0.0;
};

// Streaming consumer of smoothed posteriors; lets EM accumulate expected
// counts without materializing per-frame transition lists.
class PosteriorSink {
public:
    virtual ~PosteriorSink() = default;
    virtual void frame_mass(int k, std::uint64_t state_key, double prob) = 0;
    virtual void transition_mass(int k, std::uint64_t from_key, std::uint64_t to_key,
                                 double prob) = 0;
};

ForwardResult forward_filter(std::span<const Frame> frames, const ModelParams& params,
                             const BuildingMap& map, const BeamConfig& beam,
                             const VeSchedule* ve = nullptr, FactorMask mask = {});

ViterbiResult viterbi_decode(std::span<const Frame> frames, const ModelParams& params,
                             const BuildingMap& map, const BeamConfig& beam,
                             const VeSchedule* ve = nullptr, FactorMask mask = {});

SmoothResult forward_backward(std::span<const Frame> frames, const ModelParams& params,
                              const BuildingMap& map, const BeamConfig& beam,
                              const VeSchedule* ve = nullptr, FactorMask mask = {});

// Forward-backward streaming into `sink`; returns the log-likelihood.
double forward_backward_visit(std::span<const Frame> frames, const ModelParams& params,
                              const BuildingMap& map, const BeamConfig& beam,
                              const VeSchedule* ve, FactorMask mask, PosteriorSink& sink);

// Standalone beam pruning of a scored sparse map (log scores). Drops
// entries below best - log_threshold, then keeps the max_states best by
// (score desc, state key asc). The best entry always survives.
std::vector<std::pair<JointState, double>> prune(
    const std::vector<std::pair<JointState, double>>& scored, const BeamConfig& beam);

}  // namespace actloc

#endif
