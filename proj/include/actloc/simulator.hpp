#ifndef ACTLOC_SIMULATOR_HPP
#define ACTLOC_SIMULATOR_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "actloc/types.hpp"

namespace actloc {

// Explicit activity script step; validated against the hard constraints.
struct ScriptStep {
    MotionState state = MotionState::Walking;
    Environment env = Environment::Outdoors;
    int duration_frames = 120;
};

struct SimConfig {
    std::uint64_t seed = 1;

    int world_width_cells = 64;
    int world_height_cells = 64;
    int building_count = 5;
    int building_min_m = 8;
    int building_max_m = 16;

    // GPS model
    int gps_period_frames = 4;  // 1 Hz against the 4 Hz sensor stream
    double hdop_min = 1.5;
    double hdop_max = 3.5;
    double gps_noise_scale = 1.0;  // multiplies the sqrt(2*hdop) noise std
    double outlier_rate_near = 0.15;
    double outlier_rate_base = 0.01;
    double outlier_near_dist_m = 10.0;
    double outlier_offset_min_m = 20.0;
    double outlier_offset_max_m = 50.0;
    double indoor_dropout = 1.0;

    // Classifier model: a perceived class is drawn from the confusion row
    // of the true class, then per-class probabilities are sampled
    // concentrated around high/low targets and quantized.
    std::array<std::array<double, kNumMotionStates>, kNumMotionStates> state_confusion{};
    std::array<std::array<double, kNumEnvironments>, kNumEnvironments> env_confusion{};
    double classifier_concentration = 30.0;
    double perceived_high = 0.85;
    double perceived_low = 0.05;

    // Default random script policy; ignored when `script` is set.
    int min_segment_frames = 120;  // 30 s at 4 Hz
    int max_segment_frames = 480;  // 120 s
    std::optional<std::vector<ScriptStep>> script;

    void validate() const;
};

// Confusion matrices with the given diagonal and uniform off-diagonal mass.
void set_uniform_confusion(SimConfig& cfg, double state_diag, double env_diag);

struct SimTrace {
    std::vector<JointState> truth;
    std::vector<LabelSpan> spans;  // runs of constant (state, env), covering the trace
    std::vector<Frame> frames;
};

// Deterministic per seed. Boxes have integer-meter corners and at least
// 2 m of corridor between them.
BuildingMap generate_world(const SimConfig& config);

SimTrace generate_trace(const BuildingMap& world, const SimConfig& config,
                        int length_frames);

}  // namespace actloc

#endif
