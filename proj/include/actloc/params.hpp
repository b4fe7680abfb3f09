#ifndef ACTLOC_PARAMS_HPP
#define ACTLOC_PARAMS_HPP

#include <array>
#include <iosfwd>
#include <string>

#include "actloc/types.hpp"

namespace actloc {

// Every CPT and constant of the model. Conventions:
//   * the child variable is always the innermost index,
//   * rows (fixed parent configuration) sum to 1,
//   * structural zeros (forbidden state/environment pairs) are exactly 0.
struct ModelParams {
    // p(e_k | e_{k-1})
    std::array<std::array<double, kNumEnvironments>, kNumEnvironments> env_trans{};

    // p(s_k | s_{k-1}, e_k), indexed [e_k][s_{k-1}][s_k]
    std::array<std::array<std::array<double, kNumMotionStates>, kNumMotionStates>,
               kNumEnvironments>
        state_trans{};

    // p(heading offset | s_k), offsets -4..+3 stored at index offset+4
    std::array<std::array<double, kNumHeadingBins>, kNumMotionStates> heading_trans{};

    // p(t_k | t_{k-1}, group(s_k))
    std::array<std::array<std::array<double, kNumSpeedBins>, kNumSpeedBins>,
               kNumSpeedGroups>
        speed_trans{};

    // Per-classifier observation tables, [classifier][conditioning][bin-1]
    std::array<std::array<std::array<double, kNumQuantBins>, kNumMotionStates>,
               kNumMotionStates>
        obs_state{};
    std::array<std::array<std::array<double, kNumQuantBins>, kNumEnvironments>,
               kNumEnvironments>
        obs_env{};

    // p(c=1 | env class, map class); [env_map_class][map_class]
    std::array<std::array<double, 2>, 2> map_cpt{{{0.6, 0.4}, {0.15, 0.85}}};

    double gps_exponent = 0.5;

    std::array<double, kNumMotionStates> init_state{};
    std::array<double, kNumEnvironments> init_env{};
    std::array<double, kNumSpeedBins> init_speed{};
    std::array<double, kNumHeadingBins> init_heading{};
    // The initial location distribution is uniform over world cells and
    // carries no free parameters.
};

// True iff state_trans[e][s_prev][s] is pinned to zero by the hard
// state/environment constraints.
inline bool is_structural_zero(Environment e, MotionState s) { return !is_admissible(s, e); }

// All rows sum to 1 within row_tol, no negatives, structural zeros exact.
// Throws ValidationError naming the offending CPT and row.
void validate_params(const ModelParams& p, double row_tol = 1e-9);

// Uniform rows over admissible children (zero jitter reference point).
ModelParams make_uniform_params();

std::string serialize_params(const ModelParams& p);
ModelParams parse_params(const std::string& text);  // ParseError / ValidationError

void save_params(const ModelParams& p, const std::string& path);
ModelParams load_params(const std::string& path);

}  // namespace actloc

#endif
