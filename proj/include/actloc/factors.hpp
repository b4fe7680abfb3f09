#ifndef ACTLOC_FACTORS_HPP
#define ACTLOC_FACTORS_HPP

#include <array>

#include "actloc/params.hpp"
#include "actloc/types.hpp"

namespace actloc {

// Which observation factors participate in scoring. The sensor-board
// factor is always on; GPS and the map constraint can be ablated.
struct FactorMask {
    bool gps = true;
    bool map = true;
};

// log p(g_k | l_k, h_k) with the switching parents folded in: returns 0
// when no fix is present or the fix fails the hdop gate. Otherwise the
// per-axis independent Gaussian at the cell center with sigma^2 = 2*hdop,
// raised to gps_exponent. Throws std::invalid_argument for hdop <= 0.
double gps_log_likelihood(const Frame& frame, GridLocation l, const ModelParams& p);

// Naive-Bayes sensor-board likelihood: sum of the eight per-classifier
// log CPT lookups.
double msb_log_likelihood(const MsbObservation& obs, MotionState s, Environment e,
                          const ModelParams& p);

// log p(c=1 | e, m(l)): the soft map-consistency factor.
double map_constraint_log(Environment e, GridLocation l, const BuildingMap& map,
                          const ModelParams& p);

// Probability mass over the <=4 cells bracketing the displaced endpoint.
struct CellWeight {
    GridLocation cell;
    double weight = 0.0;
};

struct LocationSupport {
    std::array<CellWeight, 4> cells;
    int count = 0;  // 0 means every bracketing cell is out of bounds
};

// Bilinear split of center(l) + speed*dt*(cos h, sin h) over the grid,
// renormalized over in-bounds cells. Weights sum to 1 unless empty.
LocationSupport location_transition_support(GridLocation l, PolarVelocity v,
                                            const BuildingMap& map);

// Full joint transition kernel:
//   log p(e'|e) + log p(s'|s,e') + log p(dh|s') + log p(t'|t,group(s'))
//   + log p(l'|l,v).
// -inf when the next state is unreachable or a structural zero is hit.
double transition_log(const JointState& prev, const JointState& next,
                      const ModelParams& p, const BuildingMap& map);

// Frame-0 score: initial distributions plus all observation factors.
double initial_log(const JointState& state, const Frame& first, const ModelParams& p,
                   const BuildingMap& map, FactorMask mask = {});

}  // namespace actloc

#endif
