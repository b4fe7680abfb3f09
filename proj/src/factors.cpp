#include "actloc/factors.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "actloc/logmath.hpp"

namespace actloc {

double gps_log_likelihood(const Frame& frame, GridLocation l, const ModelParams& p) {
    if (!frame.gps.has_value()) return 0.0;  // I_k = 0: disconnected
    const GpsFix& g = *frame.gps;
    if (!(g.hdop > 0.0)) throw std::invalid_argument("gps_log_likelihood: hdop must be > 0");
    if (g.hdop > kHdopGate) return 0.0;  // o_k = 0: treated as outlier
    const double sigma2 = 2.0 * g.hdop;
    const double dx = g.x_m - cell_center_x(l);
    const double dy = g.y_m - cell_center_y(l);
    const double log_norm = -std::log(2.0 * std::numbers::pi * sigma2);
    const double quad = -(dx * dx + dy * dy) / (2.0 * sigma2);
    return p.gps_exponent * (log_norm + quad);
}

double msb_log_likelihood(const MsbObservation& obs, MotionState s, Environment e,
                          const ModelParams& p) {
    double sum = 0.0;
    const int si = static_cast<int>(s);
    const int ei = static_cast<int>(e);
    for (int i = 0; i < kNumMotionStates; ++i)
        sum += safe_log(p.obs_state[i][si][obs.state_bins[i] - 1]);
    for (int i = 0; i < kNumEnvironments; ++i)
        sum += safe_log(p.obs_env[i][ei][obs.env_bins[i] - 1]);
    return sum;
}

double map_constraint_log(Environment e, GridLocation l, const BuildingMap& map,
                          const ModelParams& p) {
    const int ec = env_map_class(e);
    const int mc = static_cast<int>(map_class(l, map));
    return safe_log(p.map_cpt[ec][mc]);
}

LocationSupport location_transition_support(GridLocation l, PolarVelocity v,
                                            const BuildingMap& map) {
    if (!map.in_bounds(l))
        throw std::invalid_argument("location_transition_support: location out of bounds");

    double dirx, diry;
    heading_direction(v.heading_bin, &dirx, &diry);
    const double step = kSpeedBinsMps[v.speed_bin] * kFrameDt;
    // Endpoint in cell-index coordinates: cell i's center sits at index i.
    const double ux = l.x + step * dirx;
    const double uy = l.y + step * diry;
    const int ix = static_cast<int>(std::floor(ux));
    const int iy = static_cast<int>(std::floor(uy));
    const double fx = ux - ix;
    const double fy = uy - iy;

    const double wx[2] = {1.0 - fx, fx};
    const double wy[2] = {1.0 - fy, fy};

    LocationSupport out;
    double in_sum = 0.0;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            const double w = wx[a] * wy[b];
            if (w == 0.0) continue;
            GridLocation c{ix + a, iy + b};
            if (!map.in_bounds(c)) continue;
            out.cells[out.count++] = CellWeight{c, w};
            in_sum += w;
        }
    }
    if (out.count == 0) return out;
    for (int i = 0; i < out.count; ++i) out.cells[i].weight /= in_sum;
    return out;
}

double transition_log(const JointState& prev, const JointState& next,
                      const ModelParams& p, const BuildingMap& map) {
    const int e0 = static_cast<int>(prev.env);
    const int e1 = static_cast<int>(next.env);
    const int s0 = static_cast<int>(prev.state);
    const int s1 = static_cast<int>(next.state);

    double score = safe_log(p.env_trans[e0][e1]);
    score += safe_log(p.state_trans[e1][s0][s1]);
    score += safe_log(
        p.heading_trans[s1][heading_offset_index(prev.vel.heading_bin, next.vel.heading_bin)]);
    score += safe_log(p.speed_trans[speed_group(next.state)][prev.vel.speed_bin]
                                   [next.vel.speed_bin]);
    if (score == kNegInf) return kNegInf;

    const LocationSupport sup = location_transition_support(prev.loc, prev.vel, map);
    for (int i = 0; i < sup.count; ++i)
        if (sup.cells[i].cell == next.loc) return score + std::log(sup.cells[i].weight);
    return kNegInf;
}

double initial_log(const JointState& state, const Frame& first, const ModelParams& p,
                   const BuildingMap& map, FactorMask mask) {
    if (!is_admissible(state)) return kNegInf;
    double score = safe_log(p.init_state[static_cast<int>(state.state)]);
    score += safe_log(p.init_env[static_cast<int>(state.env)]);
    score += safe_log(p.init_speed[state.vel.speed_bin]);
    score += safe_log(p.init_heading[state.vel.heading_bin]);
    score += -std::log(static_cast<double>(map.width_cells) * map.height_cells);
    score += msb_log_likelihood(first.msb, state.state, state.env, p);
    if (mask.gps) score += gps_log_likelihood(first, state.loc, p);
    if (mask.map) score += map_constraint_log(state.env, state.loc, map, p);
    return score;
}

}  // namespace actloc
