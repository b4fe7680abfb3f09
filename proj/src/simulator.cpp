#include "actloc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "actloc/errors.hpp"
#include "actloc/factors.hpp"
#include "actloc/features.hpp"

namespace actloc {

void SimConfig::validate() const {
    if (world_width_cells < 1 || world_height_cells < 1)
        throw ValidationError("sim: world must be at least 1x1 cells");
    if (building_count < 0) throw ValidationError("sim: building_count must be >= 0");
    if (building_min_m < 1 || building_max_m < building_min_m)
        throw ValidationError("sim: bad building size range");
    if (gps_period_frames < 1) throw ValidationError("sim: gps_period_frames must be >= 1");
    if (!(hdop_min > 0.0) || hdop_max < hdop_min)
        throw ValidationError("sim: bad hdop range");
    if (gps_noise_scale < 0.0) throw ValidationError("sim: gps_noise_scale must be >= 0");
    for (double r : {outlier_rate_near, outlier_rate_base, indoor_dropout})
        if (r < 0.0 || r > 1.0)
            throw ValidationError("sim: rates must lie in [0, 1]");
    if (!(classifier_concentration > 0.0))
        throw ValidationError("sim: classifier_concentration must be > 0");
    auto check_confusion = [](const auto& m, const char* name) {
        for (const auto& row : m) {
            double sum = 0.0;
            for (double v : row) {
                if (v < 0.0) throw ValidationError(std::string("sim: negative entry in ") + name);
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw ValidationError(std::string("sim: ") + name + " row does not sum to 1");
        }
    };
    check_confusion(state_confusion, "state_confusion");
    check_confusion(env_confusion, "env_confusion");
    if (min_segment_frames < 1 || max_segment_frames < min_segment_frames)
        throw ValidationError("sim: bad segment length range");
    if (script.has_value()) {
        if (script->empty()) throw InvalidScriptError("sim: empty script");
        for (const ScriptStep& st : *script) {
            if (st.duration_frames < 1)
                throw InvalidScriptError("sim: script step with non-positive duration");
            if (!is_admissible(st.state, st.env)) {
                std::ostringstream os;
                os << "sim: script requests forbidden pair (" << to_string(st.state) << ", "
                   << to_string(st.env) << ")";
                throw InvalidScriptError(os.str());
            }
        }
    }
}

void set_uniform_confusion(SimConfig& cfg, double state_diag, double env_diag) {
    for (int i = 0; i < kNumMotionStates; ++i)
        for (int j = 0; j < kNumMotionStates; ++j)
            cfg.state_confusion[i][j] =
                i == j ? state_diag : (1.0 - state_diag) / (kNumMotionStates - 1);
    for (int i = 0; i < kNumEnvironments; ++i)
        for (int j = 0; j < kNumEnvironments; ++j)
            cfg.env_confusion[i][j] =
                i == j ? env_diag : (1.0 - env_diag) / (kNumEnvironments - 1);
}

BuildingMap generate_world(const SimConfig& config) {
    config.validate();
    BuildingMap map;
    map.width_cells = config.world_width_cells;
    map.height_cells = config.world_height_cells;

    std::mt19937_64 rng(config.seed);
    const int W = map.width_cells;
    const int H = map.height_cells;

    for (int b = 0; b < config.building_count; ++b) {
        bool placed = false;
        for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
            std::uniform_int_distribution<int> ws(config.building_min_m, config.building_max_m);
            const int bw = ws(rng);
            const int bh = ws(rng);
            if (bw + 2 >= W || bh + 2 >= H) continue;
            std::uniform_int_distribution<int> xs(1, W - bw - 1);
            std::uniform_int_distribution<int> ys(1, H - bh - 1);
            const int x0 = xs(rng);
            const int y0 = ys(rng);
            Box cand{static_cast<double>(x0), static_cast<double>(y0),
                     static_cast<double>(x0 + bw), static_cast<double>(y0 + bh)};
            bool ok = true;
            for (const Box& other : map.buildings) {
                // Expanding by 2 m enforces the corridor width.
                if (cand.min_x < other.max_x + 2 && cand.max_x > other.min_x - 2 &&
                    cand.min_y < other.max_y + 2 && cand.max_y > other.min_y - 2) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                map.buildings.push_back(cand);
                placed = true;
            }
        }
        if (!placed) {
            std::ostringstream os;
            os << "could not place building " << b << " of " << config.building_count
               << " in a " << W << "x" << H << " world";
            throw PlacementError(os.str());
        }
    }
    map.validate();
    return map;
}

namespace {

double point_box_distance(double x, double y, const Box& b) {
    const double dx = std::max({b.min_x - x, 0.0, x - b.max_x});
    const double dy = std::max({b.min_y - y, 0.0, y - b.max_y});
    return std::hypot(dx, dy);
}

bool near_any_building(double x, double y, const BuildingMap& map, double dist) {
    for (const Box& b : map.buildings)
        if (point_box_distance(x, y, b) <= dist) return true;
    return false;
}

bool inside_any_building(double x, double y, const BuildingMap& map) {
    for (const Box& b : map.buildings)
        if (b.contains(x, y)) return true;
    return false;
}

int nearest_sector(double dx, double dy) {
    if (dx == 0.0 && dy == 0.0) return 0;
    const double ang = std::atan2(dy, dx);
    int sec = static_cast<int>(std::lround(ang / (std::numbers::pi / 4.0)));
    return (sec % 8 + 8) % 8;
}

int step_heading_toward(int h, int desired) {
    const int off = heading_offset(h, desired);
    if (off == 0) return h;
    return (h + (off > 0 ? 1 : -1) + 8) % 8;
}

int step_speed_toward(int t, int target) {
    if (t == target) return t;
    return t + (target > t ? 1 : -1);
}

// Target speed bins per motion state (indices into kSpeedBinsMps).
int target_speed_bin(MotionState s, Environment e) {
    if (e == Environment::Indoors) return 0;  // indoor locations stay at the entry cell
    switch (s) {
        case MotionState::Stationary: return 0;
        case MotionState::Walking: return 3;       // 1.5 m/s
        case MotionState::Running: return 5;       // 4.0 m/s
        case MotionState::DrivingVehicle: return 6;  // 7.0 m/s
        case MotionState::UpDownStairs: return 0;
    }
    return 0;
}

struct Agent {
    GridLocation cell;
    PolarVelocity vel;
    MotionState s = MotionState::Stationary;
    Environment e = Environment::Outdoors;
};

class Policy {
public:
    Policy(const BuildingMap& world, const SimConfig& cfg, std::mt19937_64& rng)
        : world_(world), cfg_(cfg), rng_(rng) {
        if (cfg.script.has_value()) {
            scripted_ = true;
            script_ = *cfg.script;
        }
    }

    // Desired (state, env, target speed bin, desired heading) for frame k.
    void step(const Agent& a, MotionState* s, Environment* e, int* tgt_speed,
              int* desired_h) {
        if (scripted_) {
            script_step(a, s, e);
        } else {
            policy_step(a, s, e);
        }
        *tgt_speed = target_speed_bin(*s, *e);
        *desired_h = choose_heading(a, *s, *e);
    }

private:
    void script_step(const Agent&, MotionState* s, Environment* e) {
        if (left_ <= 0) {
            const ScriptStep& st = script_[script_idx_ % script_.size()];
            ++script_idx_;
            cur_s_ = st.state;
            cur_e_ = st.env;
            left_ = st.duration_frames;
        }
        --left_;
        *s = cur_s_;
        *e = cur_e_;
    }

    enum class Phase { WalkOut, Approach, Indoor, Exit, ToVehicle, Board, Drive, Park, RunOut };

    void policy_step(const Agent& a, MotionState* s, Environment* e) {
        if (left_ <= 0) next_phase(a);

        switch (phase_) {
            case Phase::WalkOut:
            case Phase::ToVehicle:
                cur_s_ = MotionState::Walking;
                cur_e_ = Environment::Outdoors;
                break;
            case Phase::RunOut:
                cur_s_ = MotionState::Running;
                cur_e_ = Environment::Outdoors;
                break;
            case Phase::Approach: {
                cur_s_ = MotionState::Walking;
                cur_e_ = Environment::Outdoors;
                // Entered the target box: begin the indoor stay.
                if (target_box_ &&
                    target_box_->contains(cell_center_x(a.cell), cell_center_y(a.cell))) {
                    phase_ = Phase::Indoor;
                    std::uniform_int_distribution<int> d(cfg_.min_segment_frames,
                                                         cfg_.max_segment_frames);
                    left_ = d(rng_);
                    indoor_left_ = 0;
                }
                break;
            }
            case Phase::Indoor: {
                cur_e_ = Environment::Indoors;
                if (indoor_left_ <= 0) {
                    // Mix of stationary, stairs and in-place walking.
                    std::uniform_int_distribution<int> pick(0, 2);
                    const int c = pick(rng_);
                    cur_s_ = c == 0 ? MotionState::Stationary
                                    : (c == 1 ? MotionState::UpDownStairs : MotionState::Walking);
                    std::uniform_int_distribution<int> d(40, 160);
                    indoor_left_ = d(rng_);
                }
                --indoor_left_;
                break;
            }
            case Phase::Exit:
                cur_s_ = MotionState::Walking;
                cur_e_ = Environment::Outdoors;
                if (!inside_any_building(cell_center_x(a.cell), cell_center_y(a.cell),
                                         world_) &&
                    !near_any_building(cell_center_x(a.cell), cell_center_y(a.cell), world_,
                                       3.0))
                    left_ = 0;  // done exiting
                break;
            case Phase::Board:
            case Phase::Park:
                cur_s_ = MotionState::Stationary;
                cur_e_ = Environment::Vehicle;
                break;
            case Phase::Drive:
                cur_s_ = MotionState::DrivingVehicle;
                cur_e_ = Environment::Vehicle;
                break;
        }
        --left_;
        *s = cur_s_;
        *e = cur_e_;
    }

    void next_phase(const Agent&) {
        std::uniform_int_distribution<int> dur(cfg_.min_segment_frames,
                                               cfg_.max_segment_frames);
        switch (phase_) {
            case Phase::WalkOut:
                if (!world_.buildings.empty() && visit_count_ == 0) {
                    begin_approach();
                    break;
                }
                if (!drove_) {
                    phase_ = Phase::ToVehicle;
                    left_ = 40;
                    break;
                }
                phase_ = Phase::RunOut;
                left_ = std::max(40, dur(rng_) / 2);
                break;
            case Phase::Approach:
                // Timed out before reaching the box; give up and walk on.
                phase_ = Phase::WalkOut;
                left_ = dur(rng_);
                target_box_ = std::nullopt;
                break;
            case Phase::Indoor:
                phase_ = Phase::Exit;
                left_ = 80;
                exit_from_ = target_box_;
                target_box_ = std::nullopt;
                ++visit_count_;
                break;
            case Phase::Exit:
                phase_ = Phase::WalkOut;
                left_ = dur(rng_);
                exit_from_ = std::nullopt;
                break;
            case Phase::ToVehicle:
                phase_ = Phase::Board;
                left_ = 12;
                break;
            case Phase::Board:
                phase_ = Phase::Drive;
                left_ = dur(rng_);
                drive_corner_ = 0;
                break;
            case Phase::Drive:
                phase_ = Phase::Park;
                left_ = 12;
                drove_ = true;
                break;
            case Phase::Park:
                phase_ = Phase::RunOut;
                left_ = std::max(40, dur(rng_) / 2);
                break;
            case Phase::RunOut:
                if (!world_.buildings.empty()) {
                    begin_approach();
                } else {
                    phase_ = Phase::WalkOut;
                    left_ = dur(rng_);
                }
                visit_count_ = 0;
                break;
        }
    }

    void begin_approach() {
        phase_ = Phase::Approach;
        left_ = 600;  // generous travel budget before giving up
        std::uniform_int_distribution<std::size_t> pick(0, world_.buildings.size() - 1);
        target_box_ = world_.buildings[pick(rng_)];
    }

    int choose_heading(const Agent& a, MotionState s, Environment e) {
        const double cx = cell_center_x(a.cell);
        const double cy = cell_center_y(a.cell);
        const double W = world_.width_cells * kCellMeters;
        const double H = world_.height_cells * kCellMeters;

        if (e == Environment::Indoors) return a.vel.heading_bin;

        int desired = a.vel.heading_bin;
        if (phase_ == Phase::Approach && target_box_ && !scripted_) {
            desired = nearest_sector(0.5 * (target_box_->min_x + target_box_->max_x) - cx,
                                     0.5 * (target_box_->min_y + target_box_->max_y) - cy);
        } else if (phase_ == Phase::Exit && exit_from_ && !scripted_) {
            desired = nearest_sector(cx - 0.5 * (exit_from_->min_x + exit_from_->max_x),
                                     cy - 0.5 * (exit_from_->min_y + exit_from_->max_y));
        } else if (phase_ == Phase::Drive && !scripted_) {
            const double m = 8.0;
            const double corners[4][2] = {{m, m}, {W - m, m}, {W - m, H - m}, {m, H - m}};
            const double tx = corners[drive_corner_ % 4][0];
            const double ty = corners[drive_corner_ % 4][1];
            if (std::hypot(tx - cx, ty - cy) < 5.0) ++drive_corner_;
            desired = nearest_sector(tx - cx, ty - cy);
        } else {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            if (u(rng_) < 0.05) {
                std::uniform_int_distribution<int> turn(0, 1);
                desired = (a.vel.heading_bin + (turn(rng_) ? 1 : 7)) % 8;
            }
        }

        // Boundary and building avoidance: probe a few frames ahead and
        // rotate until the endpoint is acceptable.
        const double speed = kSpeedBinsMps[std::max(
            a.vel.speed_bin, target_speed_bin(s, e))];
        const double look = std::max(3.0, 3.0 * speed * kFrameDt);
        const bool avoid_buildings =
            !scripted_ && phase_ != Phase::Approach && phase_ != Phase::Indoor &&
            phase_ != Phase::Exit;
        for (int attempt = 0; attempt < 8; ++attempt) {
            const int cand = (desired + ((attempt + 1) / 2) * ((attempt % 2) ? -1 : 1) + 16) % 8;
            double dx, dy;
            heading_direction(cand, &dx, &dy);
            const double ex = cx + look * dx;
            const double ey = cy + look * dy;
            const bool in_world = ex > 2.0 && ex < W - 2.0 && ey > 2.0 && ey < H - 2.0;
            const bool clear = !avoid_buildings || !inside_any_building(ex, ey, world_);
            if (in_world && clear) return cand;
        }
        // Fully boxed in: head for the world center.
        return nearest_sector(W / 2 - cx, H / 2 - cy);
    }

    const BuildingMap& world_;
    const SimConfig& cfg_;
    std::mt19937_64& rng_;

    bool scripted_ = false;
    std::vector<ScriptStep> script_;
    std::size_t script_idx_ = 0;

    Phase phase_ = Phase::WalkOut;
    int left_ = 0;
    int indoor_left_ = 0;
    MotionState cur_s_ = MotionState::Walking;
    Environment cur_e_ = Environment::Outdoors;
    std::optional<Box> target_box_;
    std::optional<Box> exit_from_;
    int drive_corner_ = 0;
    int visit_count_ = 0;
    bool drove_ = false;
};

double sample_beta(std::mt19937_64& rng, double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0);
    std::gamma_distribution<double> gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    if (x + y <= 0.0) return 0.5;
    return x / (x + y);
}

template <std::size_t N>
int sample_categorical(std::mt19937_64& rng, const std::array<double, N>& probs) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng);
    for (std::size_t i = 0; i < N; ++i) {
        r -= probs[i];
        if (r <= 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(N) - 1;
}

}  // namespace

SimTrace generate_trace(const BuildingMap& world, const SimConfig& config,
                        int length_frames) {
    config.validate();
    world.validate();
    if (length_frames < 1) throw std::invalid_argument("generate_trace: length must be >= 1");

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    SimTrace trace;
    trace.truth.reserve(length_frames);
    trace.frames.reserve(length_frames);

    Agent agent;
    {
        // Outdoor start away from the borders.
        std::uniform_int_distribution<int> xs(0, world.width_cells - 1);
        std::uniform_int_distribution<int> ys(0, world.height_cells - 1);
        for (int attempt = 0; attempt < 1000; ++attempt) {
            agent.cell = GridLocation{xs(rng), ys(rng)};
            const double cx = cell_center_x(agent.cell);
            const double cy = cell_center_y(agent.cell);
            const bool margin_ok = cx > 6 && cy > 6 && cx < world.width_cells - 6.0 &&
                                   cy < world.height_cells - 6.0;
            if ((margin_ok || world.width_cells <= 12 || world.height_cells <= 12) &&
                !inside_any_building(cx, cy, world))
                break;
        }
        std::uniform_int_distribution<int> hd(0, kNumHeadingBins - 1);
        agent.vel = PolarVelocity{0, hd(rng)};
        agent.s = MotionState::Stationary;
        agent.e = Environment::Outdoors;
    }

    Policy policy(world, config, rng);

    auto emit_observation = [&](const Agent& a, int k) {
        Frame f;
        f.index = k;

        const int strue = static_cast<int>(a.s);
        const int perceived_s = sample_categorical(rng, config.state_confusion[strue]);
        for (int j = 0; j < kNumMotionStates; ++j) {
            const double target = j == perceived_s ? config.perceived_high
                                                   : config.perceived_low;
            const double c = config.classifier_concentration;
            const double pj = sample_beta(rng, c * target + 0.5, c * (1.0 - target) + 0.5);
            f.msb.state_bins[j] = quantize(pj);
        }
        const int etrue = static_cast<int>(a.e);
        const int perceived_e = sample_categorical(rng, config.env_confusion[etrue]);
        for (int j = 0; j < kNumEnvironments; ++j) {
            const double target = j == perceived_e ? config.perceived_high
                                                   : config.perceived_low;
            const double c = config.classifier_concentration;
            const double pj = sample_beta(rng, c * target + 0.5, c * (1.0 - target) + 0.5);
            f.msb.env_bins[j] = quantize(pj);
        }

        if (k % config.gps_period_frames == 0) {
            if (a.e == Environment::Indoors && u01(rng) < config.indoor_dropout)
                return f;  // dropout indoors
            std::uniform_real_distribution<double> hd(config.hdop_min, config.hdop_max);
            const double hdop = hd(rng);
            const double std_m = std::sqrt(2.0 * hdop) * config.gps_noise_scale;
            std::normal_distribution<double> noise(0.0, 1.0);
            double x = cell_center_x(a.cell);
            double y = cell_center_y(a.cell);
            if (std_m > 0.0) {
                x += std_m * noise(rng);
                y += std_m * noise(rng);
            }
            const double rate = near_any_building(cell_center_x(a.cell),
                                                  cell_center_y(a.cell), world,
                                                  config.outlier_near_dist_m)
                                    ? config.outlier_rate_near
                                    : config.outlier_rate_base;
            if (u01(rng) < rate) {
                // Large offset without raising hdop.
                std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
                std::uniform_real_distribution<double> mag(config.outlier_offset_min_m,
                                                           config.outlier_offset_max_m);
                const double a2 = ang(rng);
                const double m = mag(rng);
                x += m * std::cos(a2);
                y += m * std::sin(a2);
            }
            x = std::clamp(x, 0.05, world.width_cells * kCellMeters - 0.05);
            y = std::clamp(y, 0.05, world.height_cells * kCellMeters - 0.05);
            f.gps = GpsFix{x, y, hdop};
        }
        return f;
    };

    for (int k = 0; k < length_frames; ++k) {
        if (k > 0) {
            // Model-consistent update order: the new location is drawn from
            // the bilinear kernel under the previous velocity.
            const LocationSupport sup =
                location_transition_support(agent.cell, agent.vel, world);
            double r = u01(rng);
            GridLocation next = sup.cells[sup.count - 1].cell;
            for (int i = 0; i < sup.count; ++i) {
                r -= sup.cells[i].weight;
                if (r <= 0.0) {
                    next = sup.cells[i].cell;
                    break;
                }
            }
            agent.cell = next;

            MotionState s;
            Environment e;
            int tgt_speed, desired_h;
            policy.step(agent, &s, &e, &tgt_speed, &desired_h);
            agent.s = s;
            agent.e = e;
            agent.vel.heading_bin = step_heading_toward(agent.vel.heading_bin, desired_h);
            agent.vel.speed_bin = step_speed_toward(agent.vel.speed_bin, tgt_speed);
            // Never record a velocity whose kernel has left the world.
            while (agent.vel.speed_bin > 0 &&
                   location_transition_support(agent.cell, agent.vel, world).count == 0)
                --agent.vel.speed_bin;
        } else {
            MotionState s;
            Environment e;
            int tgt_speed, desired_h;
            policy.step(agent, &s, &e, &tgt_speed, &desired_h);
            agent.s = s;
            agent.e = e;
            agent.vel.heading_bin = desired_h;
        }

        trace.truth.push_back(JointState{agent.cell, agent.vel, agent.s, agent.e});
        trace.frames.push_back(emit_observation(agent, k));
    }

    // Label spans: maximal runs of constant (state, environment).
    for (int k = 0; k < length_frames; ++k) {
        if (!trace.spans.empty() && trace.spans.back().state == trace.truth[k].state &&
            trace.spans.back().env == trace.truth[k].env) {
            trace.spans.back().end = k;
        } else {
            trace.spans.push_back(
                LabelSpan{k, k, trace.truth[k].state, trace.truth[k].env});
        }
    }
    return trace;
}

}  // namespace actloc
