#ifndef ACTLOC_TYPES_HPP
#define ACTLOC_TYPES_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace actloc {

// ---------------------------------------------------------------------------
// State spaces
// ---------------------------------------------------------------------------

enum class MotionState : std::uint8_t {
    Stationary = 0,
    Walking = 1,
    Running = 2,
    DrivingVehicle = 3,
    UpDownStairs = 4,
};

enum class Environment : std::uint8_t {
    Indoors = 0,
    Outdoors = 1,
    Vehicle = 2,
};

inline constexpr int kNumMotionStates = 5;
inline constexpr int kNumEnvironments = 3;
inline constexpr int kNumSePairs = kNumMotionStates * kNumEnvironments;

const char* to_string(MotionState s);
const char* to_string(Environment e);
MotionState motion_state_from_string(std::string_view name);  // throws ParseError
Environment environment_from_string(std::string_view name);   // throws ParseError

// Hard constraints: driving is impossible indoors/outdoors, stairs are
// impossible in a vehicle.
inline bool is_admissible(MotionState s, Environment e) {
    if (s == MotionState::DrivingVehicle && e != Environment::Vehicle) return false;
    if (s == MotionState::UpDownStairs && e == Environment::Vehicle) return false;
    return true;
}

inline int se_index(MotionState s, Environment e) {
    return static_cast<int>(s) * kNumEnvironments + static_cast<int>(e);
}

// Speed-CPT sharing groups: walking and stair climbing share motion
// dynamics; the other states each own a group.
inline constexpr int kNumSpeedGroups = 4;
inline int speed_group(MotionState s) {
    switch (s) {
        case MotionState::Stationary: return 0;
        case MotionState::Walking: return 1;
        case MotionState::UpDownStairs: return 1;
        case MotionState::Running: return 2;
        case MotionState::DrivingVehicle: return 3;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Discretization constants
// ---------------------------------------------------------------------------

inline constexpr double kCellMeters = 1.0;
inline constexpr double kFrameHz = 4.0;
inline constexpr double kFrameDt = 0.25;  // seconds
inline constexpr double kHdopGate = 8.0;  // fixes with hdop above this are outliers
inline constexpr int kNumQuantBins = 10;

// Representative speeds (m/s); dense near pedestrian speeds, sparse at
// vehicle speeds. Bin 0 must be exactly zero so standing still is exact.
inline constexpr std::array<double, 9> kSpeedBinsMps = {0.0, 0.5, 1.0, 1.5,
                                                        2.5, 4.0, 7.0, 12.0, 20.0};
inline constexpr int kNumSpeedBins = 9;

// 45-degree heading sectors, bin 0 = east, counter-clockwise.
inline constexpr int kNumHeadingBins = 8;
double heading_angle(int heading_bin);                 // sector center, radians
void heading_direction(int heading_bin, double* dx, double* dy);  // exact unit vector

// Signed sector offset h_prev -> h_next mapped into [-4, 3].
inline int heading_offset(int h_prev, int h_next) {
    return ((h_next - h_prev + 12) & 7) - 4;
}
inline int heading_offset_index(int h_prev, int h_next) {
    return (h_next - h_prev + 12) & 7;  // offset + 4, in [0, 8)
}

// ---------------------------------------------------------------------------
// Core records
// ---------------------------------------------------------------------------

struct GridLocation {
    int x = 0;  // cell index, east
    int y = 0;  // cell index, north
    friend bool operator==(const GridLocation&, const GridLocation&) = default;
};

struct PolarVelocity {
    int speed_bin = 0;
    int heading_bin = 0;
    friend bool operator==(const PolarVelocity&, const PolarVelocity&) = default;
};

struct GpsFix {
    double x_m = 0.0;
    double y_m = 0.0;
    double hdop = 1.0;  // must be > 0
};

struct MsbObservation {
    std::array<int, kNumMotionStates> state_bins{};  // each in 1..10
    std::array<int, kNumEnvironments> env_bins{};
    void validate() const;  // throws ValidationError
};

// One 4 Hz time step. GPS presence doubles as the sync indicator; the
// outlier indicator is derived from hdop, see gps_usable().
struct Frame {
    int index = 0;
    MsbObservation msb;
    std::optional<GpsFix> gps;
};

// True iff the frame carries a GPS fix that passes the hdop gate.
inline bool gps_usable(const Frame& f) {
    return f.gps.has_value() && f.gps->hdop <= kHdopGate;
}

struct JointState {
    GridLocation loc;
    PolarVelocity vel;
    MotionState state = MotionState::Stationary;
    Environment env = Environment::Outdoors;
    friend bool operator==(const JointState&, const JointState&) = default;
};

inline bool is_admissible(const JointState& js) { return is_admissible(js.state, js.env); }

// Packed key whose integer order is the lexicographic order on
// (x, y, speed, heading, state, env); used for deterministic tie-breaking.
inline std::uint64_t state_key(const JointState& js) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(js.loc.x)) << 48) |
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(js.loc.y) & 0xffff) << 32) |
           (static_cast<std::uint64_t>(js.vel.speed_bin) << 24) |
           (static_cast<std::uint64_t>(js.vel.heading_bin) << 16) |
           (static_cast<std::uint64_t>(js.state) << 8) |
           static_cast<std::uint64_t>(js.env);
}

inline JointState state_from_key(std::uint64_t key) {
    JointState js;
    js.loc.x = static_cast<int>((key >> 48) & 0xffff);
    js.loc.y = static_cast<int>((key >> 32) & 0xffff);
    js.vel.speed_bin = static_cast<int>((key >> 24) & 0xff);
    js.vel.heading_bin = static_cast<int>((key >> 16) & 0xff);
    js.state = static_cast<MotionState>((key >> 8) & 0xff);
    js.env = static_cast<Environment>(key & 0xff);
    return js;
}

// ---------------------------------------------------------------------------
// Map
// ---------------------------------------------------------------------------

struct Box {
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    // Boundary-inclusive.
    bool contains(double x, double y) const {
        return x >= min_x && x <= max_x && y >= min_y && y <= max_y;
    }
};

struct BuildingMap {
    int width_cells = 0;
    int height_cells = 0;
    std::vector<Box> buildings;

    bool in_bounds(GridLocation l) const {
        return l.x >= 0 && l.x < width_cells && l.y >= 0 && l.y < height_cells;
    }
    void validate() const;  // boxes inside world bounds; throws ValidationError
};

inline double cell_center_x(GridLocation l) { return (l.x + 0.5) * kCellMeters; }
inline double cell_center_y(GridLocation l) { return (l.y + 0.5) * kCellMeters; }

enum class MapClass : std::uint8_t {
    InsideBuilding = 0,
    OutsideBuilding = 1,
};

// Whether the cell's center point lies inside any building box.
// Throws std::invalid_argument for out-of-bounds locations.
MapClass map_class(GridLocation l, const BuildingMap& map);

// The map constraint treats a vehicle as outside any building.
inline int env_map_class(Environment e) {
    return e == Environment::Indoors ? 0 : 1;  // 0 = inside class, 1 = outside class
}

// ---------------------------------------------------------------------------
// Annotation spans
// ---------------------------------------------------------------------------

struct LabelSpan {
    int start = 0;  // inclusive frame indices
    int end = 0;
    MotionState state = MotionState::Stationary;
    Environment env = Environment::Outdoors;
    friend bool operator==(const LabelSpan&, const LabelSpan&) = default;
};

// Spans must be ordered, non-overlapping, admissible, and inside the trace.
void validate_spans(const std::vector<LabelSpan>& spans, int trace_len);

}  // namespace actloc

#endif
