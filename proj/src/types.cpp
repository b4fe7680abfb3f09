#include "actloc/types.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "actloc/errors.hpp"

namespace actloc {

const char* to_string(MotionState s) {
    switch (s) {
        case MotionState::Stationary: return "Stationary";
        case MotionState::Walking: return "Walking";
        case MotionState::Running: return "Running";
        case MotionState::DrivingVehicle: return "DrivingVehicle";
        case MotionState::UpDownStairs: return "UpDownStairs";
    }
    return "?";
}

const char* to_string(Environment e) {
    switch (e) {
        case Environment::Indoors: return "Indoors";
        case Environment::Outdoors: return "Outdoors";
        case Environment::Vehicle: return "Vehicle";
    }
    return "?";
}

MotionState motion_state_from_string(std::string_view name) {
    for (int i = 0; i < kNumMotionStates; ++i) {
        auto s = static_cast<MotionState>(i);
        if (name == to_string(s)) return s;
    }
    throw ParseError("unknown motion state: " + std::string(name));
}

Environment environment_from_string(std::string_view name) {
    for (int i = 0; i < kNumEnvironments; ++i) {
        auto e = static_cast<Environment>(i);
        if (name == to_string(e)) return e;
    }
    throw ParseError("unknown environment: " + std::string(name));
}

double heading_angle(int heading_bin) {
    return heading_bin * (std::numbers::pi / 4.0);
}

void heading_direction(int heading_bin, double* dx, double* dy) {
    // Exact axis components; sqrt(1/2) for the diagonals. Keeps zero
    // displacement components exactly zero.
    static const double s = std::sqrt(0.5);
    static const double cx[8] = {1.0, s, 0.0, -s, -1.0, -s, 0.0, s};
    static const double cy[8] = {0.0, s, 1.0, s, 0.0, -s, -1.0, -s};
    *dx = cx[heading_bin & 7];
    *dy = cy[heading_bin & 7];
}

void MsbObservation::validate() const {
    for (int b : state_bins)
        if (b < 1 || b > kNumQuantBins)
            throw ValidationError("state classifier bin out of range 1..10");
    for (int b : env_bins)
        if (b < 1 || b > kNumQuantBins)
            throw ValidationError("environment classifier bin out of range 1..10");
}

void BuildingMap::validate() const {
    if (width_cells <= 0 || height_cells <= 0)
        throw ValidationError("world dimensions must be positive");
    const double w = width_cells * kCellMeters;
    const double h = height_cells * kCellMeters;
    for (std::size_t i = 0; i < buildings.size(); ++i) {
        const Box& b = buildings[i];
        if (b.min_x >= b.max_x || b.min_y >= b.max_y) {
            std::ostringstream os;
            os << "building " << i << " has an empty box";
            throw ValidationError(os.str());
        }
        if (b.min_x < 0 || b.min_y < 0 || b.max_x > w || b.max_y > h) {
            std::ostringstream os;
            os << "building " << i << " lies outside world bounds";
            throw ValidationError(os.str());
        }
    }
}

MapClass map_class(GridLocation l, const BuildingMap& map) {
    if (!map.in_bounds(l))
        throw std::invalid_argument("map_class: location out of world bounds");
    const double cx = cell_center_x(l);
    const double cy = cell_center_y(l);
    for (const Box& b : map.buildings)
        if (b.contains(cx, cy)) return MapClass::InsideBuilding;
    return MapClass::OutsideBuilding;
}

void validate_spans(const std::vector<LabelSpan>& spans, int trace_len) {
    int prev_end = -1;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const LabelSpan& s = spans[i];
        std::ostringstream os;
        if (s.start > s.end) {
            os << "span " << i << " has start > end";
            throw ValidationError(os.str());
        }
        if (s.start <= prev_end) {
            os << "span " << i << " overlaps or is out of order";
            throw ValidationError(os.str());
        }
        if (s.end >= trace_len) {
            os << "span " << i << " extends past the trace";
            throw ValidationError(os.str());
        }
        if (!is_admissible(s.state, s.env)) {
            os << "span " << i << " labels a forbidden state/environment pair";
            throw ValidationError(os.str());
        }
        prev_end = s.end;
    }
}

}  // namespace actloc
