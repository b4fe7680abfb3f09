#include "actloc/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "actloc/errors.hpp"
#include "actloc/learning.hpp"

namespace actloc {

using nlohmann::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << text;
    if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace

BuildingMap load_map(const std::string& path) {
    const json j = load_json(path);
    BuildingMap map;
    try {
        const json& w = j.at("world");
        const double width_m = w.at("width_m").get<double>();
        const double height_m = w.at("height_m").get<double>();
        const double cell_m = w.at("cell_m").get<double>();
        if (cell_m != kCellMeters)
            throw ValidationError(path + ": cell_m must be 1.0");
        map.width_cells = static_cast<int>(std::llround(width_m / cell_m));
        map.height_cells = static_cast<int>(std::llround(height_m / cell_m));
        if (std::abs(map.width_cells * cell_m - width_m) > 1e-9 ||
            std::abs(map.height_cells * cell_m - height_m) > 1e-9)
            throw ValidationError(path + ": world size must be a whole number of cells");
        for (const json& b : j.value("buildings", json::array())) {
            Box box;
            box.min_x = b.at("min").at(0).get<double>();
            box.min_y = b.at("min").at(1).get<double>();
            box.max_x = b.at("max").at(0).get<double>();
            box.max_y = b.at("max").at(1).get<double>();
            map.buildings.push_back(box);
        }
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    map.validate();
    return map;
}

void save_map(const BuildingMap& map, const std::string& path) {
    map.validate();
    json j;
    j["world"] = {{"width_m", map.width_cells * kCellMeters},
                  {"height_m", map.height_cells * kCellMeters},
                  {"cell_m", kCellMeters}};
    json buildings = json::array();
    for (const Box& b : map.buildings)
        buildings.push_back({{"min", {b.min_x, b.min_y}}, {"max", {b.max_x, b.max_y}}});
    j["buildings"] = std::move(buildings);
    write_text(path, j.dump(2) + "\n");
}

RawTrace load_raw_trace(const std::string& path) {
    const json j = load_json(path);
    RawTrace raw;
    try {
        for (const json& m : j.at("msb")) {
            MsbObservation obs;
            const json& sb = m.at("state_bins");
            const json& eb = m.at("env_bins");
            if (sb.size() != static_cast<std::size_t>(kNumMotionStates) ||
                eb.size() != static_cast<std::size_t>(kNumEnvironments))
                throw ValidationError(path + ": wrong classifier bin count");
            for (int i = 0; i < kNumMotionStates; ++i) obs.state_bins[i] = sb[i].get<int>();
            for (int i = 0; i < kNumEnvironments; ++i) obs.env_bins[i] = eb[i].get<int>();
            obs.validate();
            raw.msb.push_back(obs);
        }
        for (const json& g : j.value("gps", json::array())) {
            RawGpsSample s;
            s.t_s = g.at("t_s").get<double>();
            s.hdop = g.at("hdop").get<double>();
            if (!(s.hdop > 0.0)) throw ValidationError(path + ": hdop must be > 0");
            if (g.contains("lat")) {
                s.geographic = true;
                s.lat = g.at("lat").get<double>();
                s.lon = g.at("lon").get<double>();
            } else {
                s.x_m = g.at("x_m").get<double>();
                s.y_m = g.at("y_m").get<double>();
            }
            raw.gps.push_back(s);
        }
        if (j.contains("reference"))
            raw.reference = {j["reference"].at("lat").get<double>(),
                             j["reference"].at("lon").get<double>()};
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return raw;
}

void save_trace(const std::vector<Frame>& frames, const std::string& path) {
    json msb = json::array();
    json gps = json::array();
    for (const Frame& f : frames) {
        json bins_s = json::array();
        for (int b : f.msb.state_bins) bins_s.push_back(b);
        json bins_e = json::array();
        for (int b : f.msb.env_bins) bins_e.push_back(b);
        msb.push_back({{"state_bins", std::move(bins_s)}, {"env_bins", std::move(bins_e)}});
        if (f.gps.has_value())
            gps.push_back({{"t_s", f.index / kFrameHz},
                           {"x_m", f.gps->x_m},
                           {"y_m", f.gps->y_m},
                           {"hdop", f.gps->hdop}});
    }
    json j;
    j["msb"] = std::move(msb);
    j["gps"] = std::move(gps);
    write_text(path, j.dump() + "\n");
}

void project_lat_lon(double lat, double lon, double ref_lat, double ref_lon, double* x_m,
                     double* y_m) {
    constexpr double kEarthRadiusM = 6371000.0;
    constexpr double kDeg = std::numbers::pi / 180.0;
    *x_m = kEarthRadiusM * (lon - ref_lon) * kDeg * std::cos(ref_lat * kDeg);
    *y_m = kEarthRadiusM * (lat - ref_lat) * kDeg;
}

IngestResult ingest_trace(const RawTrace& raw, const BuildingMap& map) {
    map.validate();
    if (raw.msb.empty()) throw ValidationError("ingest: trace has no sensor frames");

    IngestResult out;
    out.frames.resize(raw.msb.size());
    for (std::size_t k = 0; k < raw.msb.size(); ++k) {
        raw.msb[k].validate();
        out.frames[k].index = static_cast<int>(k);
        out.frames[k].msb = raw.msb[k];
    }

    const double wm = map.width_cells * kCellMeters;
    const double hm = map.height_cells * kCellMeters;
    std::vector<double> snap_err(raw.msb.size(), 0.0);
    for (const RawGpsSample& s : raw.gps) {
        double x = s.x_m, y = s.y_m;
        if (s.geographic) {
            if (!raw.reference.has_value())
                throw ValidationError(
                    "ingest: lat/lon fixes require a declared reference point");
            project_lat_lon(s.lat, s.lon, raw.reference->first, raw.reference->second, &x,
                            &y);
        }
        const long frame = std::lround(s.t_s * kFrameHz);
        if (frame < 0 || frame >= static_cast<long>(out.frames.size())) {
            ++out.dropped_fixes;
            continue;
        }
        if (x < 0.0 || x > wm || y < 0.0 || y > hm) {
            ++out.dropped_fixes;
            continue;
        }
        const double err = std::abs(s.t_s - frame / kFrameHz);
        Frame& f = out.frames[frame];
        // Nearest fix wins; ties keep the earlier sample.
        if (f.gps.has_value() && snap_err[frame] <= err) continue;
        f.gps = GpsFix{x, y, s.hdop};
        snap_err[frame] = err;
    }
    return out;
}

IngestResult ingest_trace_file(const std::string& path, const BuildingMap& map) {
    return ingest_trace(load_raw_trace(path), map);
}

std::vector<JointState> load_truth(const std::string& path) {
    const json j = load_json(path);
    std::vector<JointState> out;
    try {
        for (const json& f : j.at("frames")) {
            JointState s;
            s.loc.x = f.at("x").get<int>();
            s.loc.y = f.at("y").get<int>();
            s.vel.speed_bin = f.at("speed_bin").get<int>();
            s.vel.heading_bin = f.at("heading_bin").get<int>();
            s.state = motion_state_from_string(f.at("state").get<std::string>());
            s.env = environment_from_string(f.at("env").get<std::string>());
            out.push_back(s);
        }
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return out;
}

void save_truth(const std::vector<JointState>& truth, const std::string& path) {
    json frames = json::array();
    for (const JointState& s : truth)
        frames.push_back({{"x", s.loc.x},
                          {"y", s.loc.y},
                          {"speed_bin", s.vel.speed_bin},
                          {"heading_bin", s.vel.heading_bin},
                          {"state", to_string(s.state)},
                          {"env", to_string(s.env)}});
    json j;
    j["frames"] = std::move(frames);
    write_text(path, j.dump() + "\n");
}

DatasetPaths load_manifest(const std::string& path) {
    const json j = load_json(path);
    DatasetPaths ds;
    try {
        ds.map = j.at("map").get<std::string>();
        for (const json& t : j.at("traces")) {
            DatasetPaths::Entry e;
            e.trace = t.at("trace").get<std::string>();
            e.truth = t.value("truth", std::string());
            e.labels = t.value("labels", std::string());
            ds.traces.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return ds;
}

void save_manifest(const DatasetPaths& ds, const std::string& path) {
    json traces = json::array();
    for (const auto& e : ds.traces) {
        json t;
        t["trace"] = e.trace;
        if (!e.truth.empty()) t["truth"] = e.truth;
        if (!e.labels.empty()) t["labels"] = e.labels;
        traces.push_back(std::move(t));
    }
    json j;
    j["map"] = ds.map;
    j["traces"] = std::move(traces);
    write_text(path, j.dump(2) + "\n");
}

Dataset load_dataset(const std::string& manifest_path) {
    const DatasetPaths paths = load_manifest(manifest_path);
    const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& rel) { return (dir / rel).string(); };

    Dataset ds;
    ds.map = load_map(resolve(paths.map));
    for (const auto& e : paths.traces) {
        ds.frames.push_back(ingest_trace_file(resolve(e.trace), ds.map).frames);
        ds.truth.push_back(e.truth.empty() ? std::vector<JointState>{}
                                           : load_truth(resolve(e.truth)));
        ds.spans.push_back(e.labels.empty() ? std::vector<LabelSpan>{}
                                            : load_spans(resolve(e.labels)));
    }
    return ds;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_decoded_csv(const std::vector<JointState>& path, const std::string& out_path) {
    std::ostringstream os;
    os << "frame,x_cell,y_cell,speed_bin,heading_bin,state,env\n";
    for (std::size_t k = 0; k < path.size(); ++k) {
        const JointState& s = path[k];
        os << k << ',' << s.loc.x << ',' << s.loc.y << ',' << s.vel.speed_bin << ','
           << s.vel.heading_bin << ',' << to_string(s.state) << ',' << to_string(s.env)
           << '\n';
    }
    write_text(out_path, os.str());
}

std::vector<JointState> load_decoded_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open decoded csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    std::vector<JointState> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur.push_back(c);
            }
        }
        cells.push_back(cur);
        if (cells.size() != 7) {
            std::ostringstream os;
            os << path << ":" << lineno << ": expected 7 columns";
            throw ParseError(os.str());
        }
        try {
            JointState s;
            s.loc.x = std::stoi(cells[1]);
            s.loc.y = std::stoi(cells[2]);
            s.vel.speed_bin = std::stoi(cells[3]);
            s.vel.heading_bin = std::stoi(cells[4]);
            s.state = motion_state_from_string(cells[5]);
            s.env = environment_from_string(cells[6]);
            out.push_back(s);
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << path << ":" << lineno << ": " << e.what();
            throw ParseError(os.str());
        }
    }
    return out;
}

}  // namespace actloc
