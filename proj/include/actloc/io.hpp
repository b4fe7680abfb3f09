#ifndef ACTLOC_IO_HPP
#define ACTLOC_IO_HPP

#include <optional>
#include <string>
#include <vector>

#include "actloc/types.hpp"

namespace actloc {

// --- map file: {world: {width_m, height_m, cell_m}, buildings: [...]} ------

BuildingMap load_map(const std::string& path);
void save_map(const BuildingMap& map, const std::string& path);

// --- trace file -------------------------------------------------------------
// {"msb": [{"state_bins": [...], "env_bins": [...]}, ...],
//  "gps": [{"t_s":, "x_m":, "y_m":, "hdop":} | {"t_s":, "lat":, "lon":, "hdop":}, ...],
//  "reference": {"lat":, "lon":}?}

struct RawGpsSample {
    double t_s = 0.0;
    bool geographic = false;  // lat/lon instead of local meters
    double x_m = 0.0, y_m = 0.0;
    double lat = 0.0, lon = 0.0;
    double hdop = 1.0;
};

struct RawTrace {
    std::vector<MsbObservation> msb;
    std::vector<RawGpsSample> gps;
    std::optional<std::pair<double, double>> reference;  // lat, lon
};

RawTrace load_raw_trace(const std::string& path);
void save_trace(const std::vector<Frame>& frames, const std::string& path);

struct IngestResult {
    std::vector<Frame> frames;
    int dropped_fixes = 0;  // out-of-bounds or off-trace fixes, kept as a warning count
};

// Snap GPS samples to the nearest 4 Hz frame (ties to the earlier fix),
// projecting lat/lon about the declared reference when needed, and drop
// fixes outside world bounds.
IngestResult ingest_trace(const RawTrace& raw, const BuildingMap& map);
IngestResult ingest_trace_file(const std::string& path, const BuildingMap& map);

// Equirectangular local projection (meters east/north of the reference).
void project_lat_lon(double lat, double lon, double ref_lat, double ref_lon, double* x_m,
                     double* y_m);

// --- ground truth -----------------------------------------------------------

std::vector<JointState> load_truth(const std::string& path);
void save_truth(const std::vector<JointState>& truth, const std::string& path);

// --- dataset manifest ---------------------------------------------------------
// {"map": "map.json", "traces": [{"trace":, "truth":?, "labels":?}, ...]}

struct DatasetPaths {
    std::string map;
    struct Entry {
        std::string trace;
        std::string truth;   // may be empty
        std::string labels;  // may be empty
    };
    std::vector<Entry> traces;
};

DatasetPaths load_manifest(const std::string& path);
void save_manifest(const DatasetPaths& ds, const std::string& path);

struct Dataset {
    BuildingMap map;
    std::vector<std::vector<Frame>> frames;
    std::vector<std::vector<JointState>> truth;       // empty vectors when absent
    std::vector<std::vector<LabelSpan>> spans;        // empty vectors when absent
};

// Loads everything the manifest names, relative to the manifest directory.
Dataset load_dataset(const std::string& manifest_path);

// --- CSV ---------------------------------------------------------------------

// Fixed formatting so identical runs produce byte-identical files.
std::string format_double(double v);

void write_decoded_csv(const std::vector<JointState>& path, const std::string& out_path);
std::vector<JointState> load_decoded_csv(const std::string& path);

}  // namespace actloc

#endif
