#ifndef ACTLOC_EXPERIMENTS_HPP
#define ACTLOC_EXPERIMENTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "actloc/io.hpp"
#include "actloc/learning.hpp"
#include "actloc/metrics.hpp"

namespace actloc {

// Table rows, ordered by the factors they may use. The three joint rows
// share one code path and differ only in the factor mask.
enum class AblationRow {
    AdaBoostArgmax,   // per-frame classifier argmax, no temporal model
    IndependentHmm,   // separate state and environment HMMs over the bins
    JointSe,          // joint (state, env) chain, sensor board only
    JointSeGps,       // + GPS likelihood
    JointSeGpsMap,    // + soft map constraint
};

const char* to_string(AblationRow row);

struct ExperimentConfig {
    EmConfig em;             // training configuration for the full-model rows
    BeamConfig decode_beam;
    std::uint64_t init_seed = 7;
    int threads = 0;  // parallelism across cross-validation folds
};

struct AblationResult {
    struct Row {
        std::string name;
        AccuracyStats state;
        AccuracyStats env;
    };
    std::vector<Row> rows;
};

// Leave-one-out cross-validation over the dataset's traces: train each
// row's model on n-1 labeled traces, Viterbi-decode the held-out trace,
// aggregate frame accuracies.
AblationResult run_ablation(const Dataset& ds, const ExperimentConfig& cfg,
                            const std::vector<AblationRow>& rows);

void write_ablation_csv(const AblationResult& result, const std::string& path);

// Per-frame argmax of the classifier bins (ties to the lowest index).
std::vector<JointState> argmax_decode(const std::vector<Frame>& frames);

struct VeCurveConfig {
    std::vector<int> percents;
    std::vector<ScheduleKind> kinds;
    int random_single_repeats = 0;
    EmConfig em;
    std::uint64_t init_seed = 7;
    int threads = 0;
};

struct VeCurveResult {
    struct Point {
        std::string kind;
        int percent;
        AccuracyStats state_acc;
    };
    std::vector<Point> points;
};

// Label-dropping experiment on the sensor-board-only collapsed model:
// trim each span to its central (100-p)%, expand the gap schedule, train
// with EM, decode held-out traces, and report motion-state accuracy.
// When random_single_repeats > 0 an extra row keeps one random frame per
// span (TwoWayUniform gaps) and aggregates across repeats.
VeCurveResult run_ve_experiment(const Dataset& ds, const VeCurveConfig& cfg);

void write_ve_csv(const VeCurveResult& result, const std::string& path);

// Figure-style SVG of a decoded trace (building boxes, GPS polyline,
// path styled by decoded environment) plus a per-frame CSV.
void emit_trace_plot(const std::vector<JointState>& decoded,
                     const std::vector<Frame>& frames, const BuildingMap& map,
                     const std::string& svg_path, const std::string& csv_path);

}  // namespace actloc

#endif
