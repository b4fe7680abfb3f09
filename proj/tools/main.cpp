// Command-line surface: data simulation, training, decoding, the
// cross-validated ablation table, the label-dropping curve, and plots.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "actloc/errors.hpp"
#include "actloc/experiments.hpp"
#include "actloc/features.hpp"
#include "actloc/inference.hpp"
#include "actloc/io.hpp"
#include "actloc/learning.hpp"
#include "actloc/metrics.hpp"
#include "actloc/params.hpp"
#include "actloc/simulator.hpp"

using nlohmann::json;
using namespace actloc;

namespace {

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

BeamConfig beam_from_json(const json& j) {
    BeamConfig b;
    b.max_states = j.value("max_states", b.max_states);
    b.log_threshold = j.value("threshold", b.log_threshold);
    b.exact_mode = j.value("exact", b.exact_mode);
    b.validate();
    return b;
}

FactorMask mask_from_json(const json& j) {
    FactorMask m;
    m.gps = j.value("gps", m.gps);
    m.map = j.value("map", m.map);
    return m;
}

EmConfig em_from_json(const json& j) {
    EmConfig em;
    em.max_iters = j.value("max_iters", em.max_iters);
    em.rel_ll_tolerance = j.value("tolerance", em.rel_ll_tolerance);
    em.dirichlet_smoothing = j.value("smoothing", em.dirichlet_smoothing);
    if (j.contains("beam")) em.beam = beam_from_json(j["beam"]);
    em.threads = j.value("threads", em.threads);
    em.validate();
    return em;
}

SimConfig sim_from_json(const json& j) {
    SimConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("world")) {
        const json& w = j["world"];
        cfg.world_width_cells = w.value("width_cells", cfg.world_width_cells);
        cfg.world_height_cells = w.value("height_cells", cfg.world_height_cells);
        cfg.building_count = w.value("buildings", cfg.building_count);
        cfg.building_min_m = w.value("building_min_m", cfg.building_min_m);
        cfg.building_max_m = w.value("building_max_m", cfg.building_max_m);
    }
    if (j.contains("gps")) {
        const json& g = j["gps"];
        cfg.gps_period_frames = g.value("period_frames", cfg.gps_period_frames);
        cfg.hdop_min = g.value("hdop_min", cfg.hdop_min);
        cfg.hdop_max = g.value("hdop_max", cfg.hdop_max);
        cfg.gps_noise_scale = g.value("noise_scale", cfg.gps_noise_scale);
        cfg.outlier_rate_near = g.value("outlier_rate_near", cfg.outlier_rate_near);
        cfg.outlier_rate_base = g.value("outlier_rate_base", cfg.outlier_rate_base);
        cfg.outlier_near_dist_m = g.value("outlier_near_dist_m", cfg.outlier_near_dist_m);
        cfg.outlier_offset_min_m = g.value("outlier_offset_min_m", cfg.outlier_offset_min_m);
        cfg.outlier_offset_max_m = g.value("outlier_offset_max_m", cfg.outlier_offset_max_m);
        cfg.indoor_dropout = g.value("indoor_dropout", cfg.indoor_dropout);
    }
    double state_diag = 0.8, env_diag = 0.8;
    if (j.contains("classifier")) {
        const json& c = j["classifier"];
        state_diag = c.value("state_diag", state_diag);
        env_diag = c.value("env_diag", env_diag);
        cfg.classifier_concentration = c.value("concentration", cfg.classifier_concentration);
        cfg.perceived_high = c.value("high", cfg.perceived_high);
        cfg.perceived_low = c.value("low", cfg.perceived_low);
    }
    set_uniform_confusion(cfg, state_diag, env_diag);
    if (j.contains("classifier") && j["classifier"].contains("state_confusion")) {
        const json& m = j["classifier"]["state_confusion"];
        for (int a = 0; a < kNumMotionStates; ++a)
            for (int b = 0; b < kNumMotionStates; ++b)
                cfg.state_confusion[a][b] = m.at(a).at(b).get<double>();
    }
    if (j.contains("classifier") && j["classifier"].contains("env_confusion")) {
        const json& m = j["classifier"]["env_confusion"];
        for (int a = 0; a < kNumEnvironments; ++a)
            for (int b = 0; b < kNumEnvironments; ++b)
                cfg.env_confusion[a][b] = m.at(a).at(b).get<double>();
    }
    if (j.contains("segments")) {
        cfg.min_segment_frames = j["segments"].value("min_frames", cfg.min_segment_frames);
        cfg.max_segment_frames = j["segments"].value("max_frames", cfg.max_segment_frames);
    }
    if (j.contains("script")) {
        std::vector<ScriptStep> script;
        for (const json& s : j["script"]) {
            ScriptStep st;
            st.state = motion_state_from_string(s.at("state").get<std::string>());
            st.env = environment_from_string(s.at("env").get<std::string>());
            st.duration_frames = s.at("duration").get<int>();
            script.push_back(st);
        }
        cfg.script = std::move(script);
    }
    return cfg;
}

std::string trace_name(int i, const char* suffix) {
    std::ostringstream os;
    os << "trace_" << std::setw(3) << std::setfill('0') << i << suffix;
    return os.str();
}

int cmd_simulate(const json& cfg, const std::string& out_dir, int traces, int frames,
                 std::optional<std::uint64_t> seed) {
    SimConfig sim = sim_from_json(cfg);
    if (seed.has_value()) sim.seed = *seed;
    traces = cfg.value("traces", traces);
    frames = cfg.value("frames", frames);

    std::filesystem::create_directories(out_dir);
    const BuildingMap world = generate_world(sim);
    save_map(world, out_dir + "/map.json");

    DatasetPaths manifest;
    manifest.map = "map.json";
    for (int i = 0; i < traces; ++i) {
        SimConfig per = sim;
        per.seed = sim.seed + 0x9e3779b9ull * (i + 1);
        const SimTrace t = generate_trace(world, per, frames);
        save_trace(t.frames, out_dir + "/" + trace_name(i, ".trace.json"));
        save_truth(t.truth, out_dir + "/" + trace_name(i, ".truth.json"));
        save_spans(t.spans, out_dir + "/" + trace_name(i, ".labels.json"));
        manifest.traces.push_back({trace_name(i, ".trace.json"), trace_name(i, ".truth.json"),
                                   trace_name(i, ".labels.json")});
    }
    save_manifest(manifest, out_dir + "/dataset.json");
    std::cout << "wrote " << traces << " traces to " << out_dir << "\n";
    return 0;
}

int cmd_train(const json& cfg, std::optional<std::uint64_t> seed) {
    const std::string dataset_path = cfg.at("dataset").get<std::string>();
    const Dataset ds = load_dataset(dataset_path);

    const ScheduleKind kind =
        schedule_kind_from_string(cfg.value("schedule", std::string("HardLabels")));
    const int percent = cfg.value("percent", 0);

    EmConfig em = cfg.contains("em") ? em_from_json(cfg["em"]) : EmConfig{};
    em.mask = cfg.contains("factors") ? mask_from_json(cfg["factors"]) : FactorMask{};
    const bool collapse = cfg.value("collapse_motion", false);

    BuildingMap map = ds.map;
    if (collapse) {
        map = BuildingMap{};
        map.width_cells = 1;
        map.height_cells = 1;
        em.update_motion_cpts = false;
        em.beam.exact_mode = true;
        if (em.mask.gps || em.mask.map)
            throw ValidationError("train: collapse_motion requires gps/map factors off");
    }

    std::vector<TrainTrace> train;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        if (ds.spans[i].empty())
            throw ValidationError("train: trace " + std::to_string(i) + " has no labels");
        TrainTrace t;
        t.frames = ds.frames[i];
        const auto spans = percent > 0 ? drop_labels(ds.spans[i], percent) : ds.spans[i];
        t.ve = expand_annotations(spans, static_cast<int>(ds.frames[i].size()), kind);
        train.push_back(std::move(t));
    }

    const std::uint64_t init_seed = seed.value_or(cfg.value("init_seed", 7ull));
    ModelParams init = initialize_params(init_seed, cfg.value("init_jitter", 0.01));
    if (collapse) collapse_motion_params(init);

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> iter_seconds;
    // em_train runs all iterations internally; wall time is reported for
    // the run as a whole plus per-iteration averages.
    const EmResult result = em_train(train, init, map, em);
    const double total_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string out_params = cfg.value("out_params", std::string("params.json"));
    save_params(result.params, out_params);

    json report;
    report["iterations"] = json::array();
    for (std::size_t i = 0; i < result.ll_per_iter.size(); ++i)
        report["iterations"].push_back(
            {{"iter", i},
             {"log_likelihood", result.ll_per_iter[i]},
             {"wall_time_s", total_s / result.ll_per_iter.size()}});
    report["final_log_likelihood"] = result.ll_per_iter.back();
    report["total_wall_time_s"] = total_s;
    const std::string report_path = cfg.value("report", std::string());
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << report.dump(2) << "\n";
    }
    std::cout << "trained " << result.ll_per_iter.size() << " iterations, final ll "
              << result.ll_per_iter.back() << ", params -> " << out_params << "\n";
    return 0;
}

int cmd_decode(const json& cfg) {
    const Dataset ds = load_dataset(cfg.at("dataset").get<std::string>());
    const ModelParams params = load_params(cfg.at("params").get<std::string>());
    const FactorMask mask =
        cfg.contains("factors") ? mask_from_json(cfg["factors"]) : FactorMask{};
    const BeamConfig beam = cfg.contains("beam") ? beam_from_json(cfg["beam"]) : BeamConfig{};
    const std::string out_dir = cfg.value("out_dir", std::string("."));
    std::filesystem::create_directories(out_dir);

    std::vector<std::vector<JointState>> decoded;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        const ViterbiResult vit =
            viterbi_decode(ds.frames[i], params, ds.map, beam, nullptr, mask);
        write_decoded_csv(vit.path, out_dir + "/" + trace_name(static_cast<int>(i), ".decoded.csv"));
        decoded.push_back(vit.path);
    }

    bool have_truth = true;
    for (const auto& t : ds.truth)
        if (t.empty()) have_truth = false;
    if (have_truth && cfg.value("evaluate", true)) {
        const EvalResult eval = evaluate_accuracy(decoded, ds.truth);
        std::ostringstream os;
        os << "trace,state_accuracy,env_accuracy\n";
        for (std::size_t i = 0; i < eval.state.per_trace.size(); ++i)
            os << i << ',' << format_double(eval.state.per_trace[i]) << ','
               << format_double(eval.env.per_trace[i]) << '\n';
        os << "mean," << format_double(eval.state.mean) << ','
           << format_double(eval.env.mean) << '\n';
        os << "ci95," << format_double(eval.state.ci95) << ','
           << format_double(eval.env.ci95) << '\n';
        std::ofstream out(out_dir + "/evaluation.csv");
        out << os.str();
        std::cout << "state accuracy " << eval.state.mean << " +- " << eval.state.ci95
                  << ", env accuracy " << eval.env.mean << " +- " << eval.env.ci95 << "\n";
    }
    return 0;
}

int cmd_ablate(const json& cfg, std::optional<std::uint64_t> seed) {
    const Dataset ds = load_dataset(cfg.at("dataset").get<std::string>());
    ExperimentConfig ec;
    if (cfg.contains("em")) ec.em = em_from_json(cfg["em"]);
    if (cfg.contains("decode_beam")) ec.decode_beam = beam_from_json(cfg["decode_beam"]);
    ec.init_seed = seed.value_or(cfg.value("init_seed", 7ull));
    ec.threads = cfg.value("threads", 0);

    std::vector<AblationRow> rows;
    if (cfg.contains("rows")) {
        for (const json& r : cfg["rows"]) {
            const std::string name = r.get<std::string>();
            bool found = false;
            for (AblationRow row : {AblationRow::AdaBoostArgmax, AblationRow::IndependentHmm,
                                    AblationRow::JointSe, AblationRow::JointSeGps,
                                    AblationRow::JointSeGpsMap}) {
                if (name == to_string(row)) {
                    rows.push_back(row);
                    found = true;
                }
            }
            if (!found) throw ValidationError("ablate: unknown row " + name);
        }
    } else {
        rows = {AblationRow::AdaBoostArgmax, AblationRow::IndependentHmm, AblationRow::JointSe,
                AblationRow::JointSeGps, AblationRow::JointSeGpsMap};
    }

    const AblationResult result = run_ablation(ds, ec, rows);
    const std::string out = cfg.value("out", std::string("ablation.csv"));
    write_ablation_csv(result, out);
    for (const auto& row : result.rows)
        std::cout << row.name << ": state " << row.state.mean << " +- " << row.state.ci95
                  << ", env " << row.env.mean << " +- " << row.env.ci95 << "\n";
    std::cout << "table -> " << out << "\n";
    return 0;
}

int cmd_ve_curve(const json& cfg, std::optional<std::uint64_t> seed) {
    const Dataset ds = load_dataset(cfg.at("dataset").get<std::string>());
    VeCurveConfig vc;
    if (cfg.contains("percents"))
        for (const json& p : cfg["percents"]) vc.percents.push_back(p.get<int>());
    else
        vc.percents = {0, 25, 50, 75, 100};
    if (cfg.contains("kinds"))
        for (const json& k : cfg["kinds"])
            vc.kinds.push_back(schedule_kind_from_string(k.get<std::string>()));
    else
        vc.kinds = {ScheduleKind::LinearFade, ScheduleKind::TwoWayUniform,
                    ScheduleKind::AllUniform};
    vc.random_single_repeats = cfg.value("random_single_repeats", 0);
    if (cfg.contains("em")) vc.em = em_from_json(cfg["em"]);
    vc.init_seed = seed.value_or(cfg.value("init_seed", 7ull));
    vc.threads = cfg.value("threads", 0);

    const VeCurveResult result = run_ve_experiment(ds, vc);
    const std::string out = cfg.value("out", std::string("ve_curve.csv"));
    write_ve_csv(result, out);
    for (const auto& pt : result.points)
        std::cout << pt.kind << " p=" << pt.percent << ": " << pt.state_acc.mean << " +- "
                  << pt.state_acc.ci95 << "\n";
    std::cout << "curve -> " << out << "\n";
    return 0;
}

int cmd_plot(const json& cfg) {
    const BuildingMap map = load_map(cfg.at("map").get<std::string>());
    const std::vector<JointState> decoded =
        load_decoded_csv(cfg.at("decoded").get<std::string>());
    std::vector<Frame> frames;
    if (cfg.contains("trace"))
        frames = ingest_trace_file(cfg["trace"].get<std::string>(), map).frames;
    emit_trace_plot(decoded, frames, map, cfg.value("out_svg", std::string("trace.svg")),
                    cfg.value("out_csv", std::string("trace_plot.csv")));
    return 0;
}

int cmd_train_stumps(const std::string& features, int rounds, const std::string& out) {
    const FeatureDataset data = load_feature_csv(features);
    const std::vector<StumpEnsemble> bank = train_classifier_bank(data, rounds);
    save_ensembles(bank, out);
    std::cout << "trained " << bank.size() << " ensembles -> " << out << "\n";
    return 0;
}

int cmd_featurize(const std::string& features, const std::string& bank_path,
                  const std::string& out) {
    const FeatureDataset data = load_feature_csv(features);
    const std::vector<StumpEnsemble> bank = load_ensembles(bank_path);
    if (bank.size() != static_cast<std::size_t>(kNumMotionStates + kNumEnvironments))
        throw ValidationError("featurize: bank must hold 8 ensembles");
    std::vector<Frame> frames;
    for (std::size_t k = 0; k < data.rows.size(); ++k) {
        Frame f;
        f.index = static_cast<int>(k);
        f.msb = featurize_frame(bank, data.rows[k]);
        frames.push_back(f);
    }
    save_trace(frames, out);
    std::cout << "featurized " << frames.size() << " frames -> " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint activity and location estimation over GPS and wearable-sensor "
                 "classifier streams"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON configuration file")->capture_default_str();
    app.add_option("--seed", seed, "override the configured seed");

    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    std::string out_dir = "dataset";
    int traces = 10, frames = 2400;
    sim->add_option("--out", out_dir, "output directory");
    sim->add_option("--traces", traces, "number of traces");
    sim->add_option("--frames", frames, "frames per trace (4 Hz)");

    auto* train = app.add_subcommand("train", "EM-train model parameters");
    auto* decode = app.add_subcommand("decode", "Viterbi-decode traces");
    auto* ablate = app.add_subcommand("ablate", "leave-one-out ablation table");
    auto* ve = app.add_subcommand("ve-curve", "label-dropping annotation experiment");
    auto* plot = app.add_subcommand("plot", "render a decoded trace as SVG + CSV");

    auto* stumps = app.add_subcommand("train-stumps", "boost stump ensembles from a feature CSV");
    std::string features_path, bank_path = "ensembles.json", stump_out = "ensembles.json";
    int rounds = 50;
    stumps->add_option("--features", features_path, "labeled feature CSV")->required();
    stumps->add_option("--rounds", rounds, "boosting rounds");
    stumps->add_option("--out", stump_out, "output ensemble bank");

    auto* feat = app.add_subcommand("featurize", "apply a stump bank to a feature CSV");
    std::string feat_features, feat_out = "featurized.trace.json";
    feat->add_option("--features", feat_features, "feature CSV")->required();
    feat->add_option("--bank", bank_path, "ensemble bank JSON")->required();
    feat->add_option("--out", feat_out, "output trace JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        const json cfg = load_config(config_path);
        if (sim->parsed()) return cmd_simulate(cfg, out_dir, traces, frames, seed);
        if (train->parsed()) return cmd_train(cfg, seed);
        if (decode->parsed()) return cmd_decode(cfg);
        if (ablate->parsed()) return cmd_ablate(cfg, seed);
        if (ve->parsed()) return cmd_ve_curve(cfg, seed);
        if (plot->parsed()) return cmd_plot(cfg);
        if (stumps->parsed()) return cmd_train_stumps(features_path, rounds, stump_out);
        if (feat->parsed()) return cmd_featurize(feat_features, bank_path, feat_out);
    } catch (const InferenceCollapseError& e) {
        std::cerr << "inference collapse: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
