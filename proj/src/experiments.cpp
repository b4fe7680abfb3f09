#include "actloc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "actloc/errors.hpp"
#include "actloc/factors.hpp"
#include "actloc/inference.hpp"

namespace actloc {

const char* to_string(AblationRow row) {
    switch (row) {
        case AblationRow::AdaBoostArgmax: return "argmax";
        case AblationRow::IndependentHmm: return "independent_hmm";
        case AblationRow::JointSe: return "joint_se_msb";
        case AblationRow::JointSeGps: return "joint_se_msb_gps";
        case AblationRow::JointSeGpsMap: return "joint_se_msb_gps_map";
    }
    return "?";
}

std::vector<JointState> argmax_decode(const std::vector<Frame>& frames) {
    std::vector<JointState> out;
    out.reserve(frames.size());
    for (const Frame& f : frames) {
        JointState s;
        int best = 0;
        for (int i = 1; i < kNumMotionStates; ++i)
            if (f.msb.state_bins[i] > f.msb.state_bins[best]) best = i;
        s.state = static_cast<MotionState>(best);
        best = 0;
        for (int i = 1; i < kNumEnvironments; ++i)
            if (f.msb.env_bins[i] > f.msb.env_bins[best]) best = i;
        s.env = static_cast<Environment>(best);
        out.push_back(s);
    }
    return out;
}

namespace {

void require_fully_labeled(const Dataset& ds) {
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        const auto& spans = ds.spans[i];
        validate_spans(spans, static_cast<int>(ds.frames[i].size()));
        int covered = 0;
        for (const LabelSpan& sp : spans) covered += sp.end - sp.start + 1;
        if (covered != static_cast<int>(ds.frames[i].size()))
            throw ValidationError("experiment: trace " + std::to_string(i) +
                                  " is not fully labeled");
    }
}

std::vector<std::pair<MotionState, Environment>> frame_labels(
    const std::vector<LabelSpan>& spans, int len) {
    std::vector<std::pair<MotionState, Environment>> out(
        len, {MotionState::Stationary, Environment::Outdoors});
    for (const LabelSpan& sp : spans)
        for (int k = sp.start; k <= sp.end; ++k) out[k] = {sp.state, sp.env};
    return out;
}

// Plain discrete HMM over one variable with the per-classifier bins as
// naive-Bayes observations; used for the independent-chain rows.
struct SmallHmm {
    int n = 0;             // states
    int classifiers = 0;   // observation streams
    std::vector<double> init;               // [n]
    std::vector<double> trans;              // [n][n]
    std::vector<double> obs;                // [clf][n][bins]

    double& t(int a, int b) { return trans[a * n + b]; }
    double& o(int c, int s, int bin) {
        return obs[(c * n + s) * kNumQuantBins + bin];
    }
    double ov(int c, int s, int bin) const {
        return obs[(c * n + s) * kNumQuantBins + bin];
    }
};

template <class LabelOf, class BinsOf>
SmallHmm fit_small_hmm(int n, int classifiers, const Dataset& ds,
                       const std::vector<std::size_t>& train_idx, double delta,
                       LabelOf label_of, BinsOf bins_of) {
    SmallHmm h;
    h.n = n;
    h.classifiers = classifiers;
    h.init.assign(n, 0.0);
    h.trans.assign(n * n, 0.0);
    h.obs.assign(classifiers * n * kNumQuantBins, 0.0);

    for (std::size_t ti : train_idx) {
        const auto labels = frame_labels(ds.spans[ti], static_cast<int>(ds.frames[ti].size()));
        for (std::size_t k = 0; k < labels.size(); ++k) {
            const int s = label_of(labels[k]);
            if (k == 0) h.init[s] += 1.0;
            if (k > 0) h.t(label_of(labels[k - 1]), s) += 1.0;
            for (int c = 0; c < classifiers; ++c)
                h.o(c, s, bins_of(ds.frames[ti][k], c) - 1) += 1.0;
        }
    }
    auto smooth = [&](double* row, int m) {
        double sum = 0.0;
        for (int i = 0; i < m; ++i) sum += row[i];
        const double denom = sum + delta * m;
        for (int i = 0; i < m; ++i)
            row[i] = denom > 0.0 ? (row[i] + delta) / denom : 1.0 / m;
    };
    smooth(h.init.data(), n);
    for (int a = 0; a < n; ++a) smooth(&h.trans[a * n], n);
    for (int c = 0; c < classifiers; ++c)
        for (int s = 0; s < n; ++s) smooth(&h.obs[(c * n + s) * kNumQuantBins], kNumQuantBins);
    return h;
}

template <class BinsOf>
std::vector<int> small_hmm_viterbi(const SmallHmm& h, const std::vector<Frame>& frames,
                                   BinsOf bins_of) {
    const int n = h.n;
    std::vector<double> cur(n), prev(n);
    std::vector<std::vector<int>> bp(frames.size(), std::vector<int>(n, 0));

    auto emit = [&](int k, int s) {
        double w = 0.0;
        for (int c = 0; c < h.classifiers; ++c)
            w += std::log(h.ov(c, s, bins_of(frames[k], c) - 1));
        return w;
    };
    for (int s = 0; s < n; ++s) prev[s] = std::log(h.init[s]) + emit(0, s);
    for (std::size_t k = 1; k < frames.size(); ++k) {
        for (int s = 0; s < n; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int a = 0; a < n; ++a) {
                const double v = prev[a] + std::log(h.trans[a * n + s]);
                if (v > best) {
                    best = v;
                    arg = a;
                }
            }
            cur[s] = best + emit(static_cast<int>(k), s);
            bp[k][s] = arg;
        }
        prev = cur;
    }
    int arg = 0;
    for (int s = 1; s < n; ++s)
        if (prev[s] > prev[arg]) arg = s;
    std::vector<int> path(frames.size());
    for (std::size_t k = frames.size(); k-- > 0;) {
        path[k] = arg;
        if (k > 0) arg = bp[k][arg];
    }
    return path;
}

std::vector<std::size_t> fold_train_indices(std::size_t n, std::size_t held_out) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
        if (i != held_out) idx.push_back(i);
    return idx;
}

// Shared joint-row machinery. `collapse` runs the exactly-marginalized
// sensor-board-only variant on a 1-cell world with a pinned motion chain;
// it is only valid with both GPS and map factors off.
struct JointRowSetup {
    FactorMask mask;
    bool collapse = false;
};

JointRowSetup joint_setup(AblationRow row) {
    switch (row) {
        case AblationRow::JointSe: return {FactorMask{false, false}, true};
        case AblationRow::JointSeGps: return {FactorMask{true, false}, false};
        case AblationRow::JointSeGpsMap: return {FactorMask{true, true}, false};
        default: throw std::invalid_argument("joint_setup: not a joint row");
    }
}

std::vector<JointState> run_joint_fold(const Dataset& ds, const ExperimentConfig& cfg,
                                       AblationRow row, std::size_t held_out) {
    const JointRowSetup setup = joint_setup(row);
    const BuildingMap& map_full = ds.map;
    BuildingMap map_collapsed;
    map_collapsed.width_cells = 1;
    map_collapsed.height_cells = 1;
    const BuildingMap& map = setup.collapse ? map_collapsed : map_full;

    std::vector<TrainTrace> train;
    for (std::size_t i : fold_train_indices(ds.frames.size(), held_out)) {
        TrainTrace t;
        t.frames = ds.frames[i];
        t.ve = expand_annotations(ds.spans[i], static_cast<int>(ds.frames[i].size()),
                                  ScheduleKind::HardLabels);
        train.push_back(std::move(t));
    }

    EmConfig em = cfg.em;
    em.mask = setup.mask;
    em.threads = 1;  // folds are parallelized above this level
    BeamConfig decode_beam = cfg.decode_beam;
    if (setup.collapse) {
        em.update_motion_cpts = false;
        em.beam.exact_mode = true;
        decode_beam.exact_mode = true;
    }

    ModelParams init = initialize_params(cfg.init_seed);
    if (setup.collapse) collapse_motion_params(init);

    const EmResult trained = em_train(train, init, map, em);
    const ViterbiResult vit = viterbi_decode(ds.frames[held_out], trained.params, map,
                                             decode_beam, nullptr, setup.mask);
    return vit.path;
}

template <class Fn>
void parallel_folds(std::size_t n, int threads, Fn&& fn) {
    int nt = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    nt = std::max(1, std::min<int>(nt, static_cast<int>(n)));
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(n);
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const std::string& e : errors)
        if (!e.empty()) throw ValidationError("experiment fold failed: " + e);
}

}  // namespace

AblationResult run_ablation(const Dataset& ds, const ExperimentConfig& cfg,
                            const std::vector<AblationRow>& rows) {
    if (ds.frames.size() < 2)
        throw std::invalid_argument("run_ablation: need at least two traces");
    require_fully_labeled(ds);
    for (const auto& t : ds.truth)
        if (t.empty()) throw ValidationError("run_ablation: dataset lacks ground truth");

    const std::size_t n = ds.frames.size();
    AblationResult result;

    for (AblationRow row : rows) {
        std::vector<std::vector<JointState>> decoded(n);
        switch (row) {
            case AblationRow::AdaBoostArgmax: {
                for (std::size_t i = 0; i < n; ++i) decoded[i] = argmax_decode(ds.frames[i]);
                break;
            }
            case AblationRow::IndependentHmm: {
                parallel_folds(n, cfg.threads, [&](std::size_t fold) {
                    const auto train_idx = fold_train_indices(n, fold);
                    const double delta = cfg.em.dirichlet_smoothing;
                    auto state_label = [](const auto& l) { return static_cast<int>(l.first); };
                    auto state_bins = [](const Frame& f, int c) { return f.msb.state_bins[c]; };
                    auto env_label = [](const auto& l) { return static_cast<int>(l.second); };
                    auto env_bins = [](const Frame& f, int c) { return f.msb.env_bins[c]; };

                    const SmallHmm hs = fit_small_hmm(kNumMotionStates, kNumMotionStates, ds,
                                                      train_idx, delta, state_label, state_bins);
                    const SmallHmm he = fit_small_hmm(kNumEnvironments, kNumEnvironments, ds,
                                                      train_idx, delta, env_label, env_bins);
                    const auto spath = small_hmm_viterbi(hs, ds.frames[fold], state_bins);
                    const auto epath = small_hmm_viterbi(he, ds.frames[fold], env_bins);
                    decoded[fold].resize(spath.size());
                    for (std::size_t k = 0; k < spath.size(); ++k) {
                        decoded[fold][k].state = static_cast<MotionState>(spath[k]);
                        decoded[fold][k].env = static_cast<Environment>(epath[k]);
                    }
                });
                break;
            }
            case AblationRow::JointSe:
            case AblationRow::JointSeGps:
            case AblationRow::JointSeGpsMap: {
                parallel_folds(n, cfg.threads, [&](std::size_t fold) {
                    decoded[fold] = run_joint_fold(ds, cfg, row, fold);
                });
                break;
            }
        }
        const EvalResult eval = evaluate_accuracy(decoded, ds.truth);
        result.rows.push_back({to_string(row), eval.state, eval.env});
    }
    return result;
}

void write_ablation_csv(const AblationResult& result, const std::string& path) {
    std::ostringstream os;
    os << "technique,state_accuracy,state_ci95,env_accuracy,env_ci95\n";
    for (const auto& row : result.rows)
        os << row.name << ',' << format_double(row.state.mean) << ','
           << format_double(row.state.ci95) << ',' << format_double(row.env.mean) << ','
           << format_double(row.env.ci95) << '\n';
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << os.str();
}

VeCurveResult run_ve_experiment(const Dataset& ds, const VeCurveConfig& cfg) {
    if (ds.frames.size() < 2)
        throw std::invalid_argument("run_ve_experiment: need at least two traces");
    require_fully_labeled(ds);
    for (const auto& t : ds.truth)
        if (t.empty()) throw ValidationError("run_ve_experiment: dataset lacks ground truth");

    const std::size_t n = ds.frames.size();
    BuildingMap map;
    map.width_cells = 1;
    map.height_cells = 1;

    EmConfig em = cfg.em;
    em.mask = FactorMask{false, false};
    em.update_motion_cpts = false;
    em.beam.exact_mode = true;
    em.threads = 1;

    BeamConfig decode_beam;
    decode_beam.exact_mode = true;

    // Spans for each (kind, percent) are precomputed per trace; folds then
    // train and decode in parallel.
    VeCurveResult result;

    auto run_setting = [&](const std::string& name,
                           const std::vector<std::vector<LabelSpan>>& spans_by_trace,
                           ScheduleKind kind, int percent) {
        std::vector<double> fold_acc(n, 0.0);
        parallel_folds(n, cfg.threads, [&](std::size_t fold) {
            std::vector<TrainTrace> train;
            for (std::size_t i : fold_train_indices(n, fold)) {
                TrainTrace t;
                t.frames = ds.frames[i];
                t.ve = expand_annotations(spans_by_trace[i],
                                          static_cast<int>(ds.frames[i].size()), kind);
                train.push_back(std::move(t));
            }
            ModelParams init = initialize_params(cfg.init_seed);
            collapse_motion_params(init);
            const EmResult trained = em_train(train, init, map, em);
            const ViterbiResult vit = viterbi_decode(ds.frames[fold], trained.params, map,
                                                     decode_beam, nullptr, em.mask);
            int ok = 0;
            for (std::size_t k = 0; k < vit.path.size(); ++k)
                if (vit.path[k].state == ds.truth[fold][k].state) ++ok;
            fold_acc[fold] = static_cast<double>(ok) / vit.path.size();
        });
        VeCurveResult::Point pt;
        pt.kind = name;
        pt.percent = percent;
        pt.state_acc = aggregate_accuracies(fold_acc);
        result.points.push_back(std::move(pt));
    };

    for (ScheduleKind kind : cfg.kinds) {
        for (int percent : cfg.percents) {
            std::vector<std::vector<LabelSpan>> spans_by_trace(n);
            for (std::size_t i = 0; i < n; ++i)
                spans_by_trace[i] = drop_labels(ds.spans[i], percent);
            run_setting(to_string(kind), spans_by_trace, kind, percent);
        }
    }

    if (cfg.random_single_repeats > 0) {
        std::vector<double> repeat_means;
        for (int r = 0; r < cfg.random_single_repeats; ++r) {
            std::vector<std::vector<LabelSpan>> spans_by_trace(n);
            for (std::size_t i = 0; i < n; ++i)
                spans_by_trace[i] = drop_labels_random_single(
                    ds.spans[i], cfg.init_seed * 1000003ull + r * 7919ull + i);
            const std::size_t before = result.points.size();
            run_setting("random_single_two_way", spans_by_trace,
                        ScheduleKind::TwoWayUniform, 100);
            repeat_means.push_back(result.points.back().state_acc.mean);
            result.points.resize(before);  // per-repeat points are aggregated below
        }
        VeCurveResult::Point pt;
        pt.kind = "random_single_two_way";
        pt.percent = 100;
        pt.state_acc = aggregate_accuracies(repeat_means);
        result.points.push_back(std::move(pt));
    }
    return result;
}

void write_ve_csv(const VeCurveResult& result, const std::string& path) {
    std::ostringstream os;
    os << "kind,percent,state_accuracy,ci95\n";
    for (const auto& pt : result.points)
        os << pt.kind << ',' << pt.percent << ',' << format_double(pt.state_acc.mean) << ','
           << format_double(pt.state_acc.ci95) << '\n';
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << os.str();
}

void emit_trace_plot(const std::vector<JointState>& decoded,
                     const std::vector<Frame>& frames, const BuildingMap& map,
                     const std::string& svg_path, const std::string& csv_path) {
    if (!frames.empty() && frames.size() != decoded.size())
        throw std::invalid_argument("emit_trace_plot: frame/path length mismatch");

    const double W = map.width_cells * kCellMeters;
    const double H = map.height_cells * kCellMeters;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << W << ' ' << H
        << "\" width=\"800\" height=\"" << 800.0 * H / std::max(W, 1.0) << "\">\n";
    svg << "<g transform=\"translate(0," << H << ") scale(1,-1)\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H
        << "\" fill=\"white\" stroke=\"black\" stroke-width=\"0.2\"/>\n";
    for (const Box& b : map.buildings)
        svg << "<rect x=\"" << b.min_x << "\" y=\"" << b.min_y << "\" width=\""
            << b.max_x - b.min_x << "\" height=\"" << b.max_y - b.min_y
            << "\" fill=\"#e8e8e8\" stroke=\"#666\" stroke-width=\"0.25\"/>\n";

    // GPS fixes: thin connected polyline with circle markers.
    std::vector<std::pair<double, double>> fixes;
    for (const Frame& f : frames)
        if (f.gps.has_value()) fixes.emplace_back(f.gps->x_m, f.gps->y_m);
    if (!fixes.empty()) {
        svg << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"0.15\" points=\"";
        for (const auto& [x, y] : fixes) svg << x << ',' << y << ' ';
        svg << "\"/>\n";
        for (const auto& [x, y] : fixes)
            svg << "<circle cx=\"" << x << "\" cy=\"" << y
                << "\" r=\"0.35\" fill=\"none\" stroke=\"black\" stroke-width=\"0.12\"/>\n";
    }

    // Decoded path: segments split exactly where the decoded environment
    // changes; outdoor/vehicle segments are lines, indoor frames are stars.
    auto segment_style = [](Environment e) {
        switch (e) {
            case Environment::Outdoors:
                return "fill=\"none\" stroke=\"#909090\" stroke-width=\"0.9\"";
            case Environment::Vehicle:
                return "fill=\"none\" stroke=\"#506080\" stroke-width=\"0.9\" "
                       "stroke-dasharray=\"1.5,0.8\"";
            case Environment::Indoors:
                return "";  // marker-based
        }
        return "";
    };
    std::size_t k = 0;
    while (k < decoded.size()) {
        std::size_t j = k;
        while (j < decoded.size() && decoded[j].env == decoded[k].env) ++j;
        if (decoded[k].env == Environment::Indoors) {
            for (std::size_t i = k; i < j; ++i) {
                const double x = cell_center_x(decoded[i].loc);
                const double y = cell_center_y(decoded[i].loc);
                svg << "<path d=\"M" << x - 0.5 << ' ' << y << " L" << x + 0.5 << ' ' << y
                    << " M" << x << ' ' << y - 0.5 << " L" << x << ' ' << y + 0.5 << " M"
                    << x - 0.35 << ' ' << y - 0.35 << " L" << x + 0.35 << ' ' << y + 0.35
                    << " M" << x - 0.35 << ' ' << y + 0.35 << " L" << x + 0.35 << ' '
                    << y - 0.35 << "\" stroke=\"#303030\" stroke-width=\"0.12\"/>\n";
            }
        } else {
            svg << "<polyline " << segment_style(decoded[k].env) << " points=\"";
            // Include the previous point so segments connect.
            for (std::size_t i = (k > 0 ? k - 1 : k); i < j; ++i)
                svg << cell_center_x(decoded[i].loc) << ',' << cell_center_y(decoded[i].loc)
                    << ' ';
            svg << "\"/>\n";
        }
        k = j;
    }
    svg << "</g>\n</svg>\n";

    std::ofstream out(svg_path);
    if (!out) throw ValidationError("cannot open for writing: " + svg_path);
    out << svg.str();

    std::ostringstream csv;
    csv << "x,y,state,env,gps_x,gps_y\n";
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        csv << format_double(cell_center_x(decoded[i].loc)) << ','
            << format_double(cell_center_y(decoded[i].loc)) << ','
            << to_string(decoded[i].state) << ',' << to_string(decoded[i].env) << ',';
        if (i < frames.size() && frames[i].gps.has_value())
            csv << format_double(frames[i].gps->x_m) << ','
                << format_double(frames[i].gps->y_m);
        else
            csv << ',';
        csv << '\n';
    }
    std::ofstream outc(csv_path);
    if (!outc) throw ValidationError("cannot open for writing: " + csv_path);
    outc << csv.str();
}

}  // namespace actloc
