#include "actloc/learning.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "actloc/errors.hpp"
#include "actloc/logmath.hpp"

namespace actloc {

using nlohmann::json;

void EmConfig::validate() const {
    if (max_iters < 1) throw ValidationError("em: max_iters must be >= 1");
    if (!(rel_ll_tolerance > 0.0)) throw ValidationError("em: rel_ll_tolerance must be > 0");
    if (!(dirichlet_smoothing > 0.0))
        throw ValidationError("em: dirichlet_smoothing must be > 0");
    beam.validate();
}

namespace {

inline int key_t(std::uint64_t k) { return static_cast<int>((k >> 24) & 0xff); }
inline int key_h(std::uint64_t k) { return static_cast<int>((k >> 16) & 0xff); }
inline int key_s(std::uint64_t k) { return static_cast<int>((k >> 8) & 0xff); }
inline int key_e(std::uint64_t k) { return static_cast<int>(k & 0xff); }

struct Stats {
    double env_trans[kNumEnvironments][kNumEnvironments] = {};
    double state_trans[kNumEnvironments][kNumMotionStates][kNumMotionStates] = {};
    double heading[kNumMotionStates][kNumHeadingBins] = {};
    double speed[kNumSpeedGroups][kNumSpeedBins][kNumSpeedBins] = {};
    double obs_state[kNumMotionStates][kNumMotionStates][kNumQuantBins] = {};
    double obs_env[kNumEnvironments][kNumEnvironments][kNumQuantBins] = {};
    double init_state[kNumMotionStates] = {};
    double init_env[kNumEnvironments] = {};
    double init_speed[kNumSpeedBins] = {};
    double init_heading[kNumHeadingBins] = {};

    void add(const Stats& o) {
        double* dst = reinterpret_cast<double*>(this);
        const double* src = reinterpret_cast<const double*>(&o);
        const std::size_t n = sizeof(Stats) / sizeof(double);
        for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
    }
};

class CountingSink : public PosteriorSink {
public:
    CountingSink(Stats& st, std::span<const Frame> frames) : st_(st), frames_(frames) {}

    void frame_mass(int k, std::uint64_t key, double p) override {
        const int s = key_s(key);
        const int e = key_e(key);
        const MsbObservation& m = frames_[k].msb;
        for (int i = 0; i < kNumMotionStates; ++i)
            st_.obs_state[i][s][m.state_bins[i] - 1] += p;
        for (int i = 0; i < kNumEnvironments; ++i)
            st_.obs_env[i][e][m.env_bins[i] - 1] += p;
        if (k == 0) {
            st_.init_state[s] += p;
            st_.init_env[e] += p;
            st_.init_speed[key_t(key)] += p;
            st_.init_heading[key_h(key)] += p;
        }
    }

    void transition_mass(int, std::uint64_t from, std::uint64_t to, double p) override {
        const int s1 = key_s(to);
        const int e1 = key_e(to);
        st_.env_trans[key_e(from)][e1] += p;
        st_.state_trans[e1][key_s(from)][s1] += p;
        st_.heading[s1][heading_offset_index(key_h(from), key_h(to))] += p;
        st_.speed[speed_group(static_cast<MotionState>(s1))][key_t(from)][key_t(to)] += p;
    }

private:
    Stats& st_;
    std::span<const Frame> frames_;
};

// Smoothed re-estimate of one CPT row. Rows with no expected mass keep
// their previous values; structurally forbidden cells stay exactly zero.
void mstep_row(double* row, const double* counts, int n, double delta,
               const bool* forbidden = nullptr) {
    double raw = 0.0;
    int live = 0;
    for (int i = 0; i < n; ++i) {
        if (forbidden && forbidden[i]) continue;
        raw += counts[i];
        ++live;
    }
    if (raw == 0.0) return;
    const double denom = raw + delta * live;
    for (int i = 0; i < n; ++i) {
        if (forbidden && forbidden[i]) {
            row[i] = 0.0;
            continue;
        }
        row[i] = (counts[i] + delta) / denom;
    }
}

void mstep(ModelParams& p, const Stats& st, const EmConfig& cfg) {
    const double d = cfg.dirichlet_smoothing;

    for (int e = 0; e < kNumEnvironments; ++e)
        mstep_row(p.env_trans[e].data(), st.env_trans[e], kNumEnvironments, d);

    for (int e = 0; e < kNumEnvironments; ++e) {
        bool forbidden[kNumMotionStates];
        for (int s = 0; s < kNumMotionStates; ++s)
            forbidden[s] = is_structural_zero(static_cast<Environment>(e),
                                              static_cast<MotionState>(s));
        for (int sp = 0; sp < kNumMotionStates; ++sp)
            mstep_row(p.state_trans[e][sp].data(), st.state_trans[e][sp], kNumMotionStates,
                      d, forbidden);
    }

    for (int i = 0; i < kNumMotionStates; ++i)
        for (int s = 0; s < kNumMotionStates; ++s)
            mstep_row(p.obs_state[i][s].data(), st.obs_state[i][s], kNumQuantBins, d);
    for (int i = 0; i < kNumEnvironments; ++i)
        for (int e = 0; e < kNumEnvironments; ++e)
            mstep_row(p.obs_env[i][e].data(), st.obs_env[i][e], kNumQuantBins, d);

    mstep_row(p.init_state.data(), st.init_state, kNumMotionStates, d);
    mstep_row(p.init_env.data(), st.init_env, kNumEnvironments, d);

    if (cfg.update_motion_cpts) {
        for (int s = 0; s < kNumMotionStates; ++s)
            mstep_row(p.heading_trans[s].data(), st.heading[s], kNumHeadingBins, d);
        for (int g = 0; g < kNumSpeedGroups; ++g)
            for (int t = 0; t < kNumSpeedBins; ++t)
                mstep_row(p.speed_trans[g][t].data(), st.speed[g][t], kNumSpeedBins, d);
        mstep_row(p.init_speed.data(), st.init_speed, kNumSpeedBins, d);
        mstep_row(p.init_heading.data(), st.init_heading, kNumHeadingBins, d);
    }
}

}  // namespace

EmResult em_train(std::span<const TrainTrace> traces, const ModelParams& init,
                  const BuildingMap& map, const EmConfig& config) {
    config.validate();
    if (traces.empty()) throw std::invalid_argument("em_train: no traces");
    validate_params(init);

    int threads = config.threads > 0 ? config.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(traces.size())));

    EmResult result;
    result.params = init;

    for (int iter = 0; iter < config.max_iters; ++iter) {
        std::vector<Stats> stats(traces.size());
        std::vector<double> lls(traces.size(), 0.0);
        std::vector<std::string> errors(traces.size());

        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= traces.size()) return;
                try {
                    CountingSink sink(stats[i], traces[i].frames);
                    const VeSchedule* ve =
                        traces[i].ve.has_value() ? &*traces[i].ve : nullptr;
                    lls[i] = forward_backward_visit(traces[i].frames, result.params, map,
                                                    config.beam, ve, config.mask, sink);
                } catch (const InferenceCollapseError& e) {
                    std::ostringstream os;
                    os << "em_train: trace " << i << ": " << e.what();
                    errors[i] = os.str();
                } catch (const std::exception& e) {
                    errors[i] = std::string("em_train: trace ") + std::to_string(i) + ": " +
                                e.what();
                }
            }
        };
        if (threads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        for (std::size_t i = 0; i < traces.size(); ++i)
            if (!errors[i].empty()) throw InferenceCollapseError(-1, errors[i]);

        // Fixed-order reduction keeps results independent of thread count.
        Stats total;
        double ll = 0.0;
        for (std::size_t i = 0; i < traces.size(); ++i) {
            total.add(stats[i]);
            ll += lls[i];
        }
        result.ll_per_iter.push_back(ll);

        if (iter > 0) {
            const double prev = result.ll_per_iter[iter - 1];
            if ((ll - prev) / std::abs(prev) < config.rel_ll_tolerance) break;
        }
        mstep(result.params, total, config);
    }
    validate_params(result.params);
    return result;
}

ModelParams initialize_params(std::uint64_t seed, double jitter) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    auto fill_row = [&](double* row, int n, const bool* forbidden = nullptr) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            if (forbidden && forbidden[i]) {
                row[i] = 0.0;
                continue;
            }
            row[i] = 1.0 + jitter * u(rng);
            sum += row[i];
        }
        for (int i = 0; i < n; ++i)
            if (!(forbidden && forbidden[i])) row[i] /= sum;
    };

    ModelParams p;
    for (int e = 0; e < kNumEnvironments; ++e)
        fill_row(p.env_trans[e].data(), kNumEnvironments);
    for (int e = 0; e < kNumEnvironments; ++e) {
        bool forbidden[kNumMotionStates];
        for (int s = 0; s < kNumMotionStates; ++s)
            forbidden[s] = is_structural_zero(static_cast<Environment>(e),
                                              static_cast<MotionState>(s));
        for (int sp = 0; sp < kNumMotionStates; ++sp)
            fill_row(p.state_trans[e][sp].data(), kNumMotionStates, forbidden);
    }
    for (int s = 0; s < kNumMotionStates; ++s)
        fill_row(p.heading_trans[s].data(), kNumHeadingBins);
    for (int g = 0; g < kNumSpeedGroups; ++g)
        for (int t = 0; t < kNumSpeedBins; ++t)
            fill_row(p.speed_trans[g][t].data(), kNumSpeedBins);
    for (int i = 0; i < kNumMotionStates; ++i)
        for (int s = 0; s < kNumMotionStates; ++s)
            fill_row(p.obs_state[i][s].data(), kNumQuantBins);
    for (int i = 0; i < kNumEnvironments; ++i)
        for (int e = 0; e < kNumEnvironments; ++e)
            fill_row(p.obs_env[i][e].data(), kNumQuantBins);
    fill_row(p.init_state.data(), kNumMotionStates);
    fill_row(p.init_env.data(), kNumEnvironments);
    fill_row(p.init_speed.data(), kNumSpeedBins);
    fill_row(p.init_heading.data(), kNumHeadingBins);
    validate_params(p);
    return p;
}

void collapse_motion_params(ModelParams& p) {
    p.init_speed.fill(0.0);
    p.init_speed[0] = 1.0;
    p.init_heading.fill(0.0);
    p.init_heading[0] = 1.0;
    for (int g = 0; g < kNumSpeedGroups; ++g)
        for (int t = 0; t < kNumSpeedBins; ++t)
            for (int t2 = 0; t2 < kNumSpeedBins; ++t2)
                p.speed_trans[g][t][t2] = t2 == t ? 1.0 : 0.0;
    for (int s = 0; s < kNumMotionStates; ++s) {
        p.heading_trans[s].fill(0.0);
        p.heading_trans[s][4] = 1.0;  // offset 0
    }
}

std::vector<LabelSpan> drop_labels(const std::vector<LabelSpan>& spans, int percent) {
    if (percent < 0 || percent > 100)
        throw std::invalid_argument("drop_labels: percent outside 0..100");
    std::vector<LabelSpan> out;
    out.reserve(spans.size());
    for (const LabelSpan& sp : spans) {
        const int len = sp.end - sp.start + 1;
        const int keep = std::max(1, (len * (100 - percent) + 99) / 100);
        const int front = (len - keep) / 2;
        LabelSpan t = sp;
        t.start = sp.start + front;
        t.end = t.start + keep - 1;
        out.push_back(t);
    }
    return out;
}

std::vector<LabelSpan> drop_labels_random_single(const std::vector<LabelSpan>& spans,
                                                 std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<LabelSpan> out;
    out.reserve(spans.size());
    for (const LabelSpan& sp : spans) {
        std::uniform_int_distribution<int> pick(sp.start, sp.end);
        const int k = pick(rng);
        out.push_back(LabelSpan{k, k, sp.state, sp.env});
    }
    return out;
}

std::vector<LabelSpan> load_spans(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open annotation file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    std::vector<LabelSpan> spans;
    try {
        for (const json& js : j) {
            LabelSpan sp;
            sp.start = js.at("start").get<int>();
            sp.end = js.at("end").get<int>();
            sp.state = motion_state_from_string(js.at("state").get<std::string>());
            sp.env = environment_from_string(js.at("env").get<std::string>());
            spans.push_back(sp);
        }
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return spans;
}

void save_spans(const std::vector<LabelSpan>& spans, const std::string& path) {
    json j = json::array();
    for (const LabelSpan& sp : spans)
        j.push_back({{"start", sp.start},
                     {"end", sp.end},
                     {"state", to_string(sp.state)},
                     {"env", to_string(sp.env)}});
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace actloc
