#include "actloc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "actloc/errors.hpp"
#include "actloc/logmath.hpp"

namespace actloc {

void BeamConfig::validate() const {
    if (max_states < 1) throw ValidationError("beam: max_states must be >= 1");
    if (!(log_threshold >= 0.0)) throw ValidationError("beam: log_threshold must be >= 0");
}

namespace {

// The engine works in the probability domain with per-frame rescaling
// (forward: by the frame normalizer, Viterbi: by the frame maximum), so
// the hot loops are pure multiply-accumulate. Public scores are logs.

inline int key_x(std::uint64_t k) { return static_cast<int>((k >> 48) & 0xffff); }
inline int key_y(std::uint64_t k) { return static_cast<int>((k >> 32) & 0xffff); }
inline int key_t(std::uint64_t k) { return static_cast<int>((k >> 24) & 0xff); }
inline int key_h(std::uint64_t k) { return static_cast<int>((k >> 16) & 0xff); }
inline int key_s(std::uint64_t k) { return static_cast<int>((k >> 8) & 0xff); }
inline int key_e(std::uint64_t k) { return static_cast<int>(k & 0xff); }
inline int key_se(std::uint64_t k) { return key_s(k) * kNumEnvironments + key_e(k); }

inline std::uint64_t make_key(int x, int y, int t, int h, int s, int e) {
    return (static_cast<std::uint64_t>(x) << 48) | (static_cast<std::uint64_t>(y) << 32) |
           (static_cast<std::uint64_t>(t) << 24) | (static_cast<std::uint64_t>(h) << 16) |
           (static_cast<std::uint64_t>(s) << 8) | static_cast<std::uint64_t>(e);
}

inline std::uint64_t mix_hash(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Open-addressing accumulator reused across frames; emptiness is tracked
// with an epoch tag so clearing is O(occupied).
class Accumulator {
public:
    void reset(std::size_t expected) {
        std::size_t cap = 1;
        while (cap < expected * 2) cap <<= 1;
        if (cap > slots_.size()) {
            slots_.assign(cap, Slot{});
            mask_ = cap - 1;
        }
        clear();
    }

    void clear() {
        ++epoch_;
        order_.clear();
        count_ = 0;
    }

    void add(std::uint64_t key, double val) {
        Slot& s = find(key);
        if (s.epoch != epoch_) {
            s = Slot{key, val, 0, epoch_};
            order_.push_back(static_cast<std::uint32_t>(&s - slots_.data()));
            maybe_grow();
        } else {
            s.val += val;
        }
    }

    void max(std::uint64_t key, double val, std::uint32_t aux) {
        Slot& s = find(key);
        if (s.epoch != epoch_) {
            s = Slot{key, val, aux, epoch_};
            order_.push_back(static_cast<std::uint32_t>(&s - slots_.data()));
            maybe_grow();
        } else if (val > s.val) {  // ties keep the earliest (smallest pred key)
            s.val = val;
            s.aux = aux;
        }
    }

    template <class F>
    void for_each(F&& f) const {
        for (std::uint32_t idx : order_) {
            const Slot& s = slots_[idx];
            f(s.key, s.val, s.aux);
        }
    }

    std::size_t size() const { return count_; }

private:
    struct Slot {
        std::uint64_t key = 0;
        double val = 0.0;
        std::uint32_t aux = 0;
        std::uint32_t epoch = 0;
    };

    Slot& find(std::uint64_t key) {
        std::size_t i = mix_hash(key) & mask_;
        while (true) {
            Slot& s = slots_[i];
            if (s.epoch != epoch_ || s.key == key) return s;
            i = (i + 1) & mask_;
        }
    }

    void maybe_grow() {
        ++count_;
        if (count_ * 3 < slots_.size() * 2) return;
        std::vector<Slot> old;
        old.swap(slots_);
        std::vector<std::uint32_t> old_order;
        old_order.swap(order_);
        slots_.assign(old.size() * 2, Slot{});
        mask_ = slots_.size() - 1;
        for (std::uint32_t idx : old_order) {
            const Slot& s = old[idx];
            std::size_t i = mix_hash(s.key) & mask_;
            while (slots_[i].epoch == epoch_) i = (i + 1) & mask_;
            slots_[i] = s;
            order_.push_back(static_cast<std::uint32_t>(i));
        }
    }

    std::vector<Slot> slots_;
    std::vector<std::uint32_t> order_;
    std::size_t mask_ = 0;
    std::size_t count_ = 0;
    std::uint32_t epoch_ = 0;
};

struct Candidate {
    std::uint64_t key;
    double val;
    std::uint32_t aux;
};

// Sub-cell displacement split; offsets are location independent, only
// boundary handling needs the concrete cell.
struct VelPattern {
    int n = 0;
    struct Entry {
        int ox, oy;
        double w;
    } e[4];
    int min_ox = 0, max_ox = 0, min_oy = 0, max_oy = 0;
};

struct ResolvedCell {
    int x, y;
    double w;
};

struct Ctx {
    const ModelParams& P;
    const BuildingMap& map;
    FactorMask mask;
    int W, H;
    std::vector<std::uint8_t> cellcls;
    std::array<VelPattern, kNumSpeedBins * kNumHeadingBins> pat;
    std::vector<int> adm[kNumEnvironments];  // admissible states per environment
    std::vector<std::pair<int, int>> adm_se;
    int group[kNumMotionStates];
    double init_loc_p;

    Ctx(const ModelParams& p, const BuildingMap& m, FactorMask fm)
        : P(p), map(m), mask(fm), W(m.width_cells), H(m.height_cells) {
        map.validate();
        cellcls.resize(static_cast<std::size_t>(W) * H);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                cellcls[static_cast<std::size_t>(y) * W + x] =
                    static_cast<std::uint8_t>(map_class(GridLocation{x, y}, map));

        for (int t = 0; t < kNumSpeedBins; ++t) {
            for (int h = 0; h < kNumHeadingBins; ++h) {
                VelPattern& vp = pat[t * kNumHeadingBins + h];
                double dx, dy;
                heading_direction(h, &dx, &dy);
                const double ux = kSpeedBinsMps[t] * kFrameDt * dx;
                const double uy = kSpeedBinsMps[t] * kFrameDt * dy;
                const int ix = static_cast<int>(std::floor(ux));
                const int iy = static_cast<int>(std::floor(uy));
                const double fx = ux - ix;
                const double fy = uy - iy;
                const double wx[2] = {1.0 - fx, fx};
                const double wy[2] = {1.0 - fy, fy};
                for (int a = 0; a < 2; ++a) {
                    for (int b = 0; b < 2; ++b) {
                        const double w = wx[a] * wy[b];
                        if (w == 0.0) continue;
                        vp.e[vp.n++] = {ix + a, iy + b, w};
                    }
                }
                vp.min_ox = vp.max_ox = vp.e[0].ox;
                vp.min_oy = vp.max_oy = vp.e[0].oy;
                for (int i = 1; i < vp.n; ++i) {
                    vp.min_ox = std::min(vp.min_ox, vp.e[i].ox);
                    vp.max_ox = std::max(vp.max_ox, vp.e[i].ox);
                    vp.min_oy = std::min(vp.min_oy, vp.e[i].oy);
                    vp.max_oy = std::max(vp.max_oy, vp.e[i].oy);
                }
            }
        }

        for (int e = 0; e < kNumEnvironments; ++e)
            for (int s = 0; s < kNumMotionStates; ++s)
                if (is_admissible(static_cast<MotionState>(s), static_cast<Environment>(e))) {
                    adm[e].push_back(s);
                    adm_se.emplace_back(s, e);
                }
        for (int s = 0; s < kNumMotionStates; ++s)
            group[s] = speed_group(static_cast<MotionState>(s));
        init_loc_p = 1.0 / (static_cast<double>(W) * H);
    }

    int cls(int x, int y) const { return cellcls[static_cast<std::size_t>(y) * W + x]; }

    int resolve(const VelPattern& vp, int x, int y, ResolvedCell out[4]) const {
        if (x + vp.min_ox >= 0 && x + vp.max_ox < W && y + vp.min_oy >= 0 &&
            y + vp.max_oy < H) {
            for (int i = 0; i < vp.n; ++i)
                out[i] = {x + vp.e[i].ox, y + vp.e[i].oy, vp.e[i].w};
            return vp.n;
        }
        int n = 0;
        double sum = 0.0;
        for (int i = 0; i < vp.n; ++i) {
            const int cx = x + vp.e[i].ox;
            const int cy = y + vp.e[i].oy;
            if (cx < 0 || cx >= W || cy < 0 || cy >= H) continue;
            out[n++] = {cx, cy, vp.e[i].w};
            sum += vp.e[i].w;
        }
        for (int i = 0; i < n; ++i) out[i].w /= sum;
        return n;
    }
};

// Per-frame observation factors: msb * VE * map folded into a per-(s,e)
// per-map-class table, GPS Gaussian cached per cell.
struct FrameScorer {
    double se_cls[kNumSePairs][2];
    bool ve_skip[kNumSePairs];
    bool has_gauss = false;
    double gx = 0, gy = 0, qcoef = 0, gconst = 0;

    std::vector<double>* cache;
    std::vector<std::uint32_t>* cache_epoch;
    std::uint32_t epoch;
    const Ctx* ctx;

    FrameScorer(const Ctx& c, const Frame& f, const VeSchedule* ve,
                std::vector<double>& gcache, std::vector<std::uint32_t>& gepoch,
                std::uint32_t ep)
        : cache(&gcache), cache_epoch(&gepoch), epoch(ep), ctx(&c) {
        f.msb.validate();
        for (int s = 0; s < kNumMotionStates; ++s) {
            for (int e = 0; e < kNumEnvironments; ++e) {
                const int se = s * kNumEnvironments + e;
                ve_skip[se] = true;
                se_cls[se][0] = se_cls[se][1] = 0.0;
                if (!is_admissible(static_cast<MotionState>(s), static_cast<Environment>(e)))
                    continue;
                double w = 1.0;
                for (int i = 0; i < kNumMotionStates; ++i)
                    w *= c.P.obs_state[i][s][f.msb.state_bins[i] - 1];
                for (int i = 0; i < kNumEnvironments; ++i)
                    w *= c.P.obs_env[i][e][f.msb.env_bins[i] - 1];
                if (ve) w *= ve->frames[f.index][se];
                if (w <= 0.0) continue;
                ve_skip[se] = false;
                const int ec = env_map_class(static_cast<Environment>(e));
                if (c.mask.map) {
                    se_cls[se][0] = w * c.P.map_cpt[ec][0];
                    se_cls[se][1] = w * c.P.map_cpt[ec][1];
                } else {
                    se_cls[se][0] = se_cls[se][1] = w;
                }
            }
        }
        if (c.mask.gps && f.gps.has_value()) {
            if (!(f.gps->hdop > 0.0))
                throw std::invalid_argument("inference: frame with non-positive hdop");
            if (f.gps->hdop <= kHdopGate) {
                has_gauss = true;
                gx = f.gps->x_m;
                gy = f.gps->y_m;
                const double sigma2 = 2.0 * f.gps->hdop;
                qcoef = c.P.gps_exponent / (2.0 * sigma2);
                gconst = c.P.gps_exponent * -std::log(2.0 * std::numbers::pi * sigma2);
            }
        }
    }

    double gauss(int x, int y) const {
        if (!has_gauss) return 1.0;
        const std::size_t idx = static_cast<std::size_t>(y) * ctx->W + x;
        if ((*cache_epoch)[idx] == epoch) return (*cache)[idx];
        const double dx = gx - (x + 0.5);
        const double dy = gy - (y + 0.5);
        const double v = std::exp(gconst - qcoef * (dx * dx + dy * dy));
        (*cache)[idx] = v;
        (*cache_epoch)[idx] = epoch;
        return v;
    }

    double obs(std::uint64_t key) const {
        const int x = key_x(key);
        const int y = key_y(key);
        return se_cls[key_se(key)][ctx->cls(x, y)] * gauss(x, y);
    }
};

// Keep candidates above the threshold floor, cap at max_states with
// (value desc, key asc) tie-breaking, and sort the survivors by key.
void select_candidates(std::vector<Candidate>& cands, double floor_val, int max_states,
                       bool exact) {
    if (!exact) {
        std::size_t out = 0;
        for (std::size_t i = 0; i < cands.size(); ++i)
            if (cands[i].val >= floor_val) cands[out++] = cands[i];
        cands.resize(out);
        if (cands.size() > static_cast<std::size_t>(max_states)) {
            auto better = [](const Candidate& a, const Candidate& b) {
                if (a.val != b.val) return a.val > b.val;
                return a.key < b.key;
            };
            std::nth_element(cands.begin(), cands.begin() + max_states, cands.end(), better);
            cands.resize(max_states);
        }
    }
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return a.key < b.key; });
}

struct EngineFrame {
    std::vector<std::uint64_t> keys;
    std::vector<double> val;        // forward: normalized alpha; viterbi: score / max
    std::vector<std::uint32_t> bp;  // viterbi only
    double lin_c = 1.0;             // forward frame normalizer (linear)
    double log_shift = 0.0;         // log(normalizer) or log(frame max)
};

class Engine {
public:
    Engine(std::span<const Frame> frames, const ModelParams& params, const BuildingMap& map,
           const BeamConfig& beam, const VeSchedule* ve, FactorMask mask)
        : frames_(frames), ctx_(params, map, mask), beam_(beam), ve_(ve) {
        beam.validate();
        validate_params(params);
        if (frames.empty()) throw std::invalid_argument("inference: empty frame sequence");
        for (std::size_t k = 0; k < frames.size(); ++k)
            if (frames[k].index != static_cast<int>(k))
                throw ValidationError("inference: frame indices must be consecutive from 0");
        if (ve && ve->length() != static_cast<int>(frames.size()))
            throw std::invalid_argument("inference: schedule length != trace length");
        gauss_cache_.assign(static_cast<std::size_t>(ctx_.W) * ctx_.H, 0.0);
        gauss_epoch_.assign(gauss_cache_.size(), 0);
    }

    double backward(const std::vector<EngineFrame>& lattice, PosteriorSink& sink) {
        const int n = static_cast<int>(lattice.size());
        double ll = 0.0;
        for (const EngineFrame& f : lattice) ll += f.log_shift;

        const EngineFrame& last = lattice[n - 1];
        std::vector<double> b(last.keys.size(), 1.0);
        for (std::size_t i = 0; i < last.keys.size(); ++i)
            sink.frame_mass(n - 1, last.keys[i], last.val[i]);

        std::vector<double> obs_next, bnew;
        ResolvedCell cells[4];
        for (int k = n - 2; k >= 0; --k) {
            const EngineFrame& cur = lattice[k];
            const EngineFrame& nxt = lattice[k + 1];
            FrameScorer sc = make_scorer(k + 1);
            obs_next.assign(nxt.keys.size(), 0.0);
            for (std::size_t i = 0; i < nxt.keys.size(); ++i)
                obs_next[i] = sc.obs(nxt.keys[i]);
            // True division: x/x is exact, so hard-labeled frames carry
            // posterior mass of exactly one through EM.
            const double c_next = nxt.lin_c;

            bnew.assign(cur.keys.size(), 0.0);
            for (std::size_t ui = 0; ui < cur.keys.size(); ++ui) {
                const std::uint64_t ukey = cur.keys[ui];
                const double alpha = cur.val[ui];
                double acc = 0.0;
                expand_one(ukey, 1.0, sc, cells, [&](std::uint64_t vkey, double trans) {
                    const auto it =
                        std::lower_bound(nxt.keys.begin(), nxt.keys.end(), vkey);
                    if (it == nxt.keys.end() || *it != vkey) return;
                    const std::size_t vi =
                        static_cast<std::size_t>(it - nxt.keys.begin());
                    const double contrib = trans * obs_next[vi] * b[vi];
                    if (contrib <= 0.0) return;
                    acc += contrib;
                    sink.transition_mass(k, ukey, vkey, alpha * contrib / c_next);
                });
                bnew[ui] = acc / c_next;
                sink.frame_mass(k, ukey, alpha * bnew[ui]);
            }
            b.swap(bnew);
        }
        return ll;
    }

    const Ctx& ctx() const { return ctx_; }
    std::span<const Frame> frames() const { return frames_; }

private:
    FrameScorer make_scorer(int k) {
        ++gauss_gen_;
        return FrameScorer(ctx_, frames_[k], ve_, gauss_cache_, gauss_epoch_, gauss_gen_);
    }

    void enumerate_initial(const FrameScorer& sc, std::vector<Candidate>& cands) {
        cands.clear();
        const ModelParams& P = ctx_.P;
        double best = 0.0;
        // Pass 1 finds the frame maximum so pass 2 can apply the beam
        // threshold while collecting.
        for (int pass = 0; pass < 2; ++pass) {
            const double floor_val =
                beam_.exact_mode ? 0.0 : best * std::exp(-beam_.log_threshold);
            for (int y = 0; y < ctx_.H; ++y) {
                for (int x = 0; x < ctx_.W; ++x) {
                    const double g = sc.gauss(x, y);
                    if (g <= 0.0) continue;
                    const int cls = ctx_.cls(x, y);
                    for (const auto& [s, e] : ctx_.adm_se) {
                        const int se = s * kNumEnvironments + e;
                        const double o = sc.se_cls[se][cls];
                        if (o <= 0.0) continue;
                        const double base = o * g * P.init_state[s] * P.init_env[e] *
                                            ctx_.init_loc_p;
                        if (base <= 0.0) continue;
                        for (int t = 0; t < kNumSpeedBins; ++t) {
                            const double bt = base * P.init_speed[t];
                            if (bt <= 0.0) continue;
                            for (int h = 0; h < kNumHeadingBins; ++h) {
                                const double v = bt * P.init_heading[h];
                                if (v <= 0.0) continue;
                                if (pass == 0) {
                                    if (v > best) best = v;
                                } else if (v >= floor_val) {
                                    cands.push_back({make_key(x, y, t, h, s, e), v, 0});
                                }
                            }
                        }
                    }
                }
            }
            if (pass == 0 && best <= 0.0) break;  // collapse handled downstream
        }
    }

    template <class Emit>
    void expand_one(std::uint64_t ukey, double base_val, const FrameScorer& sc,
                    ResolvedCell* cells, Emit&& emit) {
        const ModelParams& P = ctx_.P;
        const int ux = key_x(ukey), uy = key_y(ukey);
        const int ut = key_t(ukey), uh = key_h(ukey);
        const int us = key_s(ukey), ue = key_e(ukey);

        const VelPattern& vp = ctx_.pat[ut * kNumHeadingBins + uh];
        const int nc = ctx_.resolve(vp, ux, uy, cells);
        for (int ci = 0; ci < nc; ++ci) {
            const double wl = base_val * cells[ci].w;
            const std::uint64_t lkey = (static_cast<std::uint64_t>(cells[ci].x) << 48) |
                                       (static_cast<std::uint64_t>(cells[ci].y) << 32);
            for (int e2 = 0; e2 < kNumEnvironments; ++e2) {
                const double we = wl * P.env_trans[ue][e2];
                if (we <= 0.0) continue;
                for (int s2 : ctx_.adm[e2]) {
                    if (sc.ve_skip[s2 * kNumEnvironments + e2]) continue;
                    const double ws = we * P.state_trans[e2][us][s2];
                    if (ws <= 0.0) continue;
                    const double* sp = P.speed_trans[ctx_.group[s2]][ut].data();
                    const double* hd = P.heading_trans[s2].data();
                    const std::uint64_t sekey = lkey | (static_cast<std::uint64_t>(s2) << 8) |
                                                static_cast<std::uint64_t>(e2);
                    for (int t2 = 0; t2 < kNumSpeedBins; ++t2) {
                        const double wt = ws * sp[t2];
                        if (wt <= 0.0) continue;
                        const std::uint64_t tkey =
                            sekey | (static_cast<std::uint64_t>(t2) << 24);
                        for (int h2 = 0; h2 < kNumHeadingBins; ++h2) {
                            const double w = wt * hd[(h2 - uh + 12) & 7];
                            if (w <= 0.0) continue;
                            emit(tkey | (static_cast<std::uint64_t>(h2) << 16), w);
                        }
                    }
                }
            }
        }
    }

    void expand(const EngineFrame& prev, bool viterbi) {
        // Retained states are iterated in key order, so accumulation order
        // (and therefore floating-point results) is reproducible.
        FrameScorer& sc = *cur_scorer_;
        ResolvedCell cells[4];
        for (std::size_t ui = 0; ui < prev.keys.size(); ++ui) {
            const double a = prev.val[ui];
            if (a <= 0.0) continue;
            if (viterbi) {
                expand_one(prev.keys[ui], a, sc, cells,
                           [&](std::uint64_t key, double w) {
                               acc_.max(key, w, static_cast<std::uint32_t>(ui));
                           });
            } else {
                expand_one(prev.keys[ui], a, sc, cells,
                           [&](std::uint64_t key, double w) { acc_.add(key, w); });
            }
        }
    }

    EngineFrame finish_frame(int k, std::vector<Candidate>& cands, bool viterbi) {
        double best = 0.0;
        for (const Candidate& c : cands) best = std::max(best, c.val);
        if (!(best > 0.0)) {
            std::ostringstream os;
            os << "all states pruned to zero probability at frame " << k;
            throw InferenceCollapseError(k, os.str());
        }
        select_candidates(cands, best * std::exp(-beam_.log_threshold), beam_.max_states,
                          beam_.exact_mode);

        EngineFrame out;
        out.keys.reserve(cands.size());
        out.val.reserve(cands.size());
        if (viterbi) out.bp.reserve(cands.size());
        if (viterbi) {
            out.log_shift = std::log(best);
            for (const Candidate& c : cands) {
                out.keys.push_back(c.key);
                out.val.push_back(c.val / best);
                out.bp.push_back(c.aux);
            }
        } else {
            double c_lin = 0.0;
            for (const Candidate& c : cands) c_lin += c.val;
            out.lin_c = c_lin;
            out.log_shift = std::log(c_lin);
            for (const Candidate& c : cands) {
                out.keys.push_back(c.key);
                out.val.push_back(c.val / c_lin);
            }
        }
        return out;
    }

public:
    // viterbi: max-accumulate with backpointers and rescale by the frame
    // max; otherwise sum-accumulate and rescale by the frame normalizer.
    std::vector<EngineFrame> run_forward_impl(bool viterbi) {
        std::vector<EngineFrame> lattice;
        lattice.reserve(frames_.size());
        std::vector<Candidate> cands;

        {
            FrameScorer sc = make_scorer(0);
            cur_scorer_ = &sc;
            enumerate_initial(sc, cands);
            lattice.push_back(finish_frame(0, cands, viterbi));
        }
        for (std::size_t k = 1; k < frames_.size(); ++k) {
            FrameScorer sc = make_scorer(static_cast<int>(k));
            cur_scorer_ = &sc;
            const EngineFrame& prev = lattice.back();
            acc_.reset(prev.keys.size() * 64 + 1024);
            expand(prev, viterbi);
            cands.clear();
            cands.reserve(acc_.size());
            acc_.for_each([&](std::uint64_t key, double val, std::uint32_t aux) {
                const double o = sc.obs(key);
                if (val > 0.0 && o > 0.0) cands.push_back({key, val * o, aux});
            });
            lattice.push_back(finish_frame(static_cast<int>(k), cands, viterbi));
        }
        cur_scorer_ = nullptr;
        return lattice;
    }

private:
    std::span<const Frame> frames_;
    Ctx ctx_;
    BeamConfig beam_;
    const VeSchedule* ve_;
    Accumulator acc_;
    std::vector<double> gauss_cache_;
    std::vector<std::uint32_t> gauss_epoch_;
    std::uint32_t gauss_gen_ = 0;
    FrameScorer* cur_scorer_ = nullptr;
};

}  // namespace

ForwardResult forward_filter(std::span<const Frame> frames, const ModelParams& params,
                             const BuildingMap& map, const BeamConfig& beam,
                             const VeSchedule* ve, FactorMask mask) {
    Engine eng(frames, params, map, beam, ve, mask);
    const std::vector<EngineFrame> lattice = eng.run_forward_impl(false);

    ForwardResult out;
    out.posteriors.reserve(lattice.size());
    for (const EngineFrame& f : lattice) {
        FramePosterior fp;
        fp.log_normalizer = f.log_shift;
        fp.probs.reserve(f.keys.size());
        for (std::size_t i = 0; i < f.keys.size(); ++i)
            fp.probs.emplace_back(state_from_key(f.keys[i]), f.val[i]);
        out.posteriors.push_back(std::move(fp));
        out.log_likelihood += f.log_shift;
    }
    return out;
}

ViterbiResult viterbi_decode(std::span<const Frame> frames, const ModelParams& params,
                             const BuildingMap& map, const BeamConfig& beam,
                             const VeSchedule* ve, FactorMask mask) {
    Engine eng(frames, params, map, beam, ve, mask);
    const std::vector<EngineFrame> lattice = eng.run_forward_impl(true);

    const EngineFrame& last = lattice.back();
    std::size_t best = 0;
    for (std::size_t i = 1; i < last.keys.size(); ++i)
        if (last.val[i] > last.val[best]) best = i;  // keys ascending: ties keep smallest

    ViterbiResult out;
    out.log_score = std::log(last.val[best]);
    for (const EngineFrame& f : lattice) out.log_score += f.log_shift;

    std::vector<std::uint64_t> rev;
    std::size_t idx = best;
    for (std::size_t k = lattice.size(); k-- > 0;) {
        rev.push_back(lattice[k].keys[idx]);
        if (k > 0) idx = lattice[k].bp[idx];
    }
    out.path.reserve(rev.size());
    for (std::size_t i = rev.size(); i-- > 0;) out.path.push_back(state_from_key(rev[i]));
    return out;
}

namespace {

class MaterializingSink : public PosteriorSink {
public:
    explicit MaterializingSink(std::size_t n) : marginals_(n), pairwise_(n > 0 ? n - 1 : 0) {}

    void frame_mass(int k, std::uint64_t key, double prob) override {
        marginals_[k].emplace_back(key, prob);
    }
    void transition_mass(int k, std::uint64_t from, std::uint64_t to, double prob) override {
        pairwise_[k].emplace_back(from, to, prob);
    }

    std::vector<std::vector<std::pair<std::uint64_t, double>>> marginals_;
    std::vector<std::vector<std::tuple<std::uint64_t, std::uint64_t, double>>> pairwise_;
};

}  // namespace

double forward_backward_visit(std::span<const Frame> frames, const ModelParams& params,
                              const BuildingMap& map, const BeamConfig& beam,
                              const VeSchedule* ve, FactorMask mask, PosteriorSink& sink) {
    Engine eng(frames, params, map, beam, ve, mask);
    const std::vector<EngineFrame> lattice = eng.run_forward_impl(false);
    return eng.backward(lattice, sink);
}

SmoothResult forward_backward(std::span<const Frame> frames, const ModelParams& params,
                              const BuildingMap& map, const BeamConfig& beam,
                              const VeSchedule* ve, FactorMask mask) {
    Engine eng(frames, params, map, beam, ve, mask);
    const std::vector<EngineFrame> lattice = eng.run_forward_impl(false);
    MaterializingSink sink(frames.size());
    SmoothResult out;
    out.log_likelihood = eng.backward(lattice, sink);

    out.marginals.resize(frames.size());
    for (std::size_t k = 0; k < frames.size(); ++k) {
        FramePosterior& fp = out.marginals[k];
        fp.log_normalizer = lattice[k].log_shift;
        auto& src = sink.marginals_[k];
        std::sort(src.begin(), src.end());
        fp.probs.reserve(src.size());
        for (const auto& [key, p] : src) fp.probs.emplace_back(state_from_key(key), p);
    }
    out.pairwise.resize(sink.pairwise_.size());
    for (std::size_t k = 0; k < sink.pairwise_.size(); ++k) {
        auto& src = sink.pairwise_[k];
        std::sort(src.begin(), src.end());
        out.pairwise[k].probs.reserve(src.size());
        for (const auto& [a, b, p] : src)
            out.pairwise[k].probs.emplace_back(state_from_key(a), state_from_key(b), p);
    }
    return out;
}

std::vector<std::pair<JointState, double>> prune(
    const std::vector<std::pair<JointState, double>>& scored, const BeamConfig& beam) {
    beam.validate();
    if (scored.empty()) throw std::invalid_argument("prune: empty input");

    std::vector<Candidate> cands;
    cands.reserve(scored.size());
    for (const auto& [js, logscore] : scored)
        cands.push_back({state_key(js), logscore, 0});

    double best = kNegInf;
    for (const Candidate& c : cands) best = std::max(best, c.val);
    // Log-domain floor; -inf inputs degenerate to keeping tie-order best.
    select_candidates(cands, best - beam.log_threshold, beam.max_states, beam.exact_mode);

    std::vector<std::pair<JointState, double>> out;
    out.reserve(cands.size());
    for (const Candidate& c : cands) out.emplace_back(state_from_key(c.key), c.val);
    return out;
}

}  // namespace actloc
