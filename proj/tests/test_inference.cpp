#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "actloc/errors.hpp"
#include "actloc/factors.hpp"
#include "actloc/inference.hpp"
#include "actloc/learning.hpp"
#include "actloc/logmath.hpp"
#include "toy_models.hpp"

using namespace actloc;
using namespace actloc::testing;

namespace {

void check_posterior_matches(const FramePosterior& got, const DenseModel& m,
                             const std::vector<double>& expect) {
    std::map<std::uint64_t, double> sparse;
    for (const auto& [js, p] : got.probs) sparse[state_key(js)] = p;
    for (std::size_t i = 0; i < m.states.size(); ++i) {
        const auto it = sparse.find(state_key(m.states[i]));
        const double mine = it == sparse.end() ? 0.0 : it->second;
        if (expect[i] > 1e-12) {
            REQUIRE(mine > 0.0);
            CHECK(std::abs(std::log(mine) - std::log(expect[i])) < 1e-9);
        } else {
            CHECK(mine <= 1e-12);
        }
    }
}

}  // namespace

TEST_CASE("exact forward matches the dense oracle on a 1-cell world") {
    const BuildingMap map = open_world(1, 1);
    const ModelParams p = toy_params(101);
    std::mt19937_64 rng(7);
    const std::vector<Frame> frames = random_frames(rng, 10, map, 0.0);

    const DenseModel dense = build_dense(p, map);
    const DenseResult expect = dense_forward_backward(dense, frames, nullptr);

    const ForwardResult got = forward_filter(frames, p, map, exact_beam());
    CHECK(std::abs(got.log_likelihood - expect.ll) < 1e-9);
    for (std::size_t k = 0; k < frames.size(); ++k) {
        CHECK(std::abs(got.posteriors[k].log_normalizer - expect.log_c[k]) < 1e-9);
        check_posterior_matches(got.posteriors[k], dense, expect.alpha[k]);
    }
}

TEST_CASE("exact forward-backward matches dense smoothing and pairwise posteriors") {
    const BuildingMap map = open_world(1, 1);
    const ModelParams p = toy_params(202);
    std::mt19937_64 rng(8);
    const std::vector<Frame> frames = random_frames(rng, 6, map, 0.0);

    const DenseModel dense = build_dense(p, map);
    const DenseResult expect = dense_forward_backward(dense, frames, nullptr, true);

    const SmoothResult got = forward_backward(frames, p, map, exact_beam());
    CHECK(std::abs(got.log_likelihood - expect.ll) < 1e-9);
    for (std::size_t k = 0; k < frames.size(); ++k)
        check_posterior_matches(got.marginals[k], dense, expect.gamma[k]);

    for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
        std::map<std::pair<std::uint64_t, std::uint64_t>, double> pairs;
        double sum = 0.0;
        for (const auto& [a, b, pr] : got.pairwise[k].probs) {
            pairs[{state_key(a), state_key(b)}] = pr;
            sum += pr;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-8));
        for (std::size_t i = 0; i < dense.states.size(); ++i) {
            for (std::size_t j = 0; j < dense.states.size(); ++j) {
                const double want = expect.xi[k][i][j];
                const auto it =
                    pairs.find({state_key(dense.states[i]), state_key(dense.states[j])});
                const double mine = it == pairs.end() ? 0.0 : it->second;
                if (want > 1e-12)
                    CHECK(std::abs(std::log(mine) - std::log(want)) < 1e-9);
                else
                    CHECK(mine <= 1e-10);
            }
        }
    }
}

TEST_CASE("smoothed marginals sum to one and the last frame equals filtering") {
    const BuildingMap map = open_world(2, 2);
    const ModelParams p = toy_params(33);
    std::mt19937_64 rng(9);
    const std::vector<Frame> frames = random_frames(rng, 8, map, 0.6);

    BeamConfig beam;
    beam.max_states = 200;
    beam.log_threshold = 10.0;
    const ForwardResult fwd = forward_filter(frames, p, map, beam);
    const SmoothResult smooth = forward_backward(frames, p, map, beam);

    for (const auto& fp : smooth.marginals) {
        double sum = 0.0;
        for (const auto& [js, pr] : fp.probs) sum += pr;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-8));
    }
    const auto& last_f = fwd.posteriors.back().probs;
    const auto& last_s = smooth.marginals.back().probs;
    REQUIRE(last_f.size() == last_s.size());
    for (std::size_t i = 0; i < last_f.size(); ++i) {
        CHECK(state_key(last_f[i].first) == state_key(last_s[i].first));
        CHECK(last_f[i].second == doctest::Approx(last_s[i].second).epsilon(1e-9));
    }
}

TEST_CASE("exact Viterbi matches the dense DP and exhaustive path enumeration") {
    const BuildingMap map = open_world(1, 1);
    ModelParams p = toy_params(303);
    collapse_motion_params(p);  // pin the motion chain: 12 reachable states
    std::mt19937_64 rng(10);
    const std::vector<Frame> frames = random_frames(rng, 10, map, 0.0);

    const ViterbiResult got = viterbi_decode(frames, p, map, exact_beam());

    {  // dense DP oracle over the full admissible space, 10 frames
        const DenseModel dense = build_dense(p, map);
        const auto [path, score] = dense_viterbi(dense, frames, nullptr);
        CHECK(std::abs(got.log_score - score) < 1e-9);
        REQUIRE(got.path.size() == path.size());
        for (std::size_t k = 0; k < path.size(); ++k)
            CHECK(state_key(got.path[k]) == state_key(dense.states[path[k]]));
    }

    {  // exhaustive enumeration over all (state, env) paths, 4 frames
        const std::vector<Frame> head(frames.begin(), frames.begin() + 4);
        std::vector<JointState> cells;
        for (int s = 0; s < kNumMotionStates; ++s)
            for (int e = 0; e < kNumEnvironments; ++e)
                if (is_admissible(static_cast<MotionState>(s), static_cast<Environment>(e)))
                    cells.push_back(JointState{{0, 0}, {0, 0}, static_cast<MotionState>(s),
                                               static_cast<Environment>(e)});

        double best = kNegInf;
        std::vector<int> best_path;
        std::vector<int> idx(head.size(), 0);
        const int n = static_cast<int>(cells.size());
        while (true) {
            double score = initial_log(cells[idx[0]], head[0], p, map);
            for (std::size_t k = 1; k < head.size() && score > kNegInf; ++k) {
                score += transition_log(cells[idx[k - 1]], cells[idx[k]], p, map);
                score += msb_log_likelihood(head[k].msb, cells[idx[k]].state,
                                            cells[idx[k]].env, p);
                score += map_constraint_log(cells[idx[k]].env, cells[idx[k]].loc, map, p);
                score += gps_log_likelihood(head[k], cells[idx[k]].loc, p);
            }
            if (score > best) {
                best = score;
                best_path = idx;
            }
            int d = static_cast<int>(head.size()) - 1;
            while (d >= 0 && ++idx[d] == n) idx[d--] = 0;
            if (d < 0) break;
        }

        const ViterbiResult got4 = viterbi_decode(head, p, map, exact_beam());
        CHECK(std::abs(got4.log_score - best) < 1e-9);
        for (std::size_t k = 0; k < head.size(); ++k) {
            CHECK(got4.path[k].state == cells[best_path[k]].state);
            CHECK(got4.path[k].env == cells[best_path[k]].env);
        }
    }
}

TEST_CASE("delta virtual evidence pins the decoded states") {
    const BuildingMap map = open_world(3, 3);
    const ModelParams p = toy_params(44);
    std::mt19937_64 rng(11);
    const std::vector<Frame> frames = random_frames(rng, 12, map, 0.3);

    std::vector<LabelSpan> spans{{0, 5, MotionState::Running, Environment::Outdoors},
                                 {6, 11, MotionState::Stationary, Environment::Indoors}};
    const VeSchedule ve = expand_annotations(spans, 12, ScheduleKind::HardLabels);

    const ViterbiResult vit = viterbi_decode(frames, p, map, exact_beam(), &ve);
    for (int k = 0; k < 12; ++k) {
        const LabelSpan& sp = spans[k <= 5 ? 0 : 1];
        CHECK(vit.path[k].state == sp.state);
        CHECK(vit.path[k].env == sp.env);
    }
}

TEST_CASE("deterministic dynamics force the deterministic chain") {
    const BuildingMap map = open_world(1, 1);
    ModelParams p = make_uniform_params();
    collapse_motion_params(p);
    // Cyclic deterministic environment chain and a state pinned per env.
    for (int e = 0; e < 3; ++e)
        for (int e2 = 0; e2 < 3; ++e2) p.env_trans[e][e2] = e2 == (e + 1) % 3 ? 1.0 : 0.0;
    p.init_env = {1.0, 0.0, 0.0};
    for (int e = 0; e < 3; ++e) {
        const MotionState pin = e == 2 ? MotionState::DrivingVehicle : MotionState::Walking;
        for (int sp = 0; sp < kNumMotionStates; ++sp)
            for (int s = 0; s < kNumMotionStates; ++s)
                p.state_trans[e][sp][s] = s == static_cast<int>(pin) ? 1.0 : 0.0;
    }
    p.init_state = {0.0, 1.0, 0.0, 0.0, 0.0};

    std::mt19937_64 rng(12);
    const std::vector<Frame> frames = random_frames(rng, 7, map, 0.0);
    const ViterbiResult vit = viterbi_decode(frames, p, map, exact_beam());
    for (int k = 0; k < 7; ++k) {
        const int e = k % 3;
        CHECK(static_cast<int>(vit.path[k].env) == e);
        CHECK(vit.path[k].state ==
              (e == 2 ? MotionState::DrivingVehicle : MotionState::Walking));
    }
}

TEST_CASE("single frame with uniform model is uniform over admissible states") {
    const BuildingMap map = open_world(2, 1);
    const ModelParams p = make_uniform_params();
    std::vector<Frame> frames(1);
    frames[0].index = 0;
    frames[0].msb.state_bins = {1, 1, 1, 1, 1};
    frames[0].msb.env_bins = {1, 1, 1};

    const ForwardResult got =
        forward_filter(frames, p, map, exact_beam(), nullptr, FactorMask{true, false});
    const double expect = 1.0 / got.posteriors[0].probs.size();
    for (const auto& [js, pr] : got.posteriors[0].probs)
        CHECK(pr == doctest::Approx(expect).epsilon(1e-12));
    // 2 cells x 72 velocities x 12 admissible pairs.
    CHECK(got.posteriors[0].probs.size() == 2u * 72u * 12u);
}

TEST_CASE("beam cap of one yields a point mass per frame") {
    const BuildingMap map = open_world(4, 4);
    ModelParams p = toy_params(55);
    restrict_speeds(p, 2);
    std::mt19937_64 rng(13);
    const std::vector<Frame> frames = random_frames(rng, 6, map, 0.5);

    BeamConfig beam;
    beam.max_states = 1;
    beam.log_threshold = 50.0;
    const ForwardResult got = forward_filter(frames, p, map, beam);
    for (const auto& fp : got.posteriors) {
        REQUIRE(fp.probs.size() == 1);
        CHECK(fp.probs[0].second == doctest::Approx(1.0));
    }
}

TEST_CASE("pruned likelihood is a lower bound and improves with wider beams") {
    std::mt19937_64 rng(999);
    for (int inst = 0; inst < 25; ++inst) {
        const BuildingMap map = open_world(1, 1);
        ModelParams p = toy_params(1000 + inst);
        restrict_speeds(p, 2);
        const std::vector<Frame> frames = random_frames(rng, 6, map, 0.0);

        const double exact_ll =
            forward_filter(frames, p, map, exact_beam()).log_likelihood;

        double prev = -1e300;
        for (int cap : {1, 2, 4, 8, 16, 32, 64, 128, 256, 512}) {
            BeamConfig beam;
            beam.max_states = cap;
            beam.log_threshold = 1e6;  // cap-only pruning
            const double ll = forward_filter(frames, p, map, beam).log_likelihood;
            CHECK(ll <= exact_ll + 1e-9);
            CHECK(ll >= prev - 1e-9);
            prev = ll;
        }

        BeamConfig beam;
        beam.max_states = 50;
        beam.log_threshold = 12.0;
        CHECK(forward_filter(frames, p, map, beam).log_likelihood <= exact_ll + 1e-9);
    }
}

TEST_CASE("inference collapse names the frame") {
    const BuildingMap map = open_world(2, 2);
    ModelParams p = toy_params(66);
    std::mt19937_64 rng(14);
    std::vector<Frame> frames = random_frames(rng, 5, map, 0.0);

    // Bin 10 gets zero probability under every state; only frame 3
    // observes it, so the collapse must name frame 3.
    for (int i = 0; i < kNumMotionStates; ++i)
        for (int s = 0; s < kNumMotionStates; ++s) {
            p.obs_state[i][s][9] = 0.0;
            double sum = 0.0;
            for (int b = 0; b < 9; ++b) sum += p.obs_state[i][s][b];
            for (int b = 0; b < 9; ++b) p.obs_state[i][s][b] /= sum;
        }
    for (Frame& f : frames)
        for (auto& b : f.msb.state_bins) b = std::min(b, 9);
    frames[3].msb.state_bins = {10, 10, 10, 10, 10};

    try {
        forward_filter(frames, p, map, exact_beam());
        FAIL("expected collapse");
    } catch (const InferenceCollapseError& e) {
        CHECK(e.frame() == 3);
        CHECK(std::string(e.what()).find("frame 3") != std::string::npos);
    }
}

TEST_CASE("prune: spec behaviors and the full-sort oracle") {
    auto js = [](int x) {
        return JointState{{x, 0}, {0, 0}, MotionState::Stationary, Environment::Outdoors};
    };

    SUBCASE("all scores equal with room is the identity") {
        std::vector<std::pair<JointState, double>> scored{{js(2), -1.0}, {js(0), -1.0},
                                                          {js(1), -1.0}};
        BeamConfig beam;
        beam.max_states = 10;
        beam.log_threshold = 12.0;
        const auto kept = prune(scored, beam);
        REQUIRE(kept.size() == 3);
        CHECK(kept[0].first.loc.x == 0);  // sorted by key
        CHECK(kept[2].first.loc.x == 2);
    }

    SUBCASE("threshold drops entries far below the best") {
        std::vector<std::pair<JointState, double>> scored{{js(0), 0.0}, {js(1), -5.0},
                                                          {js(2), -20.0}};
        BeamConfig beam;
        beam.log_threshold = 12.0;
        const auto kept = prune(scored, beam);
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].first.loc.x == 0);
        CHECK(kept[1].first.loc.x == 1);
    }

    SUBCASE("cap matches a sort-and-truncate oracle on 50k random scores") {
        std::mt19937_64 rng(4242);
        std::uniform_real_distribution<double> u(-30.0, 0.0);
        std::vector<std::pair<JointState, double>> scored;
        for (int i = 0; i < 50000; ++i)
            scored.emplace_back(JointState{{i % 1000, i / 1000},
                                           {0, 0},
                                           MotionState::Stationary,
                                           Environment::Outdoors},
                                u(rng));
        BeamConfig beam;
        beam.max_states = 10000;
        beam.log_threshold = 1e9;
        const auto kept = prune(scored, beam);
        REQUIRE(kept.size() == 10000);

        auto oracle = scored;
        std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return state_key(a.first) < state_key(b.first);
        });
        oracle.resize(10000);
        std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
            return state_key(a.first) < state_key(b.first);
        });
        for (std::size_t i = 0; i < kept.size(); ++i) {
            CHECK(state_key(kept[i].first) == state_key(oracle[i].first));
            CHECK(kept[i].second == oracle[i].second);
        }
    }

    SUBCASE("the argmax always survives and empty input is rejected") {
        std::vector<std::pair<JointState, double>> one{{js(5), -123.0}};
        BeamConfig beam;
        beam.max_states = 1;
        beam.log_threshold = 0.0;
        const auto kept = prune(one, beam);
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].second == -123.0);
        CHECK_THROWS_AS(prune({}, beam), std::invalid_argument);
    }
}

TEST_CASE("identical inputs produce bit-identical results") {
    const BuildingMap map = open_world(6, 6);
    const ModelParams p = toy_params(77);
    std::mt19937_64 rng(15);
    const std::vector<Frame> frames = random_frames(rng, 20, map, 0.4);

    BeamConfig beam;
    beam.max_states = 300;
    beam.log_threshold = 11.0;

    const ForwardResult a = forward_filter(frames, p, map, beam);
    const ForwardResult b = forward_filter(frames, p, map, beam);
    CHECK(a.log_likelihood == b.log_likelihood);
    REQUIRE(a.posteriors.size() == b.posteriors.size());
    for (std::size_t k = 0; k < a.posteriors.size(); ++k) {
        REQUIRE(a.posteriors[k].probs.size() == b.posteriors[k].probs.size());
        for (std::size_t i = 0; i < a.posteriors[k].probs.size(); ++i) {
            CHECK(state_key(a.posteriors[k].probs[i].first) ==
                  state_key(b.posteriors[k].probs[i].first));
            CHECK(a.posteriors[k].probs[i].second == b.posteriors[k].probs[i].second);
        }
    }

    const ViterbiResult va = viterbi_decode(frames, p, map, beam);
    const ViterbiResult vb = viterbi_decode(frames, p, map, beam);
    CHECK(va.log_score == vb.log_score);
    for (std::size_t k = 0; k < va.path.size(); ++k)
        CHECK(state_key(va.path[k]) == state_key(vb.path[k]));
}

TEST_CASE("decoded paths never contain a forbidden pair") {
    const BuildingMap map = open_world(5, 5);
    std::mt19937_64 rng(16);
    for (int inst = 0; inst < 5; ++inst) {
        const ModelParams p = toy_params(500 + inst);
        const std::vector<Frame> frames = random_frames(rng, 15, map, 0.5);
        BeamConfig beam;
        beam.max_states = 100;
        const ViterbiResult vit = viterbi_decode(frames, p, map, beam);
        for (const JointState& s : vit.path) CHECK(is_admissible(s));
    }
}

TEST_CASE("validation errors for malformed invocations") {
    const BuildingMap map = open_world(2, 2);
    const ModelParams p = make_uniform_params();
    CHECK_THROWS_AS(forward_filter({}, p, map, exact_beam()), std::invalid_argument);

    std::mt19937_64 rng(17);
    std::vector<Frame> frames = random_frames(rng, 3, map, 0.0);
    frames[2].index = 5;
    CHECK_THROWS_AS(forward_filter(frames, p, map, exact_beam()), ValidationError);
    frames[2].index = 2;

    VeSchedule ve = expand_annotations(
        {{0, 1, MotionState::Walking, Environment::Outdoors}}, 2, ScheduleKind::HardLabels);
    CHECK_THROWS_AS(forward_filter(frames, p, map, exact_beam(), &ve),
                    std::invalid_argument);

    BeamConfig bad;
    bad.max_states = 0;
    CHECK_THROWS_AS(forward_filter(frames, p, map, bad), ValidationError);
}
