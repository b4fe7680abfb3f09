#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

#include "actloc/errors.hpp"
#include "actloc/learning.hpp"
#include "toy_models.hpp"

using namespace actloc;
using namespace actloc::testing;

namespace {

bool params_bit_equal(const ModelParams& a, const ModelParams& b) {
    return std::memcmp(&a, &b, sizeof(ModelParams)) == 0;
}

// Two-state toy: environment pinned outdoors, motion chain collapsed,
// probability mass restricted to {Stationary, Walking}.
ModelParams two_state_toy(std::uint64_t seed) {
    ModelParams p = initialize_params(seed, 0.3);
    collapse_motion_params(p);
    p.init_env = {0.0, 1.0, 0.0};
    for (int e = 0; e < 3; ++e) p.env_trans[e] = {0.0, 1.0, 0.0};
    p.init_state = {0.6, 0.4, 0.0, 0.0, 0.0};
    const int out = static_cast<int>(Environment::Outdoors);
    for (int sp = 0; sp < kNumMotionStates; ++sp) {
        const double a = 0.55 + 0.05 * sp;
        p.state_trans[out][sp] = {a, 1.0 - a, 0.0, 0.0, 0.0};
    }
    return p;
}

}  // namespace

TEST_CASE("initialize_params: determinism, uniformity at zero jitter, row sums") {
    const ModelParams a = initialize_params(123);
    const ModelParams b = initialize_params(123);
    CHECK(params_bit_equal(a, b));

    const ModelParams c = initialize_params(124);
    CHECK_FALSE(params_bit_equal(a, c));

    const ModelParams u = initialize_params(5, 0.0);
    const ModelParams ref = make_uniform_params();
    for (int e = 0; e < 3; ++e)
        for (int e2 = 0; e2 < 3; ++e2) CHECK(u.env_trans[e][e2] == ref.env_trans[e][e2]);
    for (int e = 0; e < 3; ++e)
        for (int sp = 0; sp < 5; ++sp)
            for (int s = 0; s < 5; ++s)
                CHECK(u.state_trans[e][sp][s] == ref.state_trans[e][sp][s]);

    for (std::uint64_t seed = 0; seed < 20; ++seed)
        CHECK_NOTHROW(validate_params(initialize_params(seed), 1e-12));
}

TEST_CASE("drop_labels trimming arithmetic") {
    auto span = [](int a, int b) {
        return LabelSpan{a, b, MotionState::Walking, Environment::Outdoors};
    };

    const std::vector<LabelSpan> spans{span(0, 40)};
    CHECK(drop_labels(spans, 0) == std::vector<LabelSpan>{span(0, 40)});

    const auto middle = drop_labels(spans, 100);
    REQUIRE(middle.size() == 1);
    CHECK(middle[0].start == 20);
    CHECK(middle[0].end == 20);

    const auto half = drop_labels({span(0, 39)}, 50);
    CHECK(half[0].start == 10);
    CHECK(half[0].end == 29);

    // Even length at 100 percent keeps the earlier central frame.
    const auto even = drop_labels({span(0, 39)}, 100);
    CHECK(even[0].start == 19);
    CHECK(even[0].end == 19);

    CHECK_THROWS_AS(drop_labels(spans, -1), std::invalid_argument);
    CHECK_THROWS_AS(drop_labels(spans, 101), std::invalid_argument);
}

TEST_CASE("drop_labels_random_single picks one in-span frame per span") {
    const std::vector<LabelSpan> spans{{0, 9, MotionState::Walking, Environment::Outdoors},
                                       {10, 49, MotionState::Running, Environment::Outdoors}};
    const auto a = drop_labels_random_single(spans, 7);
    const auto b = drop_labels_random_single(spans, 7);
    const auto c = drop_labels_random_single(spans, 8);
    REQUIRE(a.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(a[i].start == a[i].end);
        CHECK(a[i].start >= spans[i].start);
        CHECK(a[i].start <= spans[i].end);
        CHECK(a[i].start == b[i].start);  // deterministic per seed
        CHECK(a[i].state == spans[i].state);
    }
    CHECK((a[0].start != c[0].start || a[1].start != c[1].start));
}

TEST_CASE("one EM step on the two-state toy matches hand-derived Baum-Welch") {
    const BuildingMap map = open_world(1, 1);
    const ModelParams p0 = two_state_toy(40);
    std::mt19937_64 rng(4);

    // A three-frame observation sequence.
    std::vector<Frame> frames = random_frames(rng, 3, map, 0.0);
    const int T = 3;
    const int out = static_cast<int>(Environment::Outdoors);

    // Hand-rolled two-state Baum-Welch on the equivalent chain.
    double A[2][2], pi[2];
    for (int i = 0; i < 2; ++i) {
        pi[i] = p0.init_state[i];
        for (int j = 0; j < 2; ++j) A[i][j] = p0.state_trans[out][i][j];
    }
    auto emit = [&](int k, int s) {
        double w = 1.0;
        for (int c = 0; c < kNumMotionStates; ++c)
            w *= p0.obs_state[c][s][frames[k].msb.state_bins[c] - 1];
        for (int c = 0; c < kNumEnvironments; ++c)
            w *= p0.obs_env[c][out][frames[k].msb.env_bins[c] - 1];
        return w;
    };
    double alpha[3][2], cs[3], beta[3][2];
    for (int i = 0; i < 2; ++i) alpha[0][i] = pi[i] * emit(0, i);
    cs[0] = alpha[0][0] + alpha[0][1];
    for (int i = 0; i < 2; ++i) alpha[0][i] /= cs[0];
    for (int k = 1; k < T; ++k) {
        for (int j = 0; j < 2; ++j)
            alpha[k][j] =
                (alpha[k - 1][0] * A[0][j] + alpha[k - 1][1] * A[1][j]) * emit(k, j);
        cs[k] = alpha[k][0] + alpha[k][1];
        for (int j = 0; j < 2; ++j) alpha[k][j] /= cs[k];
    }
    beta[T - 1][0] = beta[T - 1][1] = 1.0;
    for (int k = T - 2; k >= 0; --k)
        for (int i = 0; i < 2; ++i) {
            double s = 0.0;
            for (int j = 0; j < 2; ++j) s += A[i][j] * emit(k + 1, j) * beta[k + 1][j];
            beta[k][i] = s / cs[k + 1];
        }
    double xi[2][2] = {};
    for (int k = 0; k + 1 < T; ++k)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                xi[i][j] +=
                    alpha[k][i] * A[i][j] * emit(k + 1, j) * beta[k + 1][j] / cs[k + 1];
    double gamma[3][2];
    for (int k = 0; k < T; ++k)
        for (int i = 0; i < 2; ++i) gamma[k][i] = alpha[k][i] * beta[k][i];

    // One engine EM iteration.
    EmConfig cfg;
    cfg.max_iters = 1;
    cfg.beam.exact_mode = true;
    cfg.update_motion_cpts = false;
    std::vector<TrainTrace> traces(1);
    traces[0].frames = frames;
    const EmResult got = em_train(traces, p0, map, cfg);

    const double d = cfg.dirichlet_smoothing;
    // state_trans rows for the two active states: smoothed over the 4
    // admissible outdoor children.
    for (int i = 0; i < 2; ++i) {
        const double denom = xi[i][0] + xi[i][1] + 4 * d;
        CHECK(got.params.state_trans[out][i][0] ==
              doctest::Approx((xi[i][0] + d) / denom).epsilon(1e-9));
        CHECK(got.params.state_trans[out][i][1] ==
              doctest::Approx((xi[i][1] + d) / denom).epsilon(1e-9));
        CHECK(got.params.state_trans[out][i][2] == doctest::Approx(d / denom).epsilon(1e-9));
        CHECK(got.params.state_trans[out][i][3] == 0.0);  // structural zero
        CHECK(got.params.state_trans[out][i][4] == doctest::Approx(d / denom).epsilon(1e-9));
    }
    // Unvisited rows keep their previous values.
    for (int i = 2; i < kNumMotionStates; ++i)
        for (int j = 0; j < kNumMotionStates; ++j)
            CHECK(got.params.state_trans[out][i][j] == p0.state_trans[out][i][j]);
    for (int e : {0, 2})
        for (int i = 0; i < kNumMotionStates; ++i)
            for (int j = 0; j < kNumMotionStates; ++j)
                CHECK(got.params.state_trans[e][i][j] == p0.state_trans[e][i][j]);

    // Environment chain: only outdoors -> outdoors has mass.
    {
        const double denom = (T - 1) + 3 * d;
        CHECK(got.params.env_trans[out][out] ==
              doctest::Approx(((T - 1) + d) / denom).epsilon(1e-9));
        CHECK(got.params.env_trans[out][0] == doctest::Approx(d / denom).epsilon(1e-9));
    }

    // Observation rows for the active states.
    for (int c = 0; c < kNumMotionStates; ++c) {
        for (int s = 0; s < 2; ++s) {
            double counts[kNumQuantBins] = {};
            double total = 0.0;
            for (int k = 0; k < T; ++k) {
                counts[frames[k].msb.state_bins[c] - 1] += gamma[k][s];
                total += gamma[k][s];
            }
            for (int b = 0; b < kNumQuantBins; ++b)
                CHECK(got.params.obs_state[c][s][b] ==
                      doctest::Approx((counts[b] + d) / (total + kNumQuantBins * d))
                          .epsilon(1e-9));
        }
    }

    // Initial state distribution from the frame-0 posterior.
    for (int s = 0; s < 2; ++s)
        CHECK(got.params.init_state[s] ==
              doctest::Approx((gamma[0][s] + d) / (1.0 + kNumMotionStates * d))
                  .epsilon(1e-9));

    // Frozen motion chain.
    for (int t = 0; t < kNumSpeedBins; ++t)
        CHECK(got.params.init_speed[t] == p0.init_speed[t]);

    // The likelihood reported for the first iteration matches the oracle.
    double ll = 0.0;
    for (int k = 0; k < T; ++k) ll += std::log(cs[k]);
    // The engine's likelihood additionally carries the constant outdoor
    // map factor (0.85 per frame) that cancels in all posteriors.
    CHECK(got.ll_per_iter[0] ==
          doctest::Approx(ll + T * std::log(0.85)).epsilon(1e-9));
}

TEST_CASE("exact-mode EM log-likelihood is non-decreasing") {
    const BuildingMap map = open_world(1, 1);
    ModelParams truth = toy_params(71);
    restrict_speeds(truth, 2);
    std::mt19937_64 rng(6);

    std::vector<TrainTrace> traces(5);
    for (auto& t : traces) t.frames = sample_frames_from_model(rng, truth, map, 40);

    ModelParams init = initialize_params(900, 0.05);
    restrict_speeds(init, 2);

    EmConfig cfg;
    cfg.max_iters = 12;
    cfg.rel_ll_tolerance = 1e-12;
    cfg.dirichlet_smoothing = 1e-12;
    cfg.beam.exact_mode = true;
    const EmResult result = em_train(traces, init, map, cfg);

    REQUIRE(result.ll_per_iter.size() >= 2);
    for (std::size_t i = 1; i < result.ll_per_iter.size(); ++i) {
        const double prev = result.ll_per_iter[i - 1];
        const double cur = result.ll_per_iter[i];
        CHECK(cur >= prev - 1e-8 * std::abs(prev));
    }
    CHECK_NOTHROW(validate_params(result.params, 1e-9));
}

TEST_CASE("delta evidence: one-step supervised fixed point") {
    const BuildingMap map = open_world(1, 1);
    std::mt19937_64 rng(61);

    // Labeled traces: spans with alternating activities.
    const std::vector<LabelSpan> spans{
        {0, 7, MotionState::Walking, Environment::Outdoors},
        {8, 15, MotionState::Stationary, Environment::Indoors},
        {16, 23, MotionState::UpDownStairs, Environment::Indoors}};
    std::vector<TrainTrace> traces(2);
    for (auto& t : traces) {
        t.frames = random_frames(rng, 24, map, 0.0);
        t.ve = expand_annotations(spans, 24, ScheduleKind::HardLabels);
    }

    ModelParams init = initialize_params(17);
    collapse_motion_params(init);

    EmConfig cfg;
    cfg.beam.exact_mode = true;
    cfg.update_motion_cpts = false;
    cfg.rel_ll_tolerance = 1e-15;  // never stop on tolerance here

    cfg.max_iters = 1;
    const EmResult once = em_train(traces, init, map, cfg);
    cfg.max_iters = 2;
    const EmResult twice = em_train(traces, init, map, cfg);

    // Iteration two changes nothing: posteriors are pinned by the labels.
    CHECK(params_bit_equal(once.params, twice.params));

    // Visited rows equal the smoothed supervised counts, taken from the
    // label bigrams.
    const double d = cfg.dirichlet_smoothing;
    const int in = static_cast<int>(Environment::Indoors);
    double env_counts[3][3] = {};
    double state_counts[3][5][5] = {};
    auto label_at = [&](int k) {
        for (const auto& sp : spans)
            if (k >= sp.start && k <= sp.end) return std::pair(sp.state, sp.env);
        return std::pair(MotionState::Stationary, Environment::Outdoors);
    };
    for (int rep = 0; rep < 2; ++rep)
        for (int k = 1; k < 24; ++k) {
            const auto [s0, e0] = label_at(k - 1);
            const auto [s1, e1] = label_at(k);
            env_counts[static_cast<int>(e0)][static_cast<int>(e1)] += 1.0;
            state_counts[static_cast<int>(e1)][static_cast<int>(s0)][static_cast<int>(s1)] +=
                1.0;
        }
    for (int e = 0; e < 3; ++e) {
        double total = env_counts[e][0] + env_counts[e][1] + env_counts[e][2];
        if (total == 0.0) continue;
        for (int e2 = 0; e2 < 3; ++e2)
            CHECK(once.params.env_trans[e][e2] ==
                  doctest::Approx((env_counts[e][e2] + d) / (total + 3 * d))
                      .epsilon(1e-12));
    }
    // An example state row: indoors, from Stationary.
    {
        double total = 0.0;
        for (int s2 = 0; s2 < 5; ++s2) total += state_counts[in][0][s2];
        REQUIRE(total > 0.0);
        const double denom = total + 4 * d;  // driving excluded indoors
        for (int s2 : {0, 1, 2, 4})
            CHECK(once.params.state_trans[in][0][s2] ==
                  doctest::Approx((state_counts[in][0][s2] + d) / denom).epsilon(1e-12));
        CHECK(once.params.state_trans[in][0][3] == 0.0);
    }
    // Unvisited: vehicle rows untouched.
    for (int sp = 0; sp < 5; ++sp)
        for (int s2 = 0; s2 < 5; ++s2)
            CHECK(once.params.state_trans[2][sp][s2] == init.state_trans[2][sp][s2]);
}

TEST_CASE("hard-label E-step posteriors are point masses on the labels") {
    const BuildingMap map = open_world(2, 2);
    std::mt19937_64 rng(62);
    const std::vector<Frame> frames = random_frames(rng, 10, map, 0.4);
    const std::vector<LabelSpan> spans{{0, 4, MotionState::Running, Environment::Outdoors},
                                       {5, 9, MotionState::Stationary, Environment::Vehicle}};
    const VeSchedule ve = expand_annotations(spans, 10, ScheduleKind::HardLabels);

    const ModelParams p = initialize_params(3);
    const SmoothResult smooth = forward_backward(frames, p, map, exact_beam(), &ve);
    for (int k = 0; k < 10; ++k) {
        const LabelSpan& sp = spans[k <= 4 ? 0 : 1];
        double on_label = 0.0, total = 0.0;
        for (const auto& [js, pr] : smooth.marginals[k].probs) {
            total += pr;
            if (js.state == sp.state && js.env == sp.env) on_label += pr;
        }
        CHECK(on_label == doctest::Approx(total).epsilon(1e-9));
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("all-uniform evidence trains bit-identically to no evidence") {
    const BuildingMap map = open_world(1, 1);
    ModelParams truth = toy_params(81);
    restrict_speeds(truth, 2);
    std::mt19937_64 rng(63);

    std::vector<TrainTrace> with_ve(3), without(3);
    for (int i = 0; i < 3; ++i) {
        const std::vector<Frame> frames = sample_frames_from_model(rng, truth, map, 30);
        with_ve[i].frames = frames;
        with_ve[i].ve =
            expand_annotations({}, static_cast<int>(frames.size()), ScheduleKind::AllUniform);
        without[i].frames = frames;
    }

    ModelParams init = initialize_params(901, 0.05);
    restrict_speeds(init, 2);
    EmConfig cfg;
    cfg.max_iters = 4;
    cfg.rel_ll_tolerance = 1e-14;
    cfg.beam.exact_mode = true;

    const EmResult a = em_train(with_ve, init, map, cfg);
    const EmResult b = em_train(without, init, map, cfg);
    REQUIRE(a.ll_per_iter.size() == b.ll_per_iter.size());
    for (std::size_t i = 0; i < a.ll_per_iter.size(); ++i)
        CHECK(a.ll_per_iter[i] == b.ll_per_iter[i]);
    CHECK(params_bit_equal(a.params, b.params));
}

TEST_CASE("EM is deterministic across thread counts") {
    const BuildingMap map = open_world(1, 1);
    ModelParams truth = toy_params(82);
    restrict_speeds(truth, 2);
    std::mt19937_64 rng(64);

    std::vector<TrainTrace> traces(4);
    for (auto& t : traces) t.frames = sample_frames_from_model(rng, truth, map, 25);
    ModelParams init = initialize_params(902, 0.05);
    restrict_speeds(init, 2);

    EmConfig cfg;
    cfg.max_iters = 3;
    cfg.beam.exact_mode = true;

    cfg.threads = 1;
    const EmResult a = em_train(traces, init, map, cfg);
    cfg.threads = 4;
    const EmResult b = em_train(traces, init, map, cfg);
    CHECK(params_bit_equal(a.params, b.params));
    REQUIRE(a.ll_per_iter.size() == b.ll_per_iter.size());
    for (std::size_t i = 0; i < a.ll_per_iter.size(); ++i)
        CHECK(a.ll_per_iter[i] == b.ll_per_iter[i]);
}

TEST_CASE("EM aborts with trace context on inference collapse") {
    const BuildingMap map = open_world(1, 1);
    ModelParams p = two_state_toy(5);
    // An emission that zeroes bin 10 for every state.
    for (int c = 0; c < kNumMotionStates; ++c)
        for (int s = 0; s < kNumMotionStates; ++s) {
            p.obs_state[c][s][9] = 0.0;
            double sum = 0.0;
            for (int b = 0; b < 9; ++b) sum += p.obs_state[c][s][b];
            for (int b = 0; b < 9; ++b) p.obs_state[c][s][b] /= sum;
        }

    std::mt19937_64 rng(65);
    std::vector<TrainTrace> traces(2);
    traces[0].frames = random_frames(rng, 5, map, 0.0);
    traces[1].frames = random_frames(rng, 5, map, 0.0);
    for (auto& t : traces)
        for (auto& f : t.frames)
            for (auto& b : f.msb.state_bins) b = std::min(b, 9);
    traces[1].frames[2].msb.state_bins = {10, 10, 10, 10, 10};

    EmConfig cfg;
    cfg.beam.exact_mode = true;
    try {
        em_train(traces, p, map, cfg);
        FAIL("expected collapse");
    } catch (const InferenceCollapseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("trace 1") != std::string::npos);
        CHECK(msg.find("frame 2") != std::string::npos);
    }
}

TEST_CASE("every EM output keeps rows normalized and zeros intact") {
    const BuildingMap map = open_world(1, 1);
    ModelParams truth = toy_params(83);
    restrict_speeds(truth, 2);
    std::mt19937_64 rng(66);
    std::vector<TrainTrace> traces(3);
    for (auto& t : traces) t.frames = sample_frames_from_model(rng, truth, map, 30);

    ModelParams init = initialize_params(903, 0.05);
    restrict_speeds(init, 2);
    EmConfig cfg;
    cfg.max_iters = 6;
    cfg.beam.exact_mode = true;
    const EmResult result = em_train(traces, init, map, cfg);
    CHECK_NOTHROW(validate_params(result.params, 1e-9));
    for (int sp = 0; sp < 5; ++sp) {
        CHECK(result.params.state_trans[0][sp][3] == 0.0);
        CHECK(result.params.state_trans[1][sp][3] == 0.0);
        CHECK(result.params.state_trans[2][sp][4] == 0.0);
    }
}

TEST_CASE("annotation files round-trip") {
    const std::vector<LabelSpan> spans{{0, 9, MotionState::Walking, Environment::Outdoors},
                                       {10, 19, MotionState::DrivingVehicle,
                                        Environment::Vehicle}};
    save_spans(spans, "spans_test.json");
    const auto back = load_spans("spans_test.json");
    REQUIRE(back.size() == 2);
    CHECK(back[1].state == MotionState::DrivingVehicle);
    CHECK(back[1].env == Environment::Vehicle);
    CHECK(back[1].start == 10);
    std::remove("spans_test.json");
}
