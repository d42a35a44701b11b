#include <gtest/gtest.h>

#include <numeric>

#include "abrbench/expert.hpp"
#include "abrbench/policies.hpp"
#include "oracles.hpp"

namespace abrbench {
namespace {

Trace constant_trace(double mbps) { return Trace({{0.0, mbps}}, LoopMode::wrap, "const"); }

SessionState with_history(const VideoManifest& m, std::vector<double> throughputs, double buffer, Level last) {
    auto s = initial_state(m);
    s.next_chunk = static_cast<int>(throughputs.size());
    s.buffer_s = buffer;
    s.last_level = last;
    for (double c : throughputs) s.download_times_s.push_back(1.0);
    s.throughputs_mbps = std::move(throughputs);
    return s;
}

TEST(HarmonicMean, Examples) {
    EXPECT_DOUBLE_EQ(harmonic_mean(std::vector<double>{1, 1, 1}), 1.0);
    EXPECT_DOUBLE_EQ(harmonic_mean(std::vector<double>{1, 2}), 4.0 / 3.0);
    EXPECT_NEAR(harmonic_mean(std::vector<double>{0.5, 2, 8}), 3.0 / 2.625, 1e-15);
    EXPECT_THROW(harmonic_mean(std::vector<double>{}), DomainError);
    EXPECT_THROW(harmonic_mean(std::vector<double>{1.0, 0.0}), DomainError);
    EXPECT_THROW(harmonic_mean(std::vector<double>{1.0, -2.0}), DomainError);
}

TEST(HarmonicMean, NeverExceedsArithmeticMean) {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> x(1 + rng.index(12));
        for (double& v : x) v = rng.uniform(0.01, 100.0);
        const double am = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
        EXPECT_LE(harmonic_mean(x), am * (1 + 1e-12));
    }
}

TEST(BufferBased, ReservoirAndCushion) {
    const auto p = *preset("pensieve");
    const PolicyConfig cfg{.reservoir_s = 5.0, .cushion_s = 10.0};
    auto s = initial_state(p.manifest);
    EXPECT_EQ(decide_buffer_based(s, p.manifest, p.params, cfg), 0);
    s.buffer_s = 60.0;
    EXPECT_EQ(decide_buffer_based(s, p.manifest, p.params, cfg), 5);
    s.buffer_s = 10.0; // target 2.3 -> 1.85
    EXPECT_EQ(p.manifest.bitrate(decide_buffer_based(s, p.manifest, p.params, cfg)), 1.85);
    s.buffer_s = 5.0;
    EXPECT_EQ(decide_buffer_based(s, p.manifest, p.params, cfg), 0);
    s.buffer_s = 15.0;
    EXPECT_EQ(decide_buffer_based(s, p.manifest, p.params, cfg), 5);
}

TEST(BufferBased, MonotoneInBuffer) {
    const auto p = *preset("pensieve");
    const PolicyConfig cfg;
    auto s = initial_state(p.manifest);
    Level prev = 0;
    for (double b = 0.0; b <= 60.0; b += 0.01) {
        s.buffer_s = b;
        const Level l = decide_buffer_based(s, p.manifest, p.params, cfg);
        EXPECT_GE(l, prev);
        prev = l;
    }
}

TEST(PolicyConfig, Validation) {
    const QoEParams params;
    EXPECT_NO_THROW(PolicyConfig{}.validate(params));
    EXPECT_THROW((PolicyConfig{.mpc_horizon = 0}.validate(params)), DomainError);
    EXPECT_THROW((PolicyConfig{.reservoir_s = 30.0, .cushion_s = 40.0}.validate(params)), DomainError);
    EXPECT_THROW((PolicyConfig{.cushion_s = 0.0}.validate(params)), DomainError);
}

TEST(PredictionError, ZeroWithoutEnoughHistory) {
    EXPECT_EQ(max_recent_prediction_error(std::vector<double>{}, 8), 0.0);
    EXPECT_EQ(max_recent_prediction_error(std::vector<double>{3.0}, 8), 0.0);
    // second sample predicted by the first: |2 - 4| / 4
    EXPECT_DOUBLE_EQ(max_recent_prediction_error(std::vector<double>{2.0, 4.0}, 8), 0.5);
    EXPECT_EQ(max_recent_prediction_error(std::vector<double>{5, 5, 5, 5}, 2), 0.0);
}

TEST(PredictionError, WindowOnlySeesRecentPredictions) {
    // an early outlier drops out once k newer predictions exist
    std::vector<double> x{100.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    EXPECT_GT(max_recent_prediction_error(std::span(x).first(3), 2), 0.0);
    EXPECT_EQ(max_recent_prediction_error(x, 2), 0.0);
}

TEST(RobustMpc, EmptyHistoryPicksLowest) {
    const auto p = *preset("pensieve");
    EXPECT_EQ(decide_robust_mpc(initial_state(p.manifest), p.manifest, p.params, {}), 0);
}

TEST(RobustMpc, FastStableLinkPicksTopAgainstEnumerationOracle) {
    const auto p = *preset("pensieve");
    const auto state = with_history(p.manifest, std::vector<double>(8, 10.0), 30.0, 5);
    const Level chosen = decide_robust_mpc(state, p.manifest, p.params, {.kind = PolicyKind::robust_mpc});
    EXPECT_EQ(p.manifest.bitrate(chosen), 4.3);

    const auto trace = constant_trace(10.0);
    const auto problem = make_problem(state, 5, trace, p.manifest, p.params);
    const std::vector<double> cbar(5, 10.0);
    double best = -1e300;
    Level best_first = -1;
    oracle::for_each_sequence(6, 5, [&](const std::vector<Level>& seq) {
        const double v = oracle::fixed_throughput_objective(problem, seq, cbar);
        if (v > best + 1e-9) best = v, best_first = seq.front();
    });
    EXPECT_EQ(chosen, best_first);
}

TEST(RobustMpc, MatchesEnumerationOracleOnRandomStates) {
    const auto p = *preset("pensieve");
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<double> hist(1 + rng.index(10));
        for (double& v : hist) v = rng.uniform(0.2, 6.0);
        const auto state = with_history(p.manifest, hist, rng.uniform(0.0, 40.0), static_cast<Level>(rng.index(6)));
        const PolicyConfig cfg{.kind = PolicyKind::robust_mpc, .mpc_horizon = 3};
        const double c = *robust_prediction(state, cfg);
        const auto trace = constant_trace(c);
        const auto problem = make_problem(state, 3, trace, p.manifest, p.params);
        const std::vector<double> cbar(3, c);
        double best = -1e300;
        Level best_first = -1;
        oracle::for_each_sequence(6, 3, [&](const std::vector<Level>& seq) {
            const double v = oracle::fixed_throughput_objective(problem, seq, cbar);
            if (v > best + 1e-9 * std::max(1.0, std::abs(best))) best = v, best_first = seq.front();
        });
        EXPECT_EQ(decide_robust_mpc(state, p.manifest, p.params, cfg), best_first) << "trial " << trial;
    }
}

TEST(RobustMpc, DiscountUsesRecentError) {
    const auto p = *preset("pensieve");
    const auto state = with_history(p.manifest, {2.0, 4.0}, 10.0, 0);
    const double hm = harmonic_mean(std::vector<double>{2.0, 4.0});
    EXPECT_DOUBLE_EQ(*robust_prediction(state, {}), hm / 1.5);
    EXPECT_DOUBLE_EQ(*robust_prediction(state, {.robust_discount = false}), hm);
}

TEST(RobustMpc, TiesGoToLowerBitrate) {
    // One chunk at 1 Mbps from an empty buffer: level 0 scores 1 - 1, level 1 scores 2 - 2.
    const VideoManifest m({1.0, 2.0}, 1.0, {{1.0, 2.0}, {1.0, 2.0}});
    const QoEParams params{.alpha1 = 1.0, .alpha2 = 0.0, .buffer_cap_s = 10.0, .rtt_s = 0.0};
    auto state = with_history(m, {1.0}, 0.0, 0);
    EXPECT_EQ(decide_robust_mpc(state, m, params, {.kind = PolicyKind::robust_mpc, .mpc_horizon = 1,
                                                   .reservoir_s = 1.0, .cushion_s = 2.0}),
              0);
}

TEST(RobustMpc, InvariantUnderQualityRescaling) {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const double lambda = rng.uniform(0.1, 10.0);
        std::vector<std::vector<double>> sizes(6, {1.0, 2.5, 4.0, 7.0});
        const std::vector<double> rates{0.3, 0.8, 1.5, 2.5};
        std::vector<double> scaled;
        for (double r : rates) scaled.push_back(r * lambda);
        const VideoManifest a(rates, 2.0, sizes), b(scaled, 2.0, sizes);
        const QoEParams pa{.alpha1 = 2.0, .alpha2 = 1.0, .buffer_cap_s = 20.0, .rtt_s = 0.05};
        QoEParams pb = pa;
        pb.alpha1 *= lambda;
        std::vector<double> hist(4);
        for (double& v : hist) v = rng.uniform(0.5, 4.0);
        const auto sa = with_history(a, hist, rng.uniform(0.0, 15.0), static_cast<Level>(rng.index(4)));
        auto sb = sa;
        const PolicyConfig cfg{.kind = PolicyKind::robust_mpc, .mpc_horizon = 2, .cushion_s = 10.0};
        EXPECT_EQ(decide_robust_mpc(sa, a, pa, cfg), decide_robust_mpc(sb, b, pb, cfg)) << "trial " << trial;
    }
}

TEST(RobustMpc, PlanMatchesFixedThroughputExpertOnConstantTrace) {
    const auto p = *preset("pensieve");
    const auto m = p.manifest.truncated(10);
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const double c = rng.uniform(0.3, 6.0);
        auto state = with_history(m, std::vector<double>(6, c), rng.uniform(0.0, 30.0), static_cast<Level>(rng.index(6)));
        state.next_chunk = 6; // 4 chunks left, horizon covers them
        const auto trace = constant_trace(c);
        const auto plan = plan_constant_throughput(state, m, p.params, c, state.remaining());
        const auto problem = make_problem(state, 8, trace, m, p.params);
        const auto expert = solve_fixed_throughput(problem, std::vector<double>(4, c));
        EXPECT_EQ(plan, expert.levels) << "trial " << trial;
        EXPECT_EQ(decide_robust_mpc(state, m, p.params, {.kind = PolicyKind::robust_mpc}), expert.levels.front());
    }
}

TEST(MakePolicy, FixedAndRandom) {
    const auto p = *preset("pensieve");
    const auto state = initial_state(p.manifest);
    EXPECT_EQ(make_policy({.kind = PolicyKind::fixed, .fixed_level = 3}, p.manifest, p.params)(state), 3);
    EXPECT_THROW(make_policy({.kind = PolicyKind::fixed, .fixed_level = 6}, p.manifest, p.params), DomainError);
    auto r1 = make_policy({.kind = PolicyKind::random, .seed = 4}, p.manifest, p.params);
    auto r2 = make_policy({.kind = PolicyKind::random, .seed = 4}, p.manifest, p.params);
    std::vector<int> seen(6, 0);
    for (int i = 0; i < 600; ++i) {
        const Level l = r1(state);
        EXPECT_EQ(l, r2(state));
        ASSERT_GE(l, 0);
        ASSERT_LT(l, 6);
        seen[static_cast<std::size_t>(l)]++;
    }
    for (int n : seen) EXPECT_GT(n, 50);
}

TEST(PolicyKind, NamesRoundTrip) {
    for (auto k : {PolicyKind::buffer_based, PolicyKind::robust_mpc, PolicyKind::fixed, PolicyKind::random})
        EXPECT_EQ(parse_policy_kind(to_string(k)), k);
    EXPECT_FALSE(parse_policy_kind("bola").has_value());
}

} // namespace
} // namespace abrbench
