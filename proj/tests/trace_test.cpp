#include <gtest/gtest.h>

#include <cmath>

#include "abrbench/trace.hpp"
#include "oracles.hpp"

namespace abrbench {
namespace {

Trace constant_trace(double mbps) { return Trace({{0.0, mbps}}, LoopMode::wrap, "const"); }

Trace two_phase_hold() { return Trace({{0.0, 2.0}, {1.0, 1.0}}, LoopMode::hold_last, "two-phase"); }

Trace random_trace(std::uint64_t seed, LoopMode mode) {
    Rng rng(seed);
    std::vector<TraceSample> s;
    double t = 0.0;
    const int n = 2 + static_cast<int>(rng.index(20));
    for (int k = 0; k < n; ++k) {
        s.push_back({t, rng.uniform(0.1, 10.0)});
        t += rng.uniform(0.2, 3.0);
    }
    return Trace(std::move(s), mode, "rand");
}

TEST(TraceIntegrate, ConstantRate) { EXPECT_DOUBLE_EQ(integrate_throughput(constant_trace(1.0), 0.0, 4.0), 4.0); }

TEST(TraceIntegrate, EmptyIntervalIsZero) {
    EXPECT_EQ(integrate_throughput(two_phase_hold(), 0.7, 0.0), 0.0);
    EXPECT_EQ(integrate_throughput(random_trace(3, LoopMode::wrap), 12.5, 0.0), 0.0);
}

TEST(TraceIntegrate, TwoPhaseMatchesRiemannOracle) {
    const auto trace = two_phase_hold();
    const double oracle = oracle::riemann_integral(trace, 0.0, 3.0);
    EXPECT_NEAR(oracle, 4.0, 1e-9);
    EXPECT_NEAR(integrate_throughput(trace, 0.0, 3.0), 4.0, 1e-12);
}

TEST(TraceIntegrate, NegativeStartIsDomainError) {
    EXPECT_THROW(integrate_throughput(constant_trace(1.0), -0.1, 1.0), DomainError);
}

TEST(TraceIntegrate, WrapRepeatsPeriod) {
    // 1 Mbps on [0,2), 3 Mbps on [2,4), then repeat
    const Trace trace({{0.0, 1.0}, {2.0, 3.0}}, LoopMode::wrap);
    EXPECT_DOUBLE_EQ(trace.period(), 4.0); // last segment lasts as long as the one before it
    EXPECT_NEAR(integrate_throughput(trace, 0.0, 4.0), 2.0 + 6.0, 1e-12);
    EXPECT_NEAR(integrate_throughput(trace, 4.0, 4.0), 8.0, 1e-12);
    EXPECT_NEAR(integrate_throughput(trace, 3.0, 2.0), 3.0 + 1.0, 1e-12);
}

TEST(TraceIntegrate, AgreesWithRiemannOnRandomTraces) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto mode = seed % 2 ? LoopMode::wrap : LoopMode::hold_last;
        const auto trace = random_trace(seed, mode);
        Rng rng(seed + 100);
        const double t0 = rng.uniform(0.0, 30.0);
        const double dt = 1e-4;
        const double d = std::round(rng.uniform(0.0, 10.0) / dt) * dt;
        // the midpoint rule is exact except in steps straddling a breakpoint,
        // each of which is off by at most 10 Mbps * dt / 2
        EXPECT_NEAR(integrate_throughput(trace, t0, d), oracle::riemann_integral(trace, t0, d, dt), 0.03)
            << "seed " << seed;
    }
}

TEST(TraceIntegrate, MonotoneAndAdditive) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto trace = random_trace(seed, seed % 2 ? LoopMode::wrap : LoopMode::hold_last);
        Rng rng(seed * 7 + 1);
        const double t0 = rng.uniform(0.0, 50.0);
        const double d1 = rng.uniform(0.0, 20.0);
        const double d2 = rng.uniform(0.0, 20.0);
        const double whole = integrate_throughput(trace, t0, d1 + d2);
        const double parts = integrate_throughput(trace, t0, d1) + integrate_throughput(trace, t0 + d1, d2);
        EXPECT_NEAR(parts, whole, 1e-9 * std::max(1.0, whole));
        EXPECT_LE(integrate_throughput(trace, t0, d1), whole + 1e-12);
    }
}

TEST(TransferTime, Examples) {
    EXPECT_DOUBLE_EQ(transfer_time(constant_trace(1.0), 0.0, 4.0, 0.0), 4.0);
    EXPECT_NEAR(transfer_time(two_phase_hold(), 0.0, 4.0, 0.0), 3.0, 1e-12);
    EXPECT_NEAR(oracle::stepped_transfer(two_phase_hold(), 0.0, 4.0, 0.0), 3.0, 1e-6);
    EXPECT_NEAR(transfer_time(constant_trace(1.0), 0.0, 4.0, 0.08), 4.08, 1e-12);
    EXPECT_NEAR(oracle::stepped_transfer(constant_trace(1.0), 0.0, 4.0, 0.08), 4.08, 1e-6);
}

TEST(TransferTime, DomainErrors) {
    EXPECT_THROW(transfer_time(constant_trace(1.0), 0.0, 0.0, 0.0), DomainError);
    EXPECT_THROW(transfer_time(constant_trace(1.0), 0.0, -1.0, 0.0), DomainError);
    EXPECT_THROW(transfer_time(constant_trace(1.0), 0.0, 1.0, -0.1), DomainError);
    EXPECT_THROW(transfer_time(constant_trace(1.0), -1.0, 1.0, 0.0), DomainError);
}

TEST(TransferTime, InvertsIntegration) {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const auto trace = random_trace(seed, seed % 2 ? LoopMode::wrap : LoopMode::hold_last);
        Rng rng(seed * 13 + 5);
        const double t0 = rng.uniform(0.0, 40.0);
        const double rtt = rng.uniform(0.0, 0.2);
        const double volume = rng.uniform(0.01, seed % 10 == 0 ? 5000.0 : 50.0);
        const double tau = transfer_time(trace, t0, volume, rtt);
        EXPECT_NEAR(integrate_throughput(trace, t0 + rtt, tau - rtt), volume, 1e-9 * volume) << "seed " << seed;
    }
}

TEST(TransferTime, DoublingBandwidthHalvesDataPhase) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto trace = random_trace(seed, LoopMode::wrap);
        std::vector<TraceSample> doubled = trace.samples();
        for (auto& s : doubled) s.mbps *= 2.0;
        const Trace fast(doubled, LoopMode::wrap);
        Rng rng(seed);
        const double t0 = rng.uniform(0.0, 10.0);
        const double volume = rng.uniform(0.1, 40.0);
        const double slow_d = trace.data_time(t0, volume);
        // the doubled trace moves the same volume in exactly the data time of half the volume on the original
        EXPECT_NEAR(fast.data_time(t0, volume), trace.data_time(t0, volume / 2.0), 1e-12 * slow_d);
    }
    // piece-free case: strict halving
    EXPECT_DOUBLE_EQ(constant_trace(2.0).data_time(0.0, 3.0), constant_trace(1.0).data_time(0.0, 3.0) / 2.0);
}

TEST(LoadTrace, ParsesRows) {
    const auto t = load_trace("0.0,1.0\n1.0,2.0");
    ASSERT_EQ(t.samples().size(), 2u);
    EXPECT_EQ(t.samples()[1], (TraceSample{1.0, 2.0}));
}

TEST(LoadTrace, SkipsCommentLines) {
    const auto t = load_trace("# seed=3\n0,1.5\n\n# mid\n2,0.5\n");
    ASSERT_EQ(t.samples().size(), 2u);
    EXPECT_EQ(t.samples()[1].mbps, 0.5);
}

TEST(LoadTrace, RejectsBadInput) {
    EXPECT_THROW(load_trace("0.0,-1.0"), ParseError);
    EXPECT_THROW(load_trace(""), ParseError);
    EXPECT_THROW(load_trace("\n\n"), ParseError);
    EXPECT_THROW(load_trace("0,1\n0.5,abc\n"), ParseError);
    EXPECT_THROW(load_trace("0,1,2\n"), ParseError);
    EXPECT_THROW(load_trace("1,1\n"), ParseError);
    try {
        load_trace("0,1\n2,1\n1,1\n");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(LoadTrace, CsvRoundTripIsExact) {
    const auto t = synth_trace(11, {.mean_mbps = 3.3, .volatility = 0.4, .duration_s = 50.0, .step_s = 0.7});
    const auto back = load_trace(to_csv(t));
    EXPECT_EQ(back.samples(), t.samples());
}

TEST(SynthTrace, ZeroVolatilityIsConstant) {
    const auto t = synth_trace(5, {.mean_mbps = 2.5, .volatility = 0.0, .duration_s = 30.0, .step_s = 1.0});
    EXPECT_EQ(t.samples().size(), 30u);
    for (const auto& s : t.samples()) EXPECT_EQ(s.mbps, 2.5);
    EXPECT_TRUE(t.is_constant());
}

TEST(SynthTrace, DeterministicInSeed) {
    const SynthModel model{.mean_mbps = 2.0, .volatility = 0.3, .duration_s = 100.0, .step_s = 1.0};
    EXPECT_EQ(to_csv(synth_trace(7, model)), to_csv(synth_trace(7, model)));
    EXPECT_NE(to_csv(synth_trace(7, model)), to_csv(synth_trace(8, model)));
}

TEST(SynthTrace, ClampBounds) {
    const auto t = synth_trace(7, {.mean_mbps = 2.0, .volatility = 0.3, .duration_s = 400.0, .step_s = 1.0});
    for (const auto& s : t.samples()) {
        EXPECT_GE(s.mbps, 0.1);
        EXPECT_LE(s.mbps, 40.0);
    }
    // strong volatility actually reaches the clamps
    const auto wild = synth_trace(7, {.mean_mbps = 2.0, .volatility = 0.99, .duration_s = 2000.0, .step_s = 1.0});
    double lo = 1e9, hi = 0.0;
    for (const auto& s : wild.samples()) {
        lo = std::min(lo, s.mbps);
        hi = std::max(hi, s.mbps);
    }
    EXPECT_DOUBLE_EQ(lo, 0.1);
    EXPECT_DOUBLE_EQ(hi, 40.0);
}

TEST(SynthTrace, RejectsBadModels) {
    EXPECT_THROW(synth_trace(1, {.mean_mbps = 0.0}), DomainError);
    EXPECT_THROW(synth_trace(1, {.volatility = 1.0}), DomainError);
    EXPECT_THROW(synth_trace(1, {.volatility = -0.1}), DomainError);
    EXPECT_THROW(synth_trace(1, {.step_s = 0.0}), DomainError);
}

TEST(TraceInvariants, ConstructorRejectsViolations) {
    EXPECT_THROW(Trace({}), DomainError);
    EXPECT_THROW(Trace({{0.5, 1.0}}), DomainError);
    EXPECT_THROW(Trace({{0.0, 1.0}, {0.0, 2.0}}), DomainError);
    EXPECT_THROW(Trace({{0.0, 0.0}}), DomainError);
}

} // namespace
} // namespace abrbench
