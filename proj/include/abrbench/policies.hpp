#pragma once

// Online baselines: buffer-based heuristic, RobustMPC (harmonic-mean
// prediction discounted by recent prediction error, exhaustive horizon
// search), fixed level, and seeded random.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abrbench/errors.hpp"
#include "abrbench/media.hpp"
#include "abrbench/rng.hpp"
#include "abrbench/simulator.hpp"

namespace abrbench {

enum class PolicyKind { buffer_based, robust_mpc, fixed, random };

inline std::string_view to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::buffer_based: return "buffer_based";
    case PolicyKind::robust_mpc: return "robust_mpc";
    case PolicyKind::fixed: return "fixed";
    case PolicyKind::random: return "random";
    }
    return "unknown";
}

inline std::optional<PolicyKind> parse_policy_kind(std::string_view name) {
    for (auto k : {PolicyKind::buffer_based, PolicyKind::robust_mpc, PolicyKind::fixed, PolicyKind::random})
        if (name == to_string(k)) return k;
    return std::nullopt;
}

struct PolicyConfig {
    PolicyKind kind = PolicyKind::buffer_based;
    Level fixed_level = 0;
    std::uint64_t seed = 0;
    int mpc_horizon = 5;
    int history_k = kDefaultHistory;
    double reservoir_s = 5.0;
    double cushion_s = 10.0;
    bool robust_discount = true; ///< divide the prediction by (1 + max recent error)

    void validate(const QoEParams& params) const {
        if (mpc_horizon < 1) throw DomainError("policy: mpc_horizon must be >= 1");
        if (history_k < 1) throw DomainError("policy: history k must be >= 1");
        if (!(reservoir_s >= 0.0 && cushion_s > 0.0)) throw DomainError("policy: bad reservoir/cushion");
        if (reservoir_s + cushion_s > params.buffer_cap_s)
            throw DomainError("policy: reservoir + cushion exceeds the buffer cap");
    }
};

inline double harmonic_mean(std::span<const double> samples) {
    if (samples.empty()) throw DomainError("harmonic_mean of no samples");
    double inv = 0.0;
    for (double x : samples) {
        if (!(x > 0.0)) throw DomainError("harmonic_mean needs positive samples");
        inv += 1.0 / x;
    }
    return static_cast<double>(samples.size()) / inv;
}

/// Reservoir/cushion map from buffer level to the highest level whose
/// quality does not exceed the interpolated target.
inline Level decide_buffer_based(const SessionState& state, const VideoManifest& manifest,
                                 const QoEParams& params, const PolicyConfig& cfg) {
    if (state.buffer_s <= cfg.reservoir_s) return 0;
    if (state.buffer_s >= cfg.reservoir_s + cfg.cushion_s) return manifest.top_level();
    const double q_lo = level_quality(manifest, params, 0);
    const double q_hi = level_quality(manifest, params, manifest.top_level());
    const double target = q_lo + (q_hi - q_lo) * (state.buffer_s - cfg.reservoir_s) / cfg.cushion_s;
    Level chosen = 0;
    for (Level l = 0; l <= manifest.top_level(); ++l)
        if (level_quality(manifest, params, l) <= target) chosen = l;
    return chosen;
}

/// Largest relative error of the harmonic-mean predictor over the last k
/// measurements, each predicted from the (up to) k measurements before it.
inline double max_recent_prediction_error(std::span<const double> throughputs, int k) {
    const auto n = throughputs.size();
    const auto window = static_cast<std::size_t>(k);
    double worst = 0.0;
    const std::size_t from = n > window ? n - window : 0;
    for (std::size_t j = std::max<std::size_t>(from, 1); j < n; ++j) {
        const std::size_t lo = j > window ? j - window : 0;
        const double predicted = harmonic_mean(throughputs.subspan(lo, j - lo));
        worst = std::max(worst, std::abs(predicted - throughputs[j]) / throughputs[j]);
    }
    return worst;
}

/// Throughput forecast used by RobustMPC; empty before any measurement.
inline std::optional<double> robust_prediction(const SessionState& state, const PolicyConfig& cfg) {
    if (state.throughputs_mbps.empty()) return std::nullopt;
    const double hm = harmonic_mean(state.recent_throughputs(cfg.history_k));
    if (!cfg.robust_discount) return hm;
    return hm / (1.0 + max_recent_prediction_error(state.throughputs_mbps, cfg.history_k));
}

namespace detail {

// Relative slack under which two objectives count as a tie; ties go to the
// lexicographically smaller level sequence.
inline double tie_tolerance(double a, double b) {
    return 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

inline bool better_plan(double value, std::span<const Level> seq, double best_value,
                        std::span<const Level> best_seq) {
    if (best_seq.empty()) return true;
    const double tol = tie_tolerance(value, best_value);
    if (value > best_value + tol) return true;
    if (value < best_value - tol) return false;
    return std::lexicographical_compare(seq.begin(), seq.end(), best_seq.begin(), best_seq.end());
}

} // namespace detail

/// Best level sequence over `horizon` chunks assuming every chunk downloads
/// at `throughput_mbps` (plus RTT), scored with the session QoE terms.
/// Exhaustive; ties go to the lexicographically smallest sequence.
inline std::vector<Level> plan_constant_throughput(const SessionState& state, const VideoManifest& manifest,
                                                   const QoEParams& params, double throughput_mbps, int horizon) {
    const int levels = manifest.level_count();
    std::vector<Level> seq(static_cast<std::size_t>(horizon));
    std::vector<Level> best;
    double best_value = -std::numeric_limits<double>::infinity();

    auto recurse = [&](auto&& self, int depth, double buffer, std::optional<double> prev_q, double value) -> void {
        if (depth == horizon) {
            if (detail::better_plan(value, seq, best_value, best)) {
                best_value = value;
                best = seq;
            }
            return;
        }
        const int chunk = state.next_chunk + depth;
        for (Level l = 0; l < levels; ++l) {
            const double tau = params.rtt_s + manifest.size(chunk, l) / throughput_mbps;
            const auto buf = chunk_transition(params, manifest.chunk_duration(), chunk, buffer, tau);
            const double q = level_quality(manifest, params, l);
            const auto terms = chunk_reward(params, q, prev_q, buf.rebuffer_s);
            seq[static_cast<std::size_t>(depth)] = l;
            self(self, depth + 1, buf.buffer_after_s, q, value + terms.reward());
        }
    };
    std::optional<double> prev_q;
    if (state.last_level) prev_q = level_quality(manifest, params, *state.last_level);
    recurse(recurse, 0, state.buffer_s, prev_q, 0.0);
    return best;
}

inline Level decide_robust_mpc(const SessionState& state, const VideoManifest& manifest,
                               const QoEParams& params, const PolicyConfig& cfg) {
    if (state.terminal()) throw UsageError("robust_mpc: session already finished");
    const auto predicted = robust_prediction(state, cfg);
    if (!predicted) return 0;
    const int horizon = std::min(cfg.mpc_horizon, state.remaining());
    return plan_constant_throughput(state, manifest, params, *predicted, horizon).front();
}

/// Wraps a configuration as a session decision callback. Random policies
/// own their generator, so build one instance per session.
inline DecisionFn make_policy(const PolicyConfig& cfg, const VideoManifest& manifest, const QoEParams& params) {
    cfg.validate(params);
    switch (cfg.kind) {
    case PolicyKind::buffer_based:
        return [cfg, &manifest, &params](const SessionState& s) {
            return decide_buffer_based(s, manifest, params, cfg);
        };
    case PolicyKind::robust_mpc:
        return [cfg, &manifest, &params](const SessionState& s) {
            return decide_robust_mpc(s, manifest, params, cfg);
        };
    case PolicyKind::fixed:
        if (cfg.fixed_level < 0 || cfg.fixed_level > manifest.top_level())
            throw DomainError("fixed policy level out of range");
        return [level = cfg.fixed_level](const SessionState&) { return level; };
    case PolicyKind::random: {
        auto rng = std::make_shared<Rng>(cfg.seed);
        const auto n = static_cast<std::size_t>(manifest.level_count());
        return [rng, n](const SessionState&) { return static_cast<Level>(rng->index(n)); };
    }
    }
    throw UsageError("unknown policy kind");
}

} // namespace abrbench
