#pragma once

// Chunk-by-chunk DASH session engine.
//
// Per chunk: download time from the trace (RTT dead time + data phase),
// rebuffer e = [tau - b]^+, buffer b' = [b - tau]^+ + L, and when b' exceeds
// the cap the client sleeps until it drains back to B. Sleeping advances the
// clock but moves no data.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "abrbench/errors.hpp"
#include "abrbench/media.hpp"
#include "abrbench/trace.hpp"

namespace abrbench {

inline constexpr int kDefaultHistory = 8;

struct SessionState {
    int next_chunk = 0; ///< 0-based index of the chunk about to be fetched
    int chunk_count = 0;
    double clock_s = 0.0;
    double buffer_s = 0.0;
    std::optional<Level> last_level;
    // Full per-chunk history, oldest first. The observation and the
    // predictors only ever read the most recent k entries.
    std::vector<double> download_times_s;
    std::vector<double> throughputs_mbps;

    int remaining() const noexcept { return chunk_count - next_chunk; }
    bool terminal() const noexcept { return next_chunk >= chunk_count; }

    std::span<const double> recent_throughputs(int k) const {
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), throughputs_mbps.size());
        return std::span<const double>(throughputs_mbps).last(n);
    }
};

inline SessionState initial_state(const VideoManifest& manifest, double start_offset_s = 0.0) {
    if (start_offset_s < 0.0) throw DomainError("negative session start offset");
    SessionState s;
    s.chunk_count = manifest.chunk_count();
    s.clock_s = start_offset_s;
    return s;
}

/// Buffer bookkeeping for one chunk, shared by the simulator and every
/// planner so their dynamics cannot drift apart.
struct BufferTransition {
    double rebuffer_s;
    double sleep_s;
    double buffer_after_s;
};

inline BufferTransition advance_buffer(double buffer_s, double download_s, double chunk_duration_s,
                                       double buffer_cap_s) {
    BufferTransition t{};
    t.rebuffer_s = std::max(0.0, download_s - buffer_s);
    const double filled = std::max(0.0, buffer_s - download_s) + chunk_duration_s;
    t.sleep_s = std::max(0.0, filled - buffer_cap_s);
    t.buffer_after_s = filled - t.sleep_s;
    return t;
}

/// advance_buffer plus the startup rule: chunk 0's stall is not rebuffering
/// unless the QoE parameters say so.
inline BufferTransition chunk_transition(const QoEParams& params, double chunk_duration_s, int chunk,
                                         double buffer_s, double download_s) {
    auto t = advance_buffer(buffer_s, download_s, chunk_duration_s, params.buffer_cap_s);
    if (chunk == 0 && !params.startup_stall_is_rebuffer) t.rebuffer_s = 0.0;
    return t;
}

struct RewardTerms {
    double utility;
    double rebuffer_penalty;
    double switch_penalty;

    double reward() const noexcept { return utility - rebuffer_penalty - switch_penalty; }
};

/// Per-chunk reward terms; no switch term for the first chunk of a session.
inline RewardTerms chunk_reward(const QoEParams& params, double quality, std::optional<double> previous_quality,
                                double rebuffer_s) {
    return {quality, params.alpha1 * rebuffer_s,
            previous_quality ? params.alpha2 * std::abs(quality - *previous_quality) : 0.0};
}

struct StepOutcome {
    int chunk = 0;
    Level level = 0;
    double bitrate_mbps = 0.0;
    double clock_start_s = 0.0;
    double buffer_before_s = 0.0;
    double download_time_s = 0.0;
    double rebuffer_s = 0.0;
    double sleep_s = 0.0;
    double buffer_after_s = 0.0;
    double throughput_mbps = 0.0;
    double utility = 0.0;
    double rebuffer_penalty = 0.0;
    double switch_penalty = 0.0;
    double reward = 0.0;
};

/// Downloads the next chunk at `level`. Returns the outcome and the successor state.
inline std::pair<StepOutcome, SessionState> step(const SessionState& state, const Trace& trace,
                                                 const VideoManifest& manifest, const QoEParams& params,
                                                 Level level) {
    if (state.terminal()) throw UsageError("step on a finished session");
    if (level < 0 || level >= manifest.level_count())
        throw DomainError("level " + std::to_string(level) + " is not on the ladder");

    const double size = manifest.size(state.next_chunk, level);
    const double tau = transfer_time(trace, state.clock_s, size, params.rtt_s);
    const auto buf = chunk_transition(params, manifest.chunk_duration(), state.next_chunk, state.buffer_s, tau);
    std::optional<double> prev_q;
    if (state.last_level) prev_q = level_quality(manifest, params, *state.last_level);
    const auto terms = chunk_reward(params, level_quality(manifest, params, level), prev_q, buf.rebuffer_s);

    StepOutcome out;
    out.chunk = state.next_chunk;
    out.level = level;
    out.bitrate_mbps = manifest.bitrate(level);
    out.clock_start_s = state.clock_s;
    out.buffer_before_s = state.buffer_s;
    out.download_time_s = tau;
    out.rebuffer_s = buf.rebuffer_s;
    out.sleep_s = buf.sleep_s;
    out.buffer_after_s = buf.buffer_after_s;
    out.throughput_mbps = size / (tau - params.rtt_s);
    out.utility = terms.utility;
    out.rebuffer_penalty = terms.rebuffer_penalty;
    out.switch_penalty = terms.switch_penalty;
    out.reward = terms.reward();

    SessionState next = state;
    next.next_chunk += 1;
    next.clock_s = state.clock_s + tau + buf.sleep_s;
    next.buffer_s = buf.buffer_after_s;
    next.last_level = level;
    next.download_times_s.push_back(tau);
    next.throughputs_mbps.push_back(out.throughput_mbps);
    return {out, std::move(next)};
}

// Observation layout (length 2k + |R| + 3):
//   [0, k)            past measured throughputs / max bitrate, oldest first, zero-padded in front
//   [k, 2k)           past download times / 10 s, same ordering
//   [2k, 2k+|R|)      next chunk's sizes by level / largest of them (zeros once finished)
//   2k+|R|            q(last level) / q(top level), 0 before the first chunk
//   2k+|R|+1          buffer / B
//   2k+|R|+2          remaining chunks / I
// Throughput and download-time entries are capped at kObservationCap.
inline constexpr double kObservationCap = 20.0;
inline constexpr double kDownloadTimeScale = 10.0;

inline std::size_t observation_size(int history_k, int level_count) {
    return static_cast<std::size_t>(2 * history_k + level_count + 3);
}

inline std::vector<double> observe(const SessionState& state, const VideoManifest& manifest,
                                   const QoEParams& params, int history_k = kDefaultHistory) {
    const auto k = static_cast<std::size_t>(history_k);
    const auto levels = static_cast<std::size_t>(manifest.level_count());
    std::vector<double> obs(observation_size(history_k, manifest.level_count()), 0.0);

    const std::size_t have = std::min(k, state.throughputs_mbps.size());
    const std::size_t first = state.throughputs_mbps.size() - have;
    for (std::size_t j = 0; j < have; ++j) {
        const std::size_t slot = k - have + j;
        obs[slot] = std::min(kObservationCap, state.throughputs_mbps[first + j] / manifest.max_bitrate());
        obs[k + slot] = std::min(kObservationCap, state.download_times_s[first + j] / kDownloadTimeScale);
    }
    if (!state.terminal()) {
        const double largest = manifest.size(state.next_chunk, manifest.top_level());
        for (std::size_t l = 0; l < levels; ++l)
            obs[2 * k + l] = manifest.size(state.next_chunk, static_cast<Level>(l)) / largest;
    }
    if (state.last_level)
        obs[2 * k + levels] = level_quality(manifest, params, *state.last_level) /
                              level_quality(manifest, params, manifest.top_level());
    obs[2 * k + levels + 1] = state.buffer_s / params.buffer_cap_s;
    obs[2 * k + levels + 2] = static_cast<double>(state.remaining()) / manifest.chunk_count();
    return obs;
}

/// A policy maps the current session state to the next level.
using DecisionFn = std::function<Level(const SessionState&)>;

struct SessionLog {
    std::vector<StepOutcome> steps;
    double total_qoe = 0.0;
    std::string trace_id;
    std::string policy_id;
    std::uint64_t seed = 0;
};

inline SessionLog run_session(const DecisionFn& policy, const Trace& trace, const VideoManifest& manifest,
                              const QoEParams& params, double start_offset_s = 0.0) {
    SessionLog log;
    log.trace_id = trace.id();
    log.steps.reserve(static_cast<std::size_t>(manifest.chunk_count()));
    SessionState state = initial_state(manifest, start_offset_s);
    while (!state.terminal()) {
        const Level level = policy(state);
        auto [outcome, next] = step(state, trace, manifest, params, level);
        log.total_qoe += outcome.reward;
        log.steps.push_back(outcome);
        state = std::move(next);
    }
    return log;
}

inline nlohmann::json to_json(const StepOutcome& s) {
    return {
        {"chunk", s.chunk},
        {"level", s.level},
        {"bitrate_mbps", s.bitrate_mbps},
        {"clock_start_s", s.clock_start_s},
        {"buffer_before_s", s.buffer_before_s},
        {"download_time_s", s.download_time_s},
        {"rebuffer_s", s.rebuffer_s},
        {"sleep_s", s.sleep_s},
        {"buffer_after_s", s.buffer_after_s},
        {"throughput_mbps", s.throughput_mbps},
        {"utility", s.utility},
        {"rebuffer_penalty", s.rebuffer_penalty},
        {"switch_penalty", s.switch_penalty},
        {"reward", s.reward},
    };
}

/// JSON-lines: one record per chunk, then a summary record with `"summary": true`.
inline std::string to_jsonl(const SessionLog& log, const nlohmann::json& config = nullptr) {
    std::string out;
    for (const auto& s : log.steps) {
        out += to_json(s).dump();
        out += '\n';
    }
    nlohmann::json summary = {
        {"summary", true},      {"trace_id", log.trace_id}, {"policy_id", log.policy_id},
        {"seed", log.seed},     {"chunks", log.steps.size()}, {"total_qoe", log.total_qoe},
    };
    if (!config.is_null()) summary["config"] = config;
    out += summary.dump();
    out += '\n';
    return out;
}

} // namespace abrbench
