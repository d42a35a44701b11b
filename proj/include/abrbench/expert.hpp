#pragma once

// Offline expert for the horizon-N bitrate problem with known future
// throughput.
//
// solve_expert_ao alternates between
//   (a) picking levels given per-chunk average throughputs cbar
//       (solve_fixed_throughput: exact branch-and-bound over the integer
//       levels; for fixed levels the rebuffer slacks bind, so the continuous
//       part is plain simulation), and
//   (b) re-estimating cbar from the true trace for those levels
//       (estimate_chunk_throughput),
// until cbar stops moving. solve_expert_enum and solve_expert_dp are the
// exhaustive and grid-DP references.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string_view>
#include <tuple>
#include <vector>

#include "abrbench/errors.hpp"
#include "abrbench/media.hpp"
#include "abrbench/policies.hpp"
#include "abrbench/simulator.hpp"
#include "abrbench/trace.hpp"

namespace abrbench {

struct ExpertProblem {
    SessionState start;
    int horizon = 8; ///< requested N; truncated at the end of the video
    const Trace* trace = nullptr;
    const VideoManifest* manifest = nullptr;
    const QoEParams* params = nullptr;
    int history_k = kDefaultHistory;

    int effective_horizon() const { return std::min(horizon, start.remaining()); }

    void validate() const {
        if (!trace || !manifest || !params) throw UsageError("expert problem is missing its inputs");
        if (horizon < 1) throw DomainError("expert horizon must be >= 1");
        if (start.terminal()) throw UsageError("expert problem starts after the last chunk");
    }
};

inline ExpertProblem make_problem(const SessionState& state, int horizon, const Trace& trace,
                                  const VideoManifest& manifest, const QoEParams& params,
                                  int history_k = kDefaultHistory) {
    ExpertProblem p{state, horizon, &trace, &manifest, &params, history_k};
    p.validate();
    return p;
}

enum class Optimality { exact, heuristic };

inline std::string_view to_string(Optimality o) { return o == Optimality::exact ? "exact" : "heuristic"; }

struct ExpertSolution {
    std::vector<Level> levels;
    std::vector<double> cbar_mbps;
    std::vector<double> download_times_s;
    std::vector<double> start_times_s;
    std::vector<double> buffers_s;   ///< buffer when each chunk starts downloading
    std::vector<double> rebuffers_s;
    std::vector<double> sleeps_s;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    Optimality optimality = Optimality::heuristic;
};

/// Plays `levels` on the true trace from the problem's start state. Fills
/// everything but the solver bookkeeping fields.
inline ExpertSolution rollout(const ExpertProblem& problem, std::span<const Level> levels) {
    const auto& m = *problem.manifest;
    const auto& p = *problem.params;
    ExpertSolution sol;
    sol.levels.assign(levels.begin(), levels.end());
    double clock = problem.start.clock_s;
    double buffer = problem.start.buffer_s;
    std::optional<double> prev_q;
    if (problem.start.last_level) prev_q = level_quality(m, p, *problem.start.last_level);
    for (std::size_t j = 0; j < levels.size(); ++j) {
        const int chunk = problem.start.next_chunk + static_cast<int>(j);
        const double size = m.size(chunk, levels[j]);
        const double tau = transfer_time(*problem.trace, clock, size, p.rtt_s);
        const auto buf = chunk_transition(p, m.chunk_duration(), chunk, buffer, tau);
        const double q = level_quality(m, p, levels[j]);
        sol.objective += chunk_reward(p, q, prev_q, buf.rebuffer_s).reward();
        sol.start_times_s.push_back(clock);
        sol.buffers_s.push_back(buffer);
        sol.download_times_s.push_back(tau);
        sol.rebuffers_s.push_back(buf.rebuffer_s);
        sol.sleeps_s.push_back(buf.sleep_s);
        sol.cbar_mbps.push_back(size / (tau - p.rtt_s));
        clock += tau + buf.sleep_s;
        buffer = buf.buffer_after_s;
        prev_q = q;
    }
    return sol;
}

/// Chunk-average data-phase throughput of each chunk when `levels` are
/// played on the true trace. The download schedule is unique given levels.
inline std::vector<double> estimate_chunk_throughput(const ExpertProblem& problem, std::span<const Level> levels) {
    return rollout(problem, levels).cbar_mbps;
}

struct FixedThroughputSolution {
    std::vector<Level> levels;
    double objective = 0.0;
    std::uint64_t nodes = 0; ///< search nodes expanded
};

/// Exact optimum of the horizon QoE when chunk j downloads in
/// rtt + s_j(r_j) / cbar[j]. Depth-first branch-and-bound: the bound adds
/// top quality for every remaining chunk with zero penalties; children are
/// tried best immediate reward first. Ties go to the lexicographically
/// smallest level sequence.
inline FixedThroughputSolution solve_fixed_throughput(const ExpertProblem& problem, std::span<const double> cbar) {
    problem.validate();
    const int horizon = problem.effective_horizon();
    if (static_cast<int>(cbar.size()) < horizon) throw UsageError("cbar shorter than the horizon");
    for (int j = 0; j < horizon; ++j)
        if (!(cbar[static_cast<std::size_t>(j)] > 0.0)) throw DomainError("cbar must be positive");

    const auto& m = *problem.manifest;
    const auto& p = *problem.params;
    const int levels = m.level_count();
    const double q_top = level_quality(m, p, m.top_level());

    FixedThroughputSolution out;
    std::vector<Level> prefix(static_cast<std::size_t>(horizon));
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<Level> best;

    struct Child {
        Level level;
        double reward;
        double buffer_after;
        double quality;
    };
    std::vector<std::vector<Child>> scratch(static_cast<std::size_t>(horizon),
                                            std::vector<Child>(static_cast<std::size_t>(levels)));

    auto search = [&](auto&& self, int depth, double buffer, std::optional<double> prev_q, double value) -> void {
        ++out.nodes;
        if (depth == horizon) {
            if (detail::better_plan(value, prefix, best_value, best)) {
                best_value = value;
                best = prefix;
            }
            return;
        }
        if (!best.empty()) {
            const double bound = value + (horizon - depth) * q_top;
            const double tol = detail::tie_tolerance(bound, best_value);
            if (bound < best_value - tol) return;
            if (bound <= best_value + tol &&
                std::lexicographical_compare(best.begin(), best.begin() + depth, prefix.begin(),
                                             prefix.begin() + depth))
                return;
        }
        const int chunk = problem.start.next_chunk + depth;
        auto& children = scratch[static_cast<std::size_t>(depth)];
        for (Level l = 0; l < levels; ++l) {
            const double tau = p.rtt_s + m.size(chunk, l) / cbar[static_cast<std::size_t>(depth)];
            const auto buf = chunk_transition(p, m.chunk_duration(), chunk, buffer, tau);
            const double q = level_quality(m, p, l);
            children[static_cast<std::size_t>(l)] = {l, chunk_reward(p, q, prev_q, buf.rebuffer_s).reward(),
                                                      buf.buffer_after_s, q};
        }
        std::stable_sort(children.begin(), children.end(),
                         [](const Child& a, const Child& b) { return a.reward > b.reward; });
        for (const auto& c : children) {
            prefix[static_cast<std::size_t>(depth)] = c.level;
            self(self, depth + 1, c.buffer_after, c.quality, value + c.reward);
        }
    };

    std::optional<double> prev_q;
    if (problem.start.last_level) prev_q = level_quality(m, p, *problem.start.last_level);
    search(search, 0, problem.start.buffer_s, prev_q, 0.0);
    out.levels = std::move(best);
    out.objective = best_value;
    return out;
}

struct AoOptions {
    int max_iterations = 20;
    double tolerance = 1e-6; ///< max relative change of cbar that counts as a fixed point
    bool fixed_level_candidates = true; ///< also score every constant-level sequence
};

/// Alternating optimization. Every iterate is scored on the true trace and
/// the best one is returned, so the output is feasible even if the loop
/// cycles or settles on a poor fixed point. Constant-level sequences join the
/// candidate pool unless disabled.
inline ExpertSolution solve_expert_ao(const ExpertProblem& problem, const AoOptions& opts = {}) {
    problem.validate();
    const int horizon = problem.effective_horizon();
    std::vector<double> cbar;
    if (!problem.start.throughputs_mbps.empty()) {
        cbar.assign(static_cast<std::size_t>(horizon),
                    harmonic_mean(problem.start.recent_throughputs(problem.history_k)));
    } else {
        const std::vector<Level> lowest(static_cast<std::size_t>(horizon), 0);
        cbar = estimate_chunk_throughput(problem, lowest);
    }

    ExpertSolution best;
    bool have_best = false;
    auto consider = [&](ExpertSolution candidate) {
        if (!have_best || detail::better_plan(candidate.objective, candidate.levels, best.objective, best.levels)) {
            best = std::move(candidate);
            have_best = true;
        }
    };
    if (opts.fixed_level_candidates)
        for (Level l = 0; l < problem.manifest->level_count(); ++l)
            consider(rollout(problem, std::vector<Level>(static_cast<std::size_t>(horizon), l)));

    int iterations = 0;
    bool converged = false;
    while (iterations < opts.max_iterations) {
        ++iterations;
        const auto fixed = solve_fixed_throughput(problem, cbar);
        ExpertSolution candidate = rollout(problem, fixed.levels);
        const auto updated = candidate.cbar_mbps;
        consider(std::move(candidate));
        double change = 0.0;
        for (std::size_t j = 0; j < cbar.size(); ++j)
            change = std::max(change, std::abs(updated[j] - cbar[j]) / cbar[j]);
        if (change <= opts.tolerance) {
            converged = true;
            break;
        }
        cbar = updated;
    }
    best.iterations = iterations;
    best.converged = converged;
    best.optimality = problem.trace->is_constant() ? Optimality::exact : Optimality::heuristic;
    return best;
}

inline constexpr double kDefaultEnumBudget = 2e6;

/// Exhaustive search over all |R|^N sequences on the true trace.
inline ExpertSolution solve_expert_enum(const ExpertProblem& problem, double leaf_budget = kDefaultEnumBudget) {
    problem.validate();
    const auto& m = *problem.manifest;
    const auto& p = *problem.params;
    const int horizon = problem.effective_horizon();
    const int levels = m.level_count();
    const double leaves = std::pow(static_cast<double>(levels), horizon);
    if (leaves > leaf_budget)
        throw RefusalError("enumeration needs " + std::to_string(leaves) + " leaves, budget is " +
                           std::to_string(leaf_budget));

    std::vector<Level> seq(static_cast<std::size_t>(horizon));
    std::vector<Level> best;
    double best_value = -std::numeric_limits<double>::infinity();
    auto recurse = [&](auto&& self, int depth, double clock, double buffer, std::optional<double> prev_q,
                       double value) -> void {
        if (depth == horizon) {
            if (detail::better_plan(value, seq, best_value, best)) {
                best_value = value;
                best = seq;
            }
            return;
        }
        const int chunk = problem.start.next_chunk + depth;
        for (Level l = 0; l < levels; ++l) {
            const double tau = transfer_time(*problem.trace, clock, m.size(chunk, l), p.rtt_s);
            const auto buf = chunk_transition(p, m.chunk_duration(), chunk, buffer, tau);
            const double q = level_quality(m, p, l);
            seq[static_cast<std::size_t>(depth)] = l;
            self(self, depth + 1, clock + tau + buf.sleep_s, buf.buffer_after_s, q,
                 value + chunk_reward(p, q, prev_q, buf.rebuffer_s).reward());
        }
    };
    std::optional<double> prev_q;
    if (problem.start.last_level) prev_q = level_quality(m, p, *problem.start.last_level);
    recurse(recurse, 0, problem.start.clock_s, problem.start.buffer_s, prev_q, 0.0);

    ExpertSolution sol = rollout(problem, best);
    sol.iterations = 1;
    sol.converged = true;
    sol.optimality = Optimality::exact;
    return sol;
}

/// Forward dynamic program over (last level, buffer, clock), with buffer and
/// clock snapped to a grid of `grid_s` seconds after every transition. The
/// first decision is taken from the exact start state. Approximate; the
/// returned objective is the true-trace score of the chosen sequence.
inline ExpertSolution solve_expert_dp(const ExpertProblem& problem, double grid_s) {
    problem.validate();
    if (!(grid_s > 0.0)) throw DomainError("dp grid step must be positive");
    const auto& m = *problem.manifest;
    const auto& p = *problem.params;
    const int horizon = problem.effective_horizon();
    const int levels = m.level_count();

    struct Node {
        double value;
        double buffer;
        double clock;
        std::vector<Level> seq;
    };
    using Key = std::tuple<Level, std::int64_t, std::int64_t>;

    std::vector<Node> frontier;
    frontier.push_back({0.0, problem.start.buffer_s, problem.start.clock_s, {}});
    std::optional<Level> start_level = problem.start.last_level;

    for (int depth = 0; depth < horizon; ++depth) {
        const int chunk = problem.start.next_chunk + depth;
        std::map<Key, Node> next;
        for (const auto& node : frontier) {
            std::optional<double> prev_q;
            if (!node.seq.empty()) prev_q = level_quality(m, p, node.seq.back());
            else if (start_level) prev_q = level_quality(m, p, *start_level);
            for (Level l = 0; l < levels; ++l) {
                const double tau = transfer_time(*problem.trace, node.clock, m.size(chunk, l), p.rtt_s);
                const auto buf = chunk_transition(p, m.chunk_duration(), chunk, node.buffer, tau);
                const double q = level_quality(m, p, l);
                const double value = node.value + chunk_reward(p, q, prev_q, buf.rebuffer_s).reward();
                const auto b_bin = std::llround(buf.buffer_after_s / grid_s);
                const auto t_bin = std::llround((node.clock + tau + buf.sleep_s) / grid_s);
                std::vector<Level> seq = node.seq;
                seq.push_back(l);
                const Key key{l, b_bin, t_bin};
                auto it = next.find(key);
                if (it == next.end()) {
                    next.emplace(key, Node{value, static_cast<double>(b_bin) * grid_s,
                                           static_cast<double>(t_bin) * grid_s, std::move(seq)});
                } else if (detail::better_plan(value, seq, it->second.value, it->second.seq)) {
                    it->second.value = value;
                    it->second.seq = std::move(seq);
                }
            }
        }
        frontier.clear();
        for (auto& [key, node] : next) frontier.push_back(std::move(node));
    }

    const Node* best = nullptr;
    for (const auto& node : frontier)
        if (!best || detail::better_plan(node.value, node.seq, best->value, best->seq)) best = &node;

    ExpertSolution sol = rollout(problem, best->seq);
    sol.iterations = 1;
    sol.converged = true;
    sol.optimality = horizon == 1 ? Optimality::exact : Optimality::heuristic;
    return sol;
}

} // namespace abrbench
